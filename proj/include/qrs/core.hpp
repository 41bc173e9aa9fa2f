#pragma once

#include <compare>
#include <cstddef>
#include <initializer_list>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace qrs {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: negative rates, transitions that change the macrostate by
/// something other than 0 or a unit vector, missing empty state.
class StructuralError : public Error {
 public:
  using Error::Error;
};

class SolverError : public Error {
 public:
  using Error::Error;
};

/// A model specification violates its own invariants (rates, monotonicity...).
class SpecError : public Error {
 public:
  using Error::Error;
};

/// Mismatched or non-Ferrers domains.
class DomainError : public Error {
 public:
  using Error::Error;
};

class UnsupportedError : public Error {
 public:
  using Error::Error;
};

inline constexpr double kDefaultTol = 1e-9;

/// Number of customers of each class.
struct Macrostate {
  std::vector<int> counts;

  Macrostate() = default;
  explicit Macrostate(std::vector<int> c) : counts(std::move(c)) {}
  Macrostate(std::initializer_list<int> c) : counts(c) {}

  static Macrostate zero(int n) { return Macrostate(std::vector<int>(static_cast<std::size_t>(n), 0)); }

  int dim() const { return static_cast<int>(counts.size()); }
  int operator[](int i) const { return counts[static_cast<std::size_t>(i)]; }
  int& operator[](int i) { return counts[static_cast<std::size_t>(i)]; }

  int total() const;
  bool is_zero() const;
  Macrostate plus(int i) const;
  Macrostate minus(int i) const;
  /// Componentwise order.
  bool leq(const Macrostate& other) const;
  std::string str() const;

  auto operator<=>(const Macrostate&) const = default;
  bool operator==(const Macrostate&) const = default;
};

std::ostream& operator<<(std::ostream& os, const Macrostate& x);

/// Finite coordinate-convex subset of N^n containing the origin. Members are
/// kept in lexicographic order, which is the canonical enumeration order for
/// every macrostate-indexed vector in this library.
class FerrersSet {
 public:
  FerrersSet() = default;
  explicit FerrersSet(std::vector<Macrostate> members);

  static FerrersSet box(const std::vector<int>& caps);
  /// {x : x_1 + ... + x_n <= cap}
  static FerrersSet simplex(int n, int cap);
  /// {x : x <= caps componentwise and x_1 + ... + x_n <= total}
  static FerrersSet capped(const std::vector<int>& caps, int total);
  static bool is_ferrers(const std::vector<Macrostate>& members);

  int dim() const { return n_; }
  std::size_t size() const { return members_.size(); }
  const std::vector<Macrostate>& members() const { return members_; }
  const Macrostate& operator[](std::size_t k) const { return members_[k]; }
  std::optional<std::size_t> index_of(const Macrostate& x) const;
  bool contains(const Macrostate& x) const { return index_.count(x) > 0; }

  bool operator==(const FerrersSet& other) const { return members_ == other.members_; }

 private:
  int n_ = 0;
  std::vector<Macrostate> members_;
  std::map<Macrostate, std::size_t> index_;
};

enum class TransitionKind { Arrival, Departure, Internal };

const char* to_string(TransitionKind kind);

struct Edge {
  std::size_t from;
  std::size_t to;
  double rate;
};

struct Transition {
  std::size_t from;
  std::size_t to;
  double rate;
  TransitionKind kind;
  int cls;  // class index for arrivals and departures, -1 for internal moves
};

/// Finite queueing system: microstates, counting function, and a sparse
/// kernel whose transitions are classified against the counting function.
///
/// Parallel edges are merged and self-loops dropped at construction. Edges
/// with zero rate are kept so that controlled copies (see with_rates) share
/// the edge indexing of the system they were derived from.
class QueueSystem {
 public:
  QueueSystem(int n, std::vector<Macrostate> counting, const std::vector<Edge>& edges,
              std::vector<std::string> names = {});

  int n() const { return n_; }
  std::size_t size() const { return counting_.size(); }
  const Macrostate& counting(std::size_t s) const { return counting_[s]; }
  const std::string& name(std::size_t s) const { return names_[s]; }
  std::size_t empty_state() const { return empty_; }

  const std::vector<Transition>& transitions() const { return transitions_; }
  /// Indices into transitions() of the edges leaving / entering s.
  const std::vector<std::size_t>& out_edges(std::size_t s) const { return out_[s]; }
  const std::vector<std::size_t>& in_edges(std::size_t s) const { return in_[s]; }

  double total_outflow(std::size_t s) const;

  const FerrersSet& macro_image() const { return image_; }
  /// Microstates s with counting(s) == image()[x].
  const std::vector<std::size_t>& microstates_of(std::size_t x) const { return by_macro_[x]; }
  std::size_t macro_index(std::size_t s) const { return macro_of_[s]; }

  /// Same structure with new per-transition rates (indexed like transitions()).
  QueueSystem with_rates(const std::vector<double>& rates) const;

 private:
  QueueSystem() = default;
  void index();

  int n_ = 0;
  std::vector<Macrostate> counting_;
  std::vector<std::string> names_;
  std::vector<Transition> transitions_;
  std::vector<std::vector<std::size_t>> out_;
  std::vector<std::vector<std::size_t>> in_;
  std::size_t empty_ = 0;
  FerrersSet image_;
  std::vector<std::vector<std::size_t>> by_macro_;
  std::vector<std::size_t> macro_of_;
};

struct StationaryMeasure {
  std::vector<double> values;
  bool normalized = false;

  double sum() const;
  StationaryMeasure normalized_copy() const;
};

struct ValidationReport {
  struct Violation {
    int item;             // structural item violated, 1..4
    std::size_t witness;  // offending microstate
  };

  bool passes = false;
  std::vector<std::size_t> recurrent_set;  // S_rec, ascending
  std::vector<Violation> violations;
};

/// Checks the four structural items: monotone reachability from the empty
/// state, no other reachable states, monotone drain paths, Ferrers image of
/// the recurrent set.
ValidationReport validate_structure(const QueueSystem& sys);

/// Normalized solution of the global balance equations, supported on S_rec.
StationaryMeasure solve_stationary(const QueueSystem& sys);

/// Max over states of |outflow - inflow|.
double global_balance_residual(const QueueSystem& sys, const std::vector<double>& pi);

struct QuasiReversibilityReport {
  double max_residual = 0.0;  // arrival/departure partial balance
  std::size_t worst_state = 0;
  int worst_class = -1;
  bool quasi_reversible = false;
  /// Departure + internal partial balance (the complementary equations).
  double max_complementary_residual = 0.0;
  double max_global_residual = 0.0;
};

QuasiReversibilityReport check_quasi_reversibility(const QueueSystem& sys, const StationaryMeasure& pi,
                                                   double tol = kDefaultTol);

struct MacroRate {
  std::size_t from;  // index in MacroChain::domain
  std::size_t to;
  int cls;
  double rate;
};

/// Reversible macro chain obtained by aggregating a quasi-reversible system.
struct MacroChain {
  FerrersSet domain;
  std::vector<double> pi;
  std::vector<MacroRate> rates;
  double detailed_balance_residual = 0.0;
};

class AggregationError : public Error {
 public:
  using Error::Error;
};

MacroChain aggregate_macro_kernel(const QueueSystem& sys, const StationaryMeasure& pi, double tol = kDefaultTol);

/// s_index,t_index,rate,kind
void dump_edges_csv(const QueueSystem& sys, std::ostream& os);

}  // namespace qrs
