#include "qrs/core.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <sstream>

namespace qrs {

int Macrostate::total() const { return std::accumulate(counts.begin(), counts.end(), 0); }

bool Macrostate::is_zero() const {
  return std::all_of(counts.begin(), counts.end(), [](int c) { return c == 0; });
}

Macrostate Macrostate::plus(int i) const {
  Macrostate y = *this;
  ++y[i];
  return y;
}

Macrostate Macrostate::minus(int i) const {
  Macrostate y = *this;
  --y[i];
  return y;
}

bool Macrostate::leq(const Macrostate& other) const {
  for (std::size_t k = 0; k < counts.size(); ++k)
    if (counts[k] > other.counts[k]) return false;
  return true;
}

std::string Macrostate::str() const {
  std::ostringstream os;
  os << *this;
  return os.str();
}

std::ostream& operator<<(std::ostream& os, const Macrostate& x) {
  os << '(';
  for (std::size_t k = 0; k < x.counts.size(); ++k) os << (k ? "," : "") << x.counts[k];
  return os << ')';
}

bool FerrersSet::is_ferrers(const std::vector<Macrostate>& members) {
  if (members.empty()) return false;
  std::map<Macrostate, bool> present;
  const int n = members.front().dim();
  for (const auto& x : members) {
    if (x.dim() != n) return false;
    for (int c : x.counts)
      if (c < 0) return false;
    present[x] = true;
  }
  if (!present.count(Macrostate::zero(n))) return false;
  // Coordinate-convexity follows from closure under unit decrements.
  for (const auto& x : members)
    for (int i = 0; i < n; ++i)
      if (x[i] > 0 && !present.count(x.minus(i))) return false;
  return true;
}

FerrersSet::FerrersSet(std::vector<Macrostate> members) {
  std::sort(members.begin(), members.end());
  members.erase(std::unique(members.begin(), members.end()), members.end());
  if (!is_ferrers(members)) throw DomainError("set of macrostates is not a Ferrers set");
  n_ = members.front().dim();
  members_ = std::move(members);
  for (std::size_t k = 0; k < members_.size(); ++k) index_.emplace(members_[k], k);
}

namespace {

void enumerate_box(const std::vector<int>& caps, std::size_t pos, Macrostate& cur, int total_left,
                   std::vector<Macrostate>& out) {
  if (pos == caps.size()) {
    out.push_back(cur);
    return;
  }
  for (int v = 0; v <= caps[pos] && v <= total_left; ++v) {
    cur.counts[pos] = v;
    enumerate_box(caps, pos + 1, cur, total_left - v, out);
  }
  cur.counts[pos] = 0;
}

}  // namespace

FerrersSet FerrersSet::capped(const std::vector<int>& caps, int total) {
  if (caps.empty()) throw DomainError("empty dimension");
  std::vector<Macrostate> out;
  Macrostate cur = Macrostate::zero(static_cast<int>(caps.size()));
  enumerate_box(caps, 0, cur, total, out);
  return FerrersSet(std::move(out));
}

FerrersSet FerrersSet::box(const std::vector<int>& caps) {
  return capped(caps, std::accumulate(caps.begin(), caps.end(), 0));
}

FerrersSet FerrersSet::simplex(int n, int cap) {
  return capped(std::vector<int>(static_cast<std::size_t>(n), cap), cap);
}

std::optional<std::size_t> FerrersSet::index_of(const Macrostate& x) const {
  auto it = index_.find(x);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const char* to_string(TransitionKind kind) {
  switch (kind) {
    case TransitionKind::Arrival:
      return "arrival";
    case TransitionKind::Departure:
      return "departure";
    case TransitionKind::Internal:
      return "internal";
  }
  return "?";
}

QueueSystem::QueueSystem(int n, std::vector<Macrostate> counting, const std::vector<Edge>& edges,
                         std::vector<std::string> names)
    : n_(n), counting_(std::move(counting)), names_(std::move(names)) {
  if (n_ <= 0) throw StructuralError("class count must be positive");
  for (const auto& x : counting_) {
    if (x.dim() != n_) throw StructuralError("counting vector of wrong dimension");
    for (int c : x.counts)
      if (c < 0) throw StructuralError("negative count in counting function");
  }
  if (names_.empty()) {
    names_.reserve(counting_.size());
    for (std::size_t s = 0; s < counting_.size(); ++s) names_.push_back(std::to_string(s));
  }
  if (names_.size() != counting_.size()) throw StructuralError("names/counting size mismatch");

  std::size_t empties = 0;
  for (std::size_t s = 0; s < counting_.size(); ++s)
    if (counting_[s].is_zero()) {
      empty_ = s;
      ++empties;
    }
  if (empties != 1) throw StructuralError("exactly one microstate must have an empty macrostate");

  std::map<std::pair<std::size_t, std::size_t>, double> merged;
  for (const auto& e : edges) {
    if (e.from >= size() || e.to >= size()) throw StructuralError("edge endpoint out of range");
    if (!(e.rate >= 0.0) || !std::isfinite(e.rate)) {
      std::ostringstream os;
      os << "malformed kernel: rate " << e.rate << " on edge " << e.from << "->" << e.to;
      throw StructuralError(os.str());
    }
    if (e.from == e.to) continue;
    merged[{e.from, e.to}] += e.rate;
  }

  transitions_.reserve(merged.size());
  for (const auto& [key, rate] : merged) {
    const auto& xs = counting_[key.first];
    const auto& xt = counting_[key.second];
    int changed = -1;
    int delta = 0;
    bool malformed = false;
    for (int i = 0; i < n_; ++i) {
      const int d = xt[i] - xs[i];
      if (d == 0) continue;
      if (changed >= 0 || std::abs(d) != 1) {
        malformed = true;
        break;
      }
      changed = i;
      delta = d;
    }
    if (malformed) {
      std::ostringstream os;
      os << "malformed kernel: transition " << key.first << "->" << key.second << " changes macrostate "
         << xs << " to " << xt;
      throw StructuralError(os.str());
    }
    Transition t{key.first, key.second, rate, TransitionKind::Internal, -1};
    if (changed >= 0) {
      t.kind = delta > 0 ? TransitionKind::Arrival : TransitionKind::Departure;
      t.cls = changed;
    }
    transitions_.push_back(t);
  }

  std::vector<Macrostate> image(counting_.begin(), counting_.end());
  std::sort(image.begin(), image.end());
  image.erase(std::unique(image.begin(), image.end()), image.end());
  if (!FerrersSet::is_ferrers(image)) throw StructuralError("macrostate image is not a Ferrers set");
  image_ = FerrersSet(std::move(image));
  index();
}

void QueueSystem::index() {
  out_.assign(size(), {});
  in_.assign(size(), {});
  for (std::size_t k = 0; k < transitions_.size(); ++k) {
    out_[transitions_[k].from].push_back(k);
    in_[transitions_[k].to].push_back(k);
  }
  by_macro_.assign(image_.size(), {});
  macro_of_.resize(size());
  for (std::size_t s = 0; s < size(); ++s) {
    const std::size_t x = *image_.index_of(counting_[s]);
    macro_of_[s] = x;
    by_macro_[x].push_back(s);
  }
}

double QueueSystem::total_outflow(std::size_t s) const {
  double r = 0.0;
  for (auto k : out_[s]) r += transitions_[k].rate;
  return r;
}

QueueSystem QueueSystem::with_rates(const std::vector<double>& rates) const {
  if (rates.size() != transitions_.size()) throw StructuralError("rate vector does not match transitions");
  QueueSystem copy = *this;
  for (std::size_t k = 0; k < rates.size(); ++k) {
    if (!(rates[k] >= 0.0) || !std::isfinite(rates[k])) throw StructuralError("malformed kernel: negative rate");
    copy.transitions_[k].rate = rates[k];
  }
  return copy;
}

double StationaryMeasure::sum() const { return std::accumulate(values.begin(), values.end(), 0.0); }

StationaryMeasure StationaryMeasure::normalized_copy() const {
  const double z = sum();
  if (!(z > 0.0)) throw SolverError("cannot normalize a zero measure");
  StationaryMeasure out{values, true};
  for (auto& v : out.values) v /= z;
  return out;
}

namespace {

enum class Direction { Forward, Backward };

// BFS from `start` along positive-rate edges. With `monotone`, only edges that
// do not decrease (forward) / do not increase (backward search, i.e. drain
// paths) the macrostate are followed.
std::vector<bool> reach(const QueueSystem& sys, std::size_t start, Direction dir, bool monotone) {
  std::vector<bool> seen(sys.size(), false);
  std::deque<std::size_t> queue{start};
  seen[start] = true;
  const auto& tr = sys.transitions();
  while (!queue.empty()) {
    const std::size_t s = queue.front();
    queue.pop_front();
    const auto& list = dir == Direction::Forward ? sys.out_edges(s) : sys.in_edges(s);
    for (auto k : list) {
      const Transition& t = tr[k];
      if (!(t.rate > 0.0)) continue;
      // Forward: paths from the empty state that never decrease |.|, so no
      // departures. Backward over in-edges: drain paths to the empty state
      // that never increase |.|, so no arrivals.
      if (monotone) {
        if (dir == Direction::Forward && t.kind == TransitionKind::Departure) continue;
        if (dir == Direction::Backward && t.kind == TransitionKind::Arrival) continue;
      }
      const std::size_t next = dir == Direction::Forward ? t.to : t.from;
      if (!seen[next]) {
        seen[next] = true;
        queue.push_back(next);
      }
    }
  }
  return seen;
}

}  // namespace

ValidationReport validate_structure(const QueueSystem& sys) {
  ValidationReport report;
  const std::size_t empty = sys.empty_state();
  const auto monotone_up = reach(sys, empty, Direction::Forward, true);
  const auto any_path = reach(sys, empty, Direction::Forward, false);
  const auto drains = reach(sys, empty, Direction::Backward, true);

  for (std::size_t s = 0; s < sys.size(); ++s)
    if (monotone_up[s]) report.recurrent_set.push_back(s);

  auto first_violation = [&](int item, auto&& bad) {
    for (std::size_t s = 0; s < sys.size(); ++s)
      if (bad(s)) {
        report.violations.push_back({item, s});
        return;
      }
  };
  // Item 1 holds by construction of S_rec.
  first_violation(2, [&](std::size_t s) { return any_path[s] && !monotone_up[s]; });
  first_violation(3, [&](std::size_t s) { return !drains[s]; });

  std::vector<Macrostate> image;
  for (auto s : report.recurrent_set) image.push_back(sys.counting(s));
  std::sort(image.begin(), image.end());
  image.erase(std::unique(image.begin(), image.end()), image.end());
  if (!FerrersSet::is_ferrers(image)) {
    std::map<Macrostate, bool> present;
    for (const auto& x : image) present[x] = true;
    for (auto s : report.recurrent_set) {
      const auto& x = sys.counting(s);
      bool ok = true;
      for (int i = 0; i < sys.n(); ++i)
        if (x[i] > 0 && !present.count(x.minus(i))) ok = false;
      if (!ok) {
        report.violations.push_back({4, s});
        break;
      }
    }
  }
  report.passes = report.violations.empty();
  return report;
}

StationaryMeasure solve_stationary(const QueueSystem& sys) {
  const auto report = validate_structure(sys);
  if (!report.passes) {
    std::ostringstream os;
    os << "system violates the unichain assumption (item " << report.violations.front().item << ", state "
       << sys.name(report.violations.front().witness) << ")";
    throw SolverError(os.str());
  }
  const auto& rec = report.recurrent_set;
  const std::size_t k = rec.size();
  std::vector<long> local(sys.size(), -1);
  for (std::size_t a = 0; a < k; ++a) local[rec[a]] = static_cast<long>(a);

  // Rows are balance equations (Q^T pi = 0); the last one is replaced by the
  // normalization.
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  for (const auto& t : sys.transitions()) {
    const long i = local[t.from];
    const long j = local[t.to];
    if (i < 0 || t.rate == 0.0) continue;
    if (j < 0) throw SolverError("recurrent set is not closed");
    a(j, i) += t.rate;
    a(i, i) -= t.rate;
  }
  const auto last = static_cast<Eigen::Index>(k - 1);
  a.row(last).setOnes();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
  b(last) = 1.0;

  Eigen::VectorXd x;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
  if (lu.rcond() > 1e-12) {
    x = lu.solve(b);
  } else {
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a);
    x = cod.solve(b);
    if ((a * x - b).cwiseAbs().maxCoeff() > 1e-8) throw SolverError("singular balance system");
  }

  StationaryMeasure pi{std::vector<double>(sys.size(), 0.0), true};
  for (std::size_t r = 0; r < k; ++r) {
    double v = x(static_cast<Eigen::Index>(r));
    if (v < 0.0) {
      if (v < -1e-10) throw SolverError("stationary solve produced a negative probability");
      v = 0.0;
    }
    pi.values[rec[r]] = v;
  }
  return pi.normalized_copy();
}

double global_balance_residual(const QueueSystem& sys, const std::vector<double>& pi) {
  std::vector<double> net(sys.size(), 0.0);
  for (const auto& t : sys.transitions()) {
    const double flow = pi[t.from] * t.rate;
    net[t.from] -= flow;
    net[t.to] += flow;
  }
  double worst = 0.0;
  for (double v : net) worst = std::max(worst, std::abs(v));
  return worst;
}

QuasiReversibilityReport check_quasi_reversibility(const QueueSystem& sys, const StationaryMeasure& pi,
                                                   double tol) {
  if (pi.values.size() != sys.size()) throw DomainError("measure does not match the system");
  const int n = sys.n();
  // out_arr[s][i]: Pi(s) * rate of class-i arrivals out of s.
  // in_dep[s][i]: flow into s from class-i departures.
  std::vector<std::vector<double>> out_arr(sys.size(), std::vector<double>(static_cast<std::size_t>(n), 0.0));
  auto in_dep = out_arr;
  std::vector<double> out_rest(sys.size(), 0.0), in_rest(sys.size(), 0.0);
  for (const auto& t : sys.transitions()) {
    const double flow = pi.values[t.from] * t.rate;
    const auto cls = static_cast<std::size_t>(t.cls);
    switch (t.kind) {
      case TransitionKind::Arrival:
        out_arr[t.from][cls] += flow;
        break;
      case TransitionKind::Departure:
        in_dep[t.to][cls] += flow;
        out_rest[t.from] += flow;
        break;
      case TransitionKind::Internal:
        out_rest[t.from] += flow;
        in_rest[t.to] += flow;
        break;
    }
  }
  // Departure-flow into s from S_{|s|+e_i} is in_dep; arrivals into s are
  // part of the complementary equations.
  for (const auto& t : sys.transitions())
    if (t.kind == TransitionKind::Arrival) in_rest[t.to] += pi.values[t.from] * t.rate;

  QuasiReversibilityReport rep;
  for (std::size_t s = 0; s < sys.size(); ++s) {
    for (int i = 0; i < n; ++i) {
      const auto ci = static_cast<std::size_t>(i);
      const double r = std::abs(out_arr[s][ci] - in_dep[s][ci]);
      if (r > rep.max_residual) {
        rep.max_residual = r;
        rep.worst_state = s;
        rep.worst_class = i;
      }
    }
    rep.max_complementary_residual = std::max(rep.max_complementary_residual, std::abs(out_rest[s] - in_rest[s]));
  }
  rep.max_global_residual = global_balance_residual(sys, pi.values);
  rep.quasi_reversible = rep.max_residual <= tol;
  return rep;
}

MacroChain aggregate_macro_kernel(const QueueSystem& sys, const StationaryMeasure& pi, double tol) {
  const auto qr = check_quasi_reversibility(sys, pi, tol);
  if (!qr.quasi_reversible) throw AggregationError("system is not quasi-reversible under the given measure");
  const auto report = validate_structure(sys);
  if (!report.passes) throw AggregationError("system violates the unichain assumption");

  std::vector<Macrostate> support;
  for (auto s : report.recurrent_set) support.push_back(sys.counting(s));
  MacroChain chain;
  chain.domain = FerrersSet(std::move(support));
  chain.pi.assign(chain.domain.size(), 0.0);
  for (auto s : report.recurrent_set) chain.pi[*chain.domain.index_of(sys.counting(s))] += pi.values[s];
  for (std::size_t x = 0; x < chain.domain.size(); ++x)
    if (!(chain.pi[x] > 0.0)) throw AggregationError("zero aggregated mass at reachable macrostate " +
                                                     chain.domain[x].str());

  // Flows between macrostates x and x +/- e_i, keyed by (from, to).
  std::map<std::pair<std::size_t, std::size_t>, std::pair<int, double>> flow;
  for (const auto& t : sys.transitions()) {
    if (t.kind == TransitionKind::Internal || t.rate == 0.0) continue;
    const auto fx = chain.domain.index_of(sys.counting(t.from));
    const auto tx = chain.domain.index_of(sys.counting(t.to));
    if (!fx || !tx) continue;
    auto& slot = flow[{*fx, *tx}];
    slot.first = t.cls;
    slot.second += pi.values[t.from] * t.rate;
  }
  for (const auto& [key, v] : flow)
    chain.rates.push_back({key.first, key.second, v.first, v.second / chain.pi[key.first]});

  for (const auto& r : chain.rates) {
    const auto back = flow.find({r.to, r.from});
    const double reverse = back == flow.end() ? 0.0 : back->second.second;
    chain.detailed_balance_residual =
        std::max(chain.detailed_balance_residual, std::abs(chain.pi[r.from] * r.rate - reverse));
  }
  return chain;
}

void dump_edges_csv(const QueueSystem& sys, std::ostream& os) {
  os << "s_index,t_index,rate,kind\n";
  os.precision(17);
  for (const auto& t : sys.transitions()) {
    os << t.from << ',' << t.to << ',' << t.rate << ',' << to_string(t.kind);
    if (t.cls >= 0) os << '(' << t.cls + 1 << ')';
    os << '\n';
  }
}

}  // namespace qrs
