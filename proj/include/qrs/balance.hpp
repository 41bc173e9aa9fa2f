#pragma once

#include "qrs/core.hpp"

#include <functional>
#include <map>
#include <optional>
#include <vector>

namespace qrs {

/// Nonnegative map on a Ferrers domain with value 1 at the origin and a
/// Ferrers support.
class BalanceFunction {
 public:
  BalanceFunction() = default;
  BalanceFunction(FerrersSet domain, std::vector<double> values);

  const FerrersSet& domain() const { return domain_; }
  const std::vector<double>& values() const { return values_; }
  int dim() const { return domain_.dim(); }

  /// 0 outside the domain.
  double operator()(const Macrostate& x) const;
  double at(std::size_t k) const { return values_[k]; }
  bool in_support(const Macrostate& x) const { return (*this)(x) > 0.0; }

 private:
  FerrersSet domain_;
  std::vector<double> values_;
};

/// Admission probabilities indexed by macrostate (domain order) and class.
/// Entries for x + e_i outside the domain are 0.
struct AdmissionPolicy {
  FerrersSet domain;
  std::vector<std::vector<double>> probs;

  double prob(const Macrostate& x, int i) const;
  static AdmissionPolicy from_function(const FerrersSet& domain, const std::function<double(const Macrostate&, int)>& f);
};

struct BalancedPolicy {
  AdmissionPolicy policy;
  BalanceFunction source;
};

BalancedPolicy policy_from_balance(const BalanceFunction& gamma);

struct BalanceCheck {
  bool balanced = false;
  Macrostate witness;
  int i = -1;
  int j = -1;
  std::optional<BalanceFunction> reconstructed;
};

BalanceCheck check_balance_condition(const AdmissionPolicy& policy, double tol = kDefaultTol);

// Balance-function families.
BalanceFunction make_static(const FerrersSet& domain, const std::vector<double>& alpha);
/// psi(i, l): admission probability of class i with l class-i customers present.
BalanceFunction make_decentralized(const FerrersSet& domain, const std::function<double(int, int)>& psi);
/// psi(l): admission probability with l customers in total.
BalanceFunction make_size_based(const FerrersSet& domain, const std::function<double(int)>& psi);
BalanceFunction make_mask(const FerrersSet& domain, const std::vector<Macrostate>& mask);
/// Gamma(x) = product of psi(y) over nonzero y <= x.
BalanceFunction make_cum_prod(const FerrersSet& domain, const std::function<double(const Macrostate&)>& psi);
BalanceFunction make_uniform(const FerrersSet& domain);

/// Arrival rates of class i out of microstates with macrostate x are scaled by
/// prob(x, i). The policy domain must equal the macro image of sys.
QueueSystem apply_control(const QueueSystem& sys, const AdmissionPolicy& policy);
/// Microstate-level policy: probs[s][i].
QueueSystem apply_control(const QueueSystem& sys, const std::vector<std::vector<double>>& probs);

struct ControlledProductFormReport {
  double linf = 0.0;                 // product measure vs. controlled solve
  double controlled_qr_residual = 0.0;
  bool passes = false;
};

ControlledProductFormReport verify_controlled_product_form(const QueueSystem& sys, const BalanceFunction& gamma, double tol = kDefaultTol);

struct DecompositionResult {
  std::vector<FerrersSet> masks;
  std::vector<double> coefficients;
  std::vector<Macrostate> visit_order;

  /// sum_k coefficients[k] * 1{x in masks[k]}
  double reconstruct(const Macrostate& x) const;
};

DecompositionResult decompose_vertex(const BalanceFunction& gamma);

struct MonotonicityReport {
  bool holds = true;
  Macrostate witness;
  int i = -1;
  int j = -1;
};

/// gamma_i(x) vs gamma_i(x+e_j) must compare the same way as gamma_j(x) vs
/// gamma_j(x+e_i). Checked where x+e_i+e_j is in the domain, and for balanced
/// input only where x+e_i and x+e_j are in the support.
MonotonicityReport check_monotonicity(const AdmissionPolicy& policy);
MonotonicityReport check_monotonicity(const BalancedPolicy& policy);

double sigmoid(double t);
double log_sigmoid(double t);

enum class Family { Static, SemiStatic, DynamicCumProd, Imbalanced };

const char* to_string(Family f);
Family family_from_string(const std::string& s);

/// theta -> Gamma_theta through the logistic map.
///   Static:          Gamma(x) = prod_i s(t_i)^{x_i}
///   SemiStatic:      Static times prod_{i,j} s(t_ij)^{x_i x_j}, all ordered pairs
///   DynamicCumProd:  Gamma(x) = prod_{0 != y <= x} s(t_y), sites grown on demand
///   Imbalanced:      raw admission probabilities s(t_{key,i}), no Gamma
class ThetaParameterization {
 public:
  ThetaParameterization(Family family, int n, double theta_init = 0.0);

  Family family() const { return family_; }
  int n() const { return n_; }
  bool balanced() const { return family_ != Family::Imbalanced; }
  std::size_t dim() const { return theta_.size(); }
  double theta_init() const { return theta_init_; }

  std::vector<double>& theta() { return theta_; }
  const std::vector<double>& theta() const { return theta_; }

  /// Site index for DynamicCumProd (key = macrostate) and Imbalanced
  /// (key = word letters followed by the class). Created at theta_init.
  std::size_t materialize(const std::vector<int>& key);
  std::optional<std::size_t> site(const std::vector<int>& key) const;
  const std::map<std::vector<int>, std::size_t>& sites() const { return sites_; }
  /// All nonzero y <= x (DynamicCumProd).
  void materialize_below(const Macrostate& x);

  double log_gamma(const Macrostate& x) const;
  /// Requires every site below x to exist for DynamicCumProd.
  std::vector<double> grad_log_gamma(const Macrostate& x) const;

  /// Gamma(x+e_i)/Gamma(x).
  double admit_prob(const Macrostate& x, int i) const;
  /// Gradient of log pi(x, i, a) for a in {0, 1}.
  std::vector<double> grad_log_policy(const Macrostate& x, int i, int admit) const;

  /// Imbalanced family: admission probability keyed by word.
  double admit_prob_raw(const std::vector<int>& word, int i) const;
  std::vector<double> grad_log_policy_raw(const std::vector<int>& word, int i, int admit) const;

  BalanceFunction to_balance_function(const FerrersSet& domain) const;

 private:
  double theta_at(const std::vector<int>& key) const;
  void require_balanced(const char* what) const;

  Family family_;
  int n_;
  double theta_init_;
  std::vector<double> theta_;
  std::map<std::vector<int>, std::size_t> sites_;
};

}  // namespace qrs
