#include "qrs/balance.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace qrs {

BalanceFunction::BalanceFunction(FerrersSet domain, std::vector<double> values)
    : domain_(std::move(domain)), values_(std::move(values)) {
  if (values_.size() != domain_.size()) throw DomainError("balance function: values/domain size mismatch");
  for (double v : values_)
    if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("balance function: values must be finite and nonnegative");
  if (std::abs(values_[*domain_.index_of(Macrostate::zero(domain_.dim()))] - 1.0) > 1e-12)
    throw DomainError("balance function: value at the origin must be 1");
  for (std::size_t k = 0; k < domain_.size(); ++k) {
    if (values_[k] == 0.0) continue;
    const auto& x = domain_[k];
    for (int i = 0; i < x.dim(); ++i)
      if (x[i] > 0 && (*this)(x.minus(i)) == 0.0)
        throw DomainError("balance function: support is not a Ferrers set at " + x.str());
  }
}

double BalanceFunction::operator()(const Macrostate& x) const {
  const auto k = domain_.index_of(x);
  return k ? values_[*k] : 0.0;
}

double AdmissionPolicy::prob(const Macrostate& x, int i) const {
  const auto k = domain.index_of(x);
  if (!k) return 0.0;
  return probs[*k][static_cast<std::size_t>(i)];
}

AdmissionPolicy AdmissionPolicy::from_function(const FerrersSet& domain,
                                               const std::function<double(const Macrostate&, int)>& f) {
  AdmissionPolicy p{domain, {}};
  p.probs.assign(domain.size(), std::vector<double>(static_cast<std::size_t>(domain.dim()), 0.0));
  for (std::size_t k = 0; k < domain.size(); ++k)
    for (int i = 0; i < domain.dim(); ++i)
      if (domain.contains(domain[k].plus(i))) p.probs[k][static_cast<std::size_t>(i)] = f(domain[k], i);
  return p;
}

BalancedPolicy policy_from_balance(const BalanceFunction& gamma) {
  const auto& dom = gamma.domain();
  BalancedPolicy out{AdmissionPolicy{dom, {}}, gamma};
  out.policy.probs.assign(dom.size(), std::vector<double>(static_cast<std::size_t>(dom.dim()), 0.0));
  for (std::size_t k = 0; k < dom.size(); ++k) {
    const double here = gamma.at(k);
    if (here == 0.0) continue;
    for (int i = 0; i < dom.dim(); ++i) {
      const auto up = dom.index_of(dom[k].plus(i));
      if (!up) continue;
      double p = gamma.at(*up) / here;
      if (p > 1.0 + 1e-12) {
        std::ostringstream os;
        os << "not a balance function: value increases from " << dom[k] << " along class " << i + 1;
        throw DomainError(os.str());
      }
      out.policy.probs[k][static_cast<std::size_t>(i)] = std::min(p, 1.0);
    }
  }
  return out;
}

BalanceCheck check_balance_condition(const AdmissionPolicy& policy, double tol) {
  const auto& dom = policy.domain;
  const int n = dom.dim();
  BalanceCheck out;
  for (std::size_t k = 0; k < dom.size(); ++k) {
    const auto& x = dom[k];
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        if (!dom.contains(x.plus(i).plus(j))) continue;
        const double lhs = policy.prob(x, i) * policy.prob(x.plus(i), j);
        const double rhs = policy.prob(x, j) * policy.prob(x.plus(j), i);
        if (std::abs(lhs - rhs) > tol) {
          out.witness = x;
          out.i = i;
          out.j = j;
          return out;
        }
      }
  }
  // Lexicographic order visits x - e_k before x.
  std::vector<double> values(dom.size(), 0.0);
  for (std::size_t k = 0; k < dom.size(); ++k) {
    const auto& x = dom[k];
    if (x.is_zero()) {
      values[k] = 1.0;
      continue;
    }
    int c = 0;
    while (x[c] == 0) ++c;
    const auto below = x.minus(c);
    values[k] = values[*dom.index_of(below)] * policy.prob(below, c);
  }
  out.balanced = true;
  out.reconstructed = BalanceFunction(dom, std::move(values));
  return out;
}

namespace {

BalanceFunction tabulate(const FerrersSet& domain, const std::function<double(const Macrostate&)>& f) {
  std::vector<double> v(domain.size());
  for (std::size_t k = 0; k < domain.size(); ++k) v[k] = f(domain[k]);
  return BalanceFunction(domain, std::move(v));
}

// Calls f on every y with 0 <= y <= x.
void for_each_below(const Macrostate& x, const std::function<void(const Macrostate&)>& f) {
  Macrostate y = Macrostate::zero(x.dim());
  while (true) {
    f(y);
    int c = 0;
    while (c < x.dim() && y[c] == x[c]) {
      y[c] = 0;
      ++c;
    }
    if (c == x.dim()) return;
    ++y[c];
  }
}

}  // namespace

BalanceFunction make_static(const FerrersSet& domain, const std::vector<double>& alpha) {
  if (static_cast<int>(alpha.size()) != domain.dim()) throw DomainError("static family: one factor per class");
  return tabulate(domain, [&](const Macrostate& x) {
    double g = 1.0;
    for (int i = 0; i < x.dim(); ++i) g *= std::pow(alpha[static_cast<std::size_t>(i)], x[i]);
    return g;
  });
}

BalanceFunction make_decentralized(const FerrersSet& domain, const std::function<double(int, int)>& psi) {
  return tabulate(domain, [&](const Macrostate& x) {
    double g = 1.0;
    for (int i = 0; i < x.dim(); ++i)
      for (int l = 0; l < x[i]; ++l) g *= psi(i, l);
    return g;
  });
}

BalanceFunction make_size_based(const FerrersSet& domain, const std::function<double(int)>& psi) {
  return tabulate(domain, [&](const Macrostate& x) {
    double g = 1.0;
    for (int l = 0; l < x.total(); ++l) g *= psi(l);
    return g;
  });
}

BalanceFunction make_mask(const FerrersSet& domain, const std::vector<Macrostate>& mask) {
  const FerrersSet a(mask);
  for (const auto& x : a.members())
    if (!domain.contains(x)) throw DomainError("mask point " + x.str() + " outside the domain");
  return tabulate(domain, [&](const Macrostate& x) { return a.contains(x) ? 1.0 : 0.0; });
}

BalanceFunction make_cum_prod(const FerrersSet& domain, const std::function<double(const Macrostate&)>& psi) {
  return tabulate(domain, [&](const Macrostate& x) {
    double g = 1.0;
    for_each_below(x, [&](const Macrostate& y) {
      if (!y.is_zero()) g *= psi(y);
    });
    return g;
  });
}

BalanceFunction make_uniform(const FerrersSet& domain) {
  return BalanceFunction(domain, std::vector<double>(domain.size(), 1.0));
}

QueueSystem apply_control(const QueueSystem& sys, const AdmissionPolicy& policy) {
  if (!(policy.domain == sys.macro_image())) throw DomainError("policy domain differs from the system's macrostates");
  std::vector<double> rates;
  rates.reserve(sys.transitions().size());
  for (const auto& t : sys.transitions()) {
    double r = t.rate;
    if (t.kind == TransitionKind::Arrival)
      r *= policy.probs[sys.macro_index(t.from)][static_cast<std::size_t>(t.cls)];
    rates.push_back(r);
  }
  return sys.with_rates(rates);
}

QueueSystem apply_control(const QueueSystem& sys, const std::vector<std::vector<double>>& probs) {
  if (probs.size() != sys.size()) throw DomainError("policy table size differs from the microstate count");
  std::vector<double> rates;
  rates.reserve(sys.transitions().size());
  for (const auto& t : sys.transitions()) {
    double r = t.rate;
    if (t.kind == TransitionKind::Arrival) r *= probs[t.from].at(static_cast<std::size_t>(t.cls));
    rates.push_back(r);
  }
  return sys.with_rates(rates);
}

ControlledProductFormReport verify_controlled_product_form(const QueueSystem& sys, const BalanceFunction& gamma, double tol) {
  if (!(gamma.domain() == sys.macro_image())) throw DomainError("balance function domain differs from the system's");
  const auto base = solve_stationary(sys);
  StationaryMeasure product{base.values, false};
  for (std::size_t s = 0; s < sys.size(); ++s) product.values[s] *= gamma.at(sys.macro_index(s));
  product = product.normalized_copy();

  const auto controlled = apply_control(sys, policy_from_balance(gamma).policy);
  const auto solved = solve_stationary(controlled);
  ControlledProductFormReport rep;
  for (std::size_t s = 0; s < sys.size(); ++s)
    rep.linf = std::max(rep.linf, std::abs(product.values[s] - solved.values[s]));
  rep.controlled_qr_residual = check_quasi_reversibility(controlled, solved, tol).max_residual;
  rep.passes = rep.linf <= tol && rep.controlled_qr_residual <= tol;
  return rep;
}

double DecompositionResult::reconstruct(const Macrostate& x) const {
  double v = 0.0;
  for (std::size_t k = 0; k < masks.size(); ++k)
    if (masks[k].contains(x)) v += coefficients[k];
  return v;
}

DecompositionResult decompose_vertex(const BalanceFunction& gamma) {
  const auto& dom = gamma.domain();
  std::set<Macrostate> current(dom.members().begin(), dom.members().end());
  DecompositionResult out;
  double previous = 0.0;
  while (!current.empty()) {
    out.masks.emplace_back(std::vector<Macrostate>(current.begin(), current.end()));
    // Maximal points; set iteration is lexicographic, so the first strict
    // minimizer is the lexicographically smallest one.
    const Macrostate* best = nullptr;
    double best_value = 0.0;
    for (const auto& x : current) {
      bool maximal = true;
      for (int i = 0; i < x.dim() && maximal; ++i)
        if (current.count(x.plus(i))) maximal = false;
      if (!maximal) continue;
      const double v = gamma(x);
      if (!best || v < best_value) {
        best = &x;
        best_value = v;
      }
    }
    out.visit_order.push_back(*best);
    out.coefficients.push_back(best_value - previous);
    previous = best_value;
    current.erase(*best);
  }
  return out;
}

namespace {

int compare(double a, double b) {
  if (std::abs(a - b) <= 1e-12) return 0;
  return a < b ? -1 : 1;
}

MonotonicityReport scan_monotonicity(const AdmissionPolicy& policy,
                                     const std::function<bool(const Macrostate&)>& in_scope) {
  const auto& dom = policy.domain;
  MonotonicityReport rep;
  for (const auto& x : dom.members())
    for (int i = 0; i < dom.dim(); ++i)
      for (int j = 0; j < dom.dim(); ++j) {
        if (i == j || !dom.contains(x.plus(i).plus(j))) continue;
        if (!in_scope(x.plus(i)) || !in_scope(x.plus(j))) continue;
        // Same sign of comparison covers all four relations at once.
        const int a = compare(policy.prob(x, i), policy.prob(x.plus(j), i));
        const int b = compare(policy.prob(x, j), policy.prob(x.plus(i), j));
        if (a != b) {
          rep.holds = false;
          rep.witness = x;
          rep.i = i;
          rep.j = j;
          return rep;
        }
      }
  return rep;
}

}  // namespace

MonotonicityReport check_monotonicity(const AdmissionPolicy& policy) {
  return scan_monotonicity(policy, [](const Macrostate&) { return true; });
}

MonotonicityReport check_monotonicity(const BalancedPolicy& policy) {
  return scan_monotonicity(policy.policy, [&](const Macrostate& x) { return policy.source.in_support(x); });
}

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double log_sigmoid(double t) {
  if (t >= 0.0) return -std::log1p(std::exp(-t));
  return t - std::log1p(std::exp(t));
}

const char* to_string(Family f) {
  switch (f) {
    case Family::Static:
      return "static";
    case Family::SemiStatic:
      return "semistatic";
    case Family::DynamicCumProd:
      return "dynamic";
    case Family::Imbalanced:
      return "imbalanced";
  }
  return "?";
}

Family family_from_string(const std::string& s) {
  if (s == "static") return Family::Static;
  if (s == "semistatic") return Family::SemiStatic;
  if (s == "dynamic") return Family::DynamicCumProd;
  if (s == "imbalanced") return Family::Imbalanced;
  throw SpecError("unknown policy family '" + s + "'");
}

ThetaParameterization::ThetaParameterization(Family family, int n, double theta_init)
    : family_(family), n_(n), theta_init_(theta_init) {
  if (n <= 0) throw SpecError("parameterization needs at least one class");
  if (family_ == Family::Static) theta_.assign(static_cast<std::size_t>(n), theta_init);
  if (family_ == Family::SemiStatic) theta_.assign(static_cast<std::size_t>(n + n * n), theta_init);
}

std::size_t ThetaParameterization::materialize(const std::vector<int>& key) {
  auto it = sites_.find(key);
  if (it != sites_.end()) return it->second;
  const std::size_t idx = theta_.size();
  theta_.push_back(theta_init_);
  sites_.emplace(key, idx);
  return idx;
}

std::optional<std::size_t> ThetaParameterization::site(const std::vector<int>& key) const {
  auto it = sites_.find(key);
  if (it == sites_.end()) return std::nullopt;
  return it->second;
}

void ThetaParameterization::materialize_below(const Macrostate& x) {
  if (family_ != Family::DynamicCumProd) return;
  for_each_below(x, [&](const Macrostate& y) {
    if (!y.is_zero()) materialize(y.counts);
  });
}

double ThetaParameterization::theta_at(const std::vector<int>& key) const {
  auto it = sites_.find(key);
  return it == sites_.end() ? theta_init_ : theta_[it->second];
}

void ThetaParameterization::require_balanced(const char* what) const {
  if (!balanced()) throw UnsupportedError(std::string(what) + ": the imbalanced family has no balance function");
}

double ThetaParameterization::log_gamma(const Macrostate& x) const {
  require_balanced("log_gamma");
  double v = 0.0;
  switch (family_) {
    case Family::Static:
    case Family::SemiStatic:
      for (int i = 0; i < n_; ++i) v += x[i] * log_sigmoid(theta_[static_cast<std::size_t>(i)]);
      if (family_ == Family::SemiStatic)
        for (int i = 0; i < n_; ++i)
          for (int j = 0; j < n_; ++j)
            v += static_cast<double>(x[i]) * x[j] * log_sigmoid(theta_[static_cast<std::size_t>(n_ + i * n_ + j)]);
      break;
    case Family::DynamicCumProd:
      for_each_below(x, [&](const Macrostate& y) {
        if (!y.is_zero()) v += log_sigmoid(theta_at(y.counts));
      });
      break;
    case Family::Imbalanced:
      break;
  }
  return v;
}

std::vector<double> ThetaParameterization::grad_log_gamma(const Macrostate& x) const {
  require_balanced("grad_log_gamma");
  std::vector<double> g(theta_.size(), 0.0);
  switch (family_) {
    case Family::Static:
    case Family::SemiStatic:
      for (int i = 0; i < n_; ++i) {
        const auto k = static_cast<std::size_t>(i);
        g[k] = x[i] * (1.0 - sigmoid(theta_[k]));
      }
      if (family_ == Family::SemiStatic)
        for (int i = 0; i < n_; ++i)
          for (int j = 0; j < n_; ++j) {
            const auto k = static_cast<std::size_t>(n_ + i * n_ + j);
            g[k] = static_cast<double>(x[i]) * x[j] * (1.0 - sigmoid(theta_[k]));
          }
      break;
    case Family::DynamicCumProd:
      for_each_below(x, [&](const Macrostate& y) {
        if (y.is_zero()) return;
        const auto k = site(y.counts);
        if (!k) throw DomainError("parameter site " + y.str() + " not materialized");
        g[*k] = 1.0 - sigmoid(theta_[*k]);
      });
      break;
    case Family::Imbalanced:
      break;
  }
  return g;
}

double ThetaParameterization::admit_prob(const Macrostate& x, int i) const {
  require_balanced("admit_prob");
  double lr = 0.0;
  switch (family_) {
    case Family::Static:
    case Family::SemiStatic:
      lr = log_sigmoid(theta_[static_cast<std::size_t>(i)]);
      if (family_ == Family::SemiStatic) {
        auto pair = [&](int a, int b) { return log_sigmoid(theta_[static_cast<std::size_t>(n_ + a * n_ + b)]); };
        // (x+e_i)_a (x+e_i)_b - x_a x_b
        for (int b = 0; b < n_; ++b) lr += x[b] * pair(i, b);
        for (int a = 0; a < n_; ++a) lr += x[a] * pair(a, i);
        lr += pair(i, i);
      }
      break;
    case Family::DynamicCumProd: {
      const Macrostate up = x.plus(i);
      for_each_below(up, [&](const Macrostate& y) {
        if (y[i] == up[i]) lr += log_sigmoid(theta_at(y.counts));
      });
      break;
    }
    case Family::Imbalanced:
      break;
  }
  return std::exp(lr);
}

std::vector<double> ThetaParameterization::grad_log_policy(const Macrostate& x, int i, int admit) const {
  auto g = grad_log_gamma(x.plus(i));
  const auto base = grad_log_gamma(x);
  for (std::size_t k = 0; k < g.size(); ++k) g[k] -= base[k];
  if (admit) return g;
  const double p = admit_prob(x, i);
  const double odds = p / (1.0 - p);
  for (auto& v : g) v *= -odds;
  return g;
}

namespace {

std::vector<int> raw_key(const std::vector<int>& word, int i) {
  std::vector<int> key = word;
  key.push_back(i);
  return key;
}

}  // namespace

double ThetaParameterization::admit_prob_raw(const std::vector<int>& word, int i) const {
  if (family_ != Family::Imbalanced) throw UnsupportedError("raw admission probabilities need the imbalanced family");
  return sigmoid(theta_at(raw_key(word, i)));
}

std::vector<double> ThetaParameterization::grad_log_policy_raw(const std::vector<int>& word, int i, int admit) const {
  if (family_ != Family::Imbalanced) throw UnsupportedError("raw admission probabilities need the imbalanced family");
  std::vector<double> g(theta_.size(), 0.0);
  const auto k = site(raw_key(word, i));
  if (!k) throw DomainError("parameter site not materialized");
  const double p = sigmoid(theta_[*k]);
  g[*k] = admit ? 1.0 - p : -p;
  return g;
}

BalanceFunction ThetaParameterization::to_balance_function(const FerrersSet& domain) const {
  require_balanced("to_balance_function");
  return tabulate(domain, [&](const Macrostate& x) { return std::exp(log_gamma(x)); });
}

}  // namespace qrs
