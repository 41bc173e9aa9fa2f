#include "qrs/whittle.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>

namespace qrs {

namespace {

std::string label_name(const WhittleSpec& spec, int label) {
  std::ostringstream os;
  os << '(' << spec.class_of(label) + 1 << ',' << label % spec.m + 1 << ')';
  return os.str();
}

}  // namespace

const char* to_string(ServiceKind k) {
  switch (k) {
    case ServiceKind::Constant:
      return "constant";
    case ServiceKind::Linear:
      return "linear";
    case ServiceKind::ProcessorSharing:
      return "ps";
  }
  return "?";
}

ServiceKind service_kind_from_string(const std::string& s) {
  if (s == "constant") return ServiceKind::Constant;
  if (s == "linear") return ServiceKind::Linear;
  if (s == "ps") return ServiceKind::ProcessorSharing;
  throw SpecError("unknown service rate function '" + s + "'");
}

Macrostate WhittleSpec::class_totals(const LabelState& s) const {
  Macrostate x = Macrostate::zero(n);
  for (int l = 0; l < labels(); ++l) x[class_of(l)] += s[l];
  return x;
}

void WhittleSpec::validate() const {
  const auto L = static_cast<std::size_t>(labels());
  if (n <= 0 || m <= 0) throw SpecError("Whittle spec: need classes and sites");
  if (enter.size() != L || leave.size() != L || route.size() != L) throw SpecError("Whittle spec: routing size mismatch");
  if (!(phi0 > 0.0)) throw SpecError("Whittle spec: phi0 must be positive");
  if (!phi) throw SpecError("Whittle spec: missing service rates");
  double total = 0.0;
  for (double v : enter) {
    if (v < 0.0) throw SpecError("Whittle spec: negative routing probability");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-12) throw SpecError("Whittle spec: entry row must sum to 1");
  for (int a = 0; a < labels(); ++a) {
    const auto ua = static_cast<std::size_t>(a);
    if (route[ua].size() != L) throw SpecError("Whittle spec: routing size mismatch");
    double row = leave[ua];
    if (row < 0.0) throw SpecError("Whittle spec: negative routing probability");
    for (int b = 0; b < labels(); ++b) {
      const double p = route[ua][static_cast<std::size_t>(b)];
      if (p < 0.0) throw SpecError("Whittle spec: negative routing probability");
      if (p > 0.0 && class_of(a) != class_of(b))
        throw SpecError("Whittle spec: routing changes the class of " + label_name(*this, a));
      row += p;
    }
    if (std::abs(row - 1.0) > 1e-12) throw SpecError("Whittle spec: row " + label_name(*this, a) + " must sum to 1");
  }
}

void WhittleSpec::set_service(ServiceKind kind, double c) {
  if (!(c > 0.0)) throw SpecError("service constant must be positive");
  const double ratio = phi0 / c;
  const int L = labels();
  switch (kind) {
    case ServiceKind::Constant:
      phi = [c](int l, const LabelState& s) { return s[l] > 0 ? c : 0.0; };
      Phi = [ratio, L](const LabelState& s) {
        int tot = 0;
        for (int l = 0; l < L; ++l) tot += s[l];
        return std::pow(ratio, tot);
      };
      break;
    case ServiceKind::Linear:
      phi = [c](int l, const LabelState& s) { return c * s[l]; };
      Phi = [ratio, L](const LabelState& s) {
        double v = 0.0;
        for (int l = 0; l < L; ++l) v += s[l] * std::log(ratio) - std::lgamma(s[l] + 1.0);
        return std::exp(v);
      };
      break;
    case ServiceKind::ProcessorSharing:
      phi = [c, L](int l, const LabelState& s) {
        int tot = 0;
        for (int k = 0; k < L; ++k) tot += s[k];
        return tot > 0 ? c * s[l] / tot : 0.0;
      };
      Phi = [ratio, L](const LabelState& s) {
        int tot = 0;
        double v = 0.0;
        for (int l = 0; l < L; ++l) {
          tot += s[l];
          v -= std::lgamma(s[l] + 1.0);
        }
        v += tot * std::log(ratio) + std::lgamma(tot + 1.0);
        return std::exp(v);
      };
      break;
  }
}

WhittleSpec make_tandem(int m, double phi0, ServiceKind kind, double c) {
  WhittleSpec w;
  w.n = 1;
  w.m = m;
  w.phi0 = phi0;
  const auto L = static_cast<std::size_t>(m);
  w.enter.assign(L, 0.0);
  w.enter[0] = 1.0;
  w.leave.assign(L, 0.0);
  w.leave[L - 1] = 1.0;
  w.route.assign(L, std::vector<double>(L, 0.0));
  for (std::size_t k = 0; k + 1 < L; ++k) w.route[k][k + 1] = 1.0;
  w.set_service(kind, c);
  return w;
}

TrafficSolution solve_traffic(const WhittleSpec& spec) {
  spec.validate();
  const int L = spec.labels();
  // Every label must be reachable from outside and drain back out.
  std::vector<bool> from_outside(static_cast<std::size_t>(L), false), to_outside(static_cast<std::size_t>(L), false);
  std::deque<int> queue;
  for (int l = 0; l < L; ++l)
    if (spec.enter[static_cast<std::size_t>(l)] > 0.0) {
      from_outside[static_cast<std::size_t>(l)] = true;
      queue.push_back(l);
    }
  while (!queue.empty()) {
    const int a = queue.front();
    queue.pop_front();
    for (int b = 0; b < L; ++b)
      if (spec.route[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] > 0.0 && !from_outside[static_cast<std::size_t>(b)]) {
        from_outside[static_cast<std::size_t>(b)] = true;
        queue.push_back(b);
      }
  }
  for (int l = 0; l < L; ++l)
    if (spec.leave[static_cast<std::size_t>(l)] > 0.0) {
      to_outside[static_cast<std::size_t>(l)] = true;
      queue.push_back(l);
    }
  while (!queue.empty()) {
    const int b = queue.front();
    queue.pop_front();
    for (int a = 0; a < L; ++a)
      if (spec.route[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] > 0.0 && !to_outside[static_cast<std::size_t>(a)]) {
        to_outside[static_cast<std::size_t>(a)] = true;
        queue.push_back(a);
      }
  }
  for (int l = 0; l < L; ++l) {
    if (!from_outside[static_cast<std::size_t>(l)])
      throw SpecError("routing is not irreducible: label " + label_name(spec, l) + " is unreachable");
    if (!to_outside[static_cast<std::size_t>(l)])
      throw SpecError("routing is not irreducible: label " + label_name(spec, l) + " never leaves");
  }

  TrafficSolution out;
  out.lambda.assign(static_cast<std::size_t>(L), 0.0);
  for (int i = 0; i < spec.n; ++i) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(spec.m, spec.m);
    Eigen::VectorXd b(spec.m);
    for (int k = 0; k < spec.m; ++k) {
      b(k) = spec.enter[static_cast<std::size_t>(spec.label(i, k))];
      for (int l = 0; l < spec.m; ++l)
        a(k, l) -= spec.route[static_cast<std::size_t>(spec.label(i, l))][static_cast<std::size_t>(spec.label(i, k))];
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
    if (!(lu.rcond() > 1e-12)) throw SolverError("traffic equations are singular for class " + std::to_string(i + 1));
    const Eigen::VectorXd lam = lu.solve(b);
    double inflow = 0.0, outflow = 0.0;
    for (int k = 0; k < spec.m; ++k) {
      const auto l = static_cast<std::size_t>(spec.label(i, k));
      out.lambda[l] = lam(k);
      inflow += spec.enter[l];
      outflow += lam(k) * spec.leave[l];
    }
    out.identity_residual = std::max(out.identity_residual, std::abs(inflow - outflow));
  }
  return out;
}

PhiBalanceCheck check_phi_balance(const WhittleSpec& spec, const FerrersSet& truncation, double tol) {
  if (!spec.Phi) throw SpecError("no balance function supplied for the service rates");
  PhiBalanceCheck out;
  for (const auto& s : truncation.members()) {
    const double base = spec.Phi(s) * spec.phi0;
    for (int l = 0; l < spec.labels(); ++l) {
      const auto up = s.plus(l);
      if (!truncation.contains(up)) continue;
      const double r = std::abs(base - spec.Phi(up) * spec.phi(l, up));
      const double scaled = r / std::max(1.0, std::abs(base));
      if (scaled > out.residual) out.residual = scaled;
      if (scaled > tol && out.balanced) {
        out.balanced = false;
        out.witness = s;
        out.label = l;
      }
    }
  }
  return out;
}

double whittle_product_form(const WhittleSpec& spec, const TrafficSolution& traffic, const LabelState& s) {
  if (!spec.Phi) throw SpecError("no balance function supplied for the service rates");
  double v = spec.Phi(s);
  for (int l = 0; l < spec.labels(); ++l) v *= std::pow(traffic.lambda[static_cast<std::size_t>(l)], s[l]);
  return v;
}

FerrersSet class_capped_truncation(const WhittleSpec& spec, const std::vector<int>& caps, int total) {
  if (static_cast<int>(caps.size()) != spec.n) throw DomainError("one cap per class");
  const int L = spec.labels();
  std::vector<int> entry_caps(static_cast<std::size_t>(L));
  for (int l = 0; l < L; ++l) entry_caps[static_cast<std::size_t>(l)] = std::min(caps[static_cast<std::size_t>(spec.class_of(l))], total);
  const auto box = FerrersSet::capped(entry_caps, total);
  std::vector<Macrostate> kept;
  for (const auto& s : box.members()) {
    const auto x = spec.class_totals(s);
    bool ok = true;
    for (int i = 0; i < spec.n; ++i) ok = ok && x[i] <= caps[static_cast<std::size_t>(i)];
    if (ok) kept.push_back(s);
  }
  return FerrersSet(std::move(kept));
}

WhittleSystem build_whittle_system(const WhittleSpec& spec, const FerrersSet& truncation) {
  spec.validate();
  if (truncation.dim() != spec.labels()) throw DomainError("truncation must live on label states");
  std::vector<Macrostate> counting;
  std::vector<std::string> names;
  std::vector<Edge> edges;
  for (std::size_t k = 0; k < truncation.size(); ++k) {
    const auto& s = truncation[k];
    counting.push_back(spec.class_totals(s));
    names.push_back(s.str());
    for (int l = 0; l < spec.labels(); ++l) {
      const auto ul = static_cast<std::size_t>(l);
      if (spec.enter[ul] > 0.0)
        if (auto t = truncation.index_of(s.plus(l))) edges.push_back({k, *t, spec.enter[ul] * spec.phi0});
      if (s[l] == 0) continue;
      const double rate = spec.phi(l, s);
      if (!(rate > 0.0)) throw SpecError("service rate must be positive at occupied label " + label_name(spec, l));
      const auto down = s.minus(l);
      if (spec.leave[ul] > 0.0) edges.push_back({k, *truncation.index_of(down), spec.leave[ul] * rate});
      for (int b = 0; b < spec.labels(); ++b) {
        const double p = spec.route[ul][static_cast<std::size_t>(b)];
        if (p == 0.0 || b == l) continue;
        const auto t = truncation.index_of(down.plus(b));
        if (!t) throw DomainError("truncation is not closed under internal moves at " + s.str());
        edges.push_back({k, *t, p * rate});
      }
    }
  }
  return WhittleSystem{QueueSystem(spec.n, std::move(counting), edges, std::move(names)), truncation};
}

QueueSystem control_whittle(const WhittleSystem& ws, const WhittleSpec& spec, const BalanceFunction& label_gamma) {
  (void)spec;
  if (!(label_gamma.domain() == ws.states)) throw DomainError("balance function domain differs from the truncation");
  std::vector<double> rates;
  for (const auto& t : ws.sys.transitions()) {
    double r = t.rate;
    if (t.kind == TransitionKind::Arrival) {
      const double from = label_gamma.at(t.from);
      r = from > 0.0 ? r * label_gamma.at(t.to) / from : 0.0;
    }
    rates.push_back(r);
  }
  return ws.sys.with_rates(rates);
}

BalanceFunction lift_to_labels(const WhittleSpec& spec, const BalanceFunction& class_gamma, const FerrersSet& truncation) {
  std::vector<double> v(truncation.size());
  for (std::size_t k = 0; k < truncation.size(); ++k) {
    const auto x = spec.class_totals(truncation[k]);
    if (!class_gamma.domain().contains(x)) throw DomainError("class totals " + x.str() + " outside the balance function domain");
    v[k] = class_gamma(x);
  }
  return BalanceFunction(truncation, std::move(v));
}

OISpec matched_oi(const WhittleSpec& spec, const TrafficSolution& traffic) {
  if (!spec.Phi) throw SpecError("no balance function supplied for the service rates");
  OISpec oi;
  oi.n = spec.labels();
  for (double lam : traffic.lambda) oi.nu.push_back(spec.phi0 * lam);
  oi.mu = [spec](const Macrostate& s) {
    double v = 0.0;
    const double here = spec.Phi(s);
    for (int l = 0; l < spec.labels(); ++l)
      if (s[l] > 0) v += spec.Phi(s.minus(l)) / here;
    return spec.phi0 * v;
  };
  return oi;
}

EquivalenceReport check_equivalence(const WhittleSpec& spec, const BalanceFunction& label_gamma,
                                    const FerrersSet& truncation, double tol) {
  const auto balance = check_phi_balance(spec, truncation, tol);
  if (!balance.balanced)
    throw SpecError("service rates are not balanced at " + balance.witness.str() + ", label " + label_name(spec, balance.label));
  if (!(label_gamma.domain() == truncation)) throw DomainError("balance function domain differs from the truncation");
  for (const auto& s : truncation.members())
    for (int a = 0; a < spec.labels(); ++a) {
      if (s[a] == 0) continue;
      for (int b = 0; b < spec.labels(); ++b) {
        if (a == b || spec.route[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] == 0.0) continue;
        const auto t = s.minus(a).plus(b);
        if (std::abs(label_gamma(s) - label_gamma(t)) > tol * std::max(1.0, label_gamma(s)))
          throw UnsupportedError("balance function is not invariant under internal moves at " + s.str());
      }
    }

  const auto traffic = solve_traffic(spec);
  const auto ws = build_whittle_system(spec, truncation);
  const auto pw = solve_stationary(control_whittle(ws, spec, label_gamma));

  const auto oi = build_oi_system(matched_oi(spec, traffic), truncation);
  const auto po = solve_stationary(apply_control(oi.sys, policy_from_balance(label_gamma).policy));
  std::vector<double> agg(truncation.size(), 0.0);
  for (std::size_t w = 0; w < oi.sys.size(); ++w) agg[*truncation.index_of(oi.sys.counting(w))] += po.values[w];

  EquivalenceReport rep;
  for (std::size_t k = 0; k < truncation.size(); ++k) rep.l1 += std::abs(agg[k] - pw.values[k]);
  rep.passes = rep.l1 <= tol;
  return rep;
}

}  // namespace qrs
