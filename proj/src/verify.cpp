#include "qrs/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>

namespace qrs {

namespace {

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

int pick(Rng& rng, int lo, int hi) { return lo + static_cast<int>(rng.next() % static_cast<std::uint64_t>(hi - lo + 1)); }

// Adds random corners accepted by ok() until target members are reached.
FerrersSet grow(Rng& rng, int n, std::size_t target, const std::function<bool(const Macrostate&)>& ok) {
  std::set<Macrostate> members{Macrostate::zero(n)};
  while (members.size() < target) {
    std::vector<Macrostate> corners;
    for (const auto& x : members)
      for (int i = 0; i < n; ++i) {
        const auto y = x.plus(i);
        if (members.count(y) || !ok(y)) continue;
        bool below = true;
        for (int j = 0; j < n && below; ++j)
          if (y[j] > 0 && !members.count(y.minus(j))) below = false;
        if (below) corners.push_back(y);
      }
    if (corners.empty()) break;
    std::sort(corners.begin(), corners.end());
    corners.erase(std::unique(corners.begin(), corners.end()), corners.end());
    members.insert(corners[rng.next() % corners.size()]);
  }
  return FerrersSet(std::vector<Macrostate>(members.begin(), members.end()));
}

double multinomial(const Macrostate& x) {
  double v = std::lgamma(x.total() + 1.0);
  for (int c : x.counts) v -= std::lgamma(c + 1.0);
  return std::round(std::exp(v));
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void line(SuiteReport& rep, bool ok, const std::string& name, const std::string& detail) {
  rep.lines.push_back(std::string(ok ? "PASS " : "FAIL ") + name + ": " + detail);
  rep.passed = rep.passed && ok;
}

double& metric(SuiteReport& rep, const std::string& key) { return rep.metrics.emplace(key, 0.0).first->second; }

double linf(const std::vector<double>& a, const std::vector<double>& b) {
  double v = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) v = std::max(v, std::abs(a[k] - b[k]));
  return v;
}

std::vector<double> normalized(std::vector<double> v) {
  double z = 0.0;
  for (double x : v) z += x;
  for (auto& x : v) x /= z;
  return v;
}

// Max over edges of |pi(s) q(s,t) - pi(t) q(t,s)|.
double detailed_balance_residual(const QueueSystem& sys, const std::vector<double>& pi) {
  std::map<std::pair<std::size_t, std::size_t>, double> rate;
  for (const auto& t : sys.transitions()) rate[{t.from, t.to}] += t.rate;
  double worst = 0.0;
  for (const auto& [key, q] : rate) {
    auto it = rate.find({key.second, key.first});
    const double back = it == rate.end() ? 0.0 : it->second;
    worst = std::max(worst, std::abs(pi[key.first] * q - pi[key.second] * back));
  }
  return worst;
}

std::vector<double> oi_product_vector(const OISpec& spec, const OISystem& oi) {
  std::vector<double> v;
  v.reserve(oi.words.size());
  for (const auto& w : oi.words) v.push_back(oi_product_form(spec, w));
  return normalized(v);
}

std::vector<double> whittle_product_vector(const WhittleSpec& spec, const FerrersSet& trunc) {
  const auto traffic = solve_traffic(spec);
  std::vector<double> v;
  for (const auto& s : trunc.members()) v.push_back(whittle_product_form(spec, traffic, s));
  return normalized(v);
}

QueueSystem controlled_oi(const OISystem& oi, const ThetaParameterization& param) {
  return apply_control(oi.sys, policy_from_balance(param.to_balance_function(oi.sys.macro_image())).policy);
}

}  // namespace

double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    num = std::max(num, std::abs(a[k] - b[k]));
    den = std::max(den, std::abs(b[k]));
  }
  if (den == 0.0) return num;
  return num / den;
}

FerrersSet random_ferrers(Rng& rng, const std::vector<int>& caps, std::size_t target) {
  return grow(rng, static_cast<int>(caps.size()), target, [&](const Macrostate& y) {
    for (int i = 0; i < y.dim(); ++i)
      if (y[i] > caps[static_cast<std::size_t>(i)]) return false;
    return true;
  });
}

FerrersSet random_ferrers_within(Rng& rng, const FerrersSet& domain, std::size_t target) {
  return grow(rng, domain.dim(), target, [&](const Macrostate& y) { return domain.contains(y); });
}

BalanceFunction random_monotone_gamma(Rng& rng, const FerrersSet& domain, double zero_prob) {
  std::vector<double> values(domain.size(), 0.0);
  for (std::size_t k = 0; k < domain.size(); ++k) {
    const auto& x = domain[k];
    if (x.is_zero()) {
      values[k] = 1.0;
      continue;
    }
    double low = 1.0;
    for (int i = 0; i < x.dim(); ++i)
      if (x[i] > 0) low = std::min(low, values[*domain.index_of(x.minus(i))]);
    values[k] = rng.uniform() < zero_prob ? 0.0 : low * uniform(rng, 0.3, 1.0);
  }
  return BalanceFunction(domain, values);
}

std::vector<NamedGamma> family_instances(Rng& rng, const FerrersSet& domain) {
  const int n = domain.dim();
  int longest = 0;
  for (const auto& x : domain.members()) longest = std::max(longest, x.total());

  std::vector<double> alpha(static_cast<std::size_t>(n));
  for (auto& a : alpha) a = uniform(rng, 0.2, 1.0);

  std::vector<std::vector<double>> per_class(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(longest + 1)));
  for (auto& row : per_class)
    for (auto& v : row) v = uniform(rng, 0.1, 1.0);

  std::vector<double> by_size(static_cast<std::size_t>(longest + 1));
  for (auto& v : by_size) v = uniform(rng, 0.2, 1.0);
  by_size.back() = 0.0;  // a hard threshold at the largest total

  std::map<Macrostate, double> site;
  for (const auto& x : domain.members()) site[x] = uniform(rng, 0.5, 1.0);

  const auto mask = random_ferrers_within(rng, domain, 1 + rng.next() % domain.size());

  return {
      {"static", make_static(domain, alpha)},
      {"decentralized",
       make_decentralized(domain, [per_class](int i, int l) { return per_class[static_cast<std::size_t>(i)][static_cast<std::size_t>(l)]; })},
      {"size-based", make_size_based(domain, [by_size](int l) { return by_size[static_cast<std::size_t>(l)]; })},
      {"mask", make_mask(domain, mask.members())},
      {"cum-prod", make_cum_prod(domain, [site](const Macrostate& y) { return site.at(y); })},
  };
}

OiInstance random_oi_instance(Rng& rng, std::size_t max_words) {
  OiInstance out;
  const int n = pick(rng, 1, 3);
  const int kind = pick(rng, 0, 3);
  OISpec spec;
  if (kind == 0) {
    RedundancySpec r;
    r.n = n;
    r.m = pick(rng, 1, 3);
    r.B.assign(static_cast<std::size_t>(n), std::vector<int>(static_cast<std::size_t>(r.m), 0));
    for (auto& row : r.B) {
      for (auto& b : row) b = rng.bernoulli(0.5) ? 1 : 0;
      row[rng.next() % row.size()] = 1;
    }
    for (int i = 0; i < n; ++i) {
      r.nu.push_back(uniform(rng, 0.2, 1.5));
      r.zeta.push_back(uniform(rng, 0.05, 1.0));
      r.r.push_back(uniform(rng, 0.0, 5.0));
    }
    for (int j = 0; j < r.m; ++j) r.mu_srv.push_back(uniform(rng, 0.3, 1.5));
    spec = redundancy_to_oi(r);
    out.label = "oi-redundancy";
  } else {
    spec.n = n;
    std::vector<double> a(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      spec.nu.push_back(uniform(rng, 0.2, 1.5));
      a[static_cast<std::size_t>(i)] = uniform(rng, 0.3, 2.0);
    }
    const double c = uniform(rng, 0.5, 2.0);
    if (kind == 1) {
      spec.mu = [a](const Macrostate& x) {
        double v = 0.0;
        for (int i = 0; i < x.dim(); ++i) v += a[static_cast<std::size_t>(i)] * x[i];
        return v;
      };
      out.label = "oi-linear";
    } else if (kind == 2) {
      spec.mu = [a, c](const Macrostate& x) {
        double v = 0.0;
        for (int i = 0; i < x.dim(); ++i) v += a[static_cast<std::size_t>(i)] * x[i];
        return c * std::sqrt(v);
      };
      out.label = "oi-concave";
    } else {
      spec.mu = [c](const Macrostate& x) { return x.is_zero() ? 0.0 : c; };
      out.label = "oi-constant";
    }
  }
  out.label += "-n" + std::to_string(n);

  const std::vector<int> caps(static_cast<std::size_t>(n), n == 1 ? 12 : n == 2 ? 5 : 3);
  const std::size_t target = static_cast<std::size_t>(pick(rng, 4, 40));
  out.truncation = random_ferrers(rng, caps, target);
  // Trim maximal elements until the word budget holds.
  std::vector<Macrostate> kept;
  std::size_t words = 0;
  for (const auto& x : out.truncation.members()) {
    kept.push_back(x);
    words += static_cast<std::size_t>(multinomial(x));
  }
  while (words > max_words) {
    // Drop a maximal element with the most words.
    std::size_t best = 0;
    double most = -1.0;
    for (std::size_t k = 0; k < kept.size(); ++k) {
      bool maximal = true;
      for (int i = 0; i < n && maximal; ++i)
        if (std::find(kept.begin(), kept.end(), kept[k].plus(i)) != kept.end()) maximal = false;
      if (maximal && multinomial(kept[k]) > most) {
        most = multinomial(kept[k]);
        best = k;
      }
    }
    words -= static_cast<std::size_t>(most);
    kept.erase(kept.begin() + static_cast<std::ptrdiff_t>(best));
  }
  out.truncation = FerrersSet(kept);
  out.spec = spec;
  return out;
}

namespace {

// Class i gets its own routing over its m sites.
WhittleSpec random_routing(Rng& rng, int n, int m) {
  WhittleSpec w;
  w.n = n;
  w.m = m;
  const auto L = static_cast<std::size_t>(n * m);
  w.enter.assign(L, 0.0);
  w.leave.assign(L, 0.0);
  w.route.assign(L, std::vector<double>(L, 0.0));
  double total = 0.0;
  for (auto& e : w.enter) total += (e = uniform(rng, 0.1, 1.0));
  for (auto& e : w.enter) e /= total;
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < m; ++k) {
      const auto a = static_cast<std::size_t>(w.label(i, k));
      std::vector<double> row(static_cast<std::size_t>(m));
      double sum = 0.0;
      for (auto& v : row) sum += (v = rng.bernoulli(0.7) ? uniform(rng, 0.1, 1.0) : 0.0);
      const double out = uniform(rng, 0.2, 0.8);
      w.leave[a] = sum > 0.0 ? out : 1.0;
      for (int l = 0; l < m; ++l)
        if (sum > 0.0) w.route[a][static_cast<std::size_t>(w.label(i, l))] = (1.0 - out) * row[static_cast<std::size_t>(l)] / sum;
    }
  return w;
}

}  // namespace

WhittleInstance random_whittle_instance(Rng& rng) {
  const int n = pick(rng, 1, 2);
  const int m = pick(rng, 1, 2);
  WhittleInstance out;
  out.spec = random_routing(rng, n, m);
  out.spec.phi0 = uniform(rng, 0.3, 1.5);
  const auto kind = static_cast<ServiceKind>(pick(rng, 0, 2));
  out.spec.set_service(kind, uniform(rng, 0.5, 2.0));
  std::vector<int> caps;
  for (int i = 0; i < n; ++i) caps.push_back(pick(rng, 1, 3));
  const int total = pick(rng, 2, n * m <= 2 ? 5 : 4);
  out.truncation = class_capped_truncation(out.spec, caps, total);
  out.label = "whittle-n" + std::to_string(n) + "-m" + std::to_string(m) + "-" + to_string(kind);
  return out;
}

std::vector<WhittleInstance> reference_whittle_instances() {
  std::vector<WhittleInstance> out;

  WhittleSpec single;
  single.n = single.m = 1;
  single.enter = {1.0};
  single.leave = {1.0};
  single.route = {{0.0}};
  single.phi0 = 0.7;
  single.set_service(ServiceKind::Constant, 1.0);
  out.push_back({"single-site", single, class_capped_truncation(single, {5}, 5)});

  auto tandem = make_tandem(2, 0.6, ServiceKind::Constant, 1.0);
  out.push_back({"tandem", tandem, class_capped_truncation(tandem, {4}, 4)});

  WhittleSpec feedback;
  feedback.n = feedback.m = 1;
  feedback.enter = {1.0};
  feedback.leave = {0.5};
  feedback.route = {{0.5}};
  feedback.phi0 = 0.4;
  feedback.set_service(ServiceKind::Linear, 1.0);
  out.push_back({"feedback", feedback, class_capped_truncation(feedback, {6}, 6)});

  // Class 1 runs sites 1 -> 2; class 2 enters at site 2 and may loop back.
  WhittleSpec two;
  two.n = two.m = 2;
  two.enter = {0.6, 0.0, 0.0, 0.4};
  two.route = {{0.0, 1.0, 0.0, 0.0}, {0.0, 0.0, 0.0, 0.0}, {0.0, 0.0, 0.0, 0.5}, {0.0, 0.0, 0.3, 0.0}};
  two.leave = {0.0, 1.0, 0.5, 0.7};
  two.phi0 = 0.8;
  two.set_service(ServiceKind::ProcessorSharing, 1.5);
  out.push_back({"two-class", two, class_capped_truncation(two, {2, 2}, 3)});

  auto line = make_tandem(3, 0.5, ServiceKind::ProcessorSharing, 1.0);
  out.push_back({"ps-line", line, class_capped_truncation(line, {3}, 3)});
  return out;
}

RedundancySpec small_redundancy_spec() {
  RedundancySpec r;
  r.n = 2;
  r.m = 2;
  r.B = {{1, 1}, {0, 1}};
  r.nu = {0.5, 0.5};
  r.zeta = {2.0, 3.0};
  r.mu_srv = {0.5, 0.5};
  r.r = {1.0, 4.0};
  return r;
}

std::vector<ControlledProductFormCase> controlled_product_form_cases(std::uint64_t seed, int instances) {
  Rng rng(seed, 11);
  std::vector<ControlledProductFormCase> out;
  for (int k = 0; k < instances; ++k) {
    std::string label;
    std::optional<QueueSystem> sys;
    if (k % 2 == 0) {
      const auto inst = random_oi_instance(rng);
      label = inst.label;
      sys = build_oi_system(inst.spec, inst.truncation).sys;
    } else {
      const auto inst = random_whittle_instance(rng);
      label = inst.label;
      sys = build_whittle_system(inst.spec, inst.truncation).sys;
    }
    for (const auto& g : family_instances(rng, sys->macro_image()))
      out.push_back({label + "#" + std::to_string(k), sys->size(), g.family, verify_controlled_product_form(*sys, g.gamma)});
  }
  return out;
}

DecompositionCheck check_decomposition(const BalanceFunction& gamma) {
  const auto dec = decompose_vertex(gamma);
  DecompositionCheck out;
  out.min_coefficient = dec.coefficients.empty() ? 0.0 : dec.coefficients.front();
  for (double a : dec.coefficients) {
    out.min_coefficient = std::min(out.min_coefficient, a);
    out.coefficient_sum += a;
  }
  for (std::size_t k = 0; k < gamma.domain().size(); ++k)
    out.reconstruction_linf =
        std::max(out.reconstruction_linf, std::abs(dec.reconstruct(gamma.domain()[k]) - gamma.at(k)));
  return out;
}

std::vector<GradientCheck> gradient_checks(std::uint64_t seed, int cap) {
  const auto spec = small_redundancy_spec();
  const ExactModel model(spec, cap);
  const auto oi = build_oi_system(redundancy_to_oi(spec), model.truncation());
  Rng rng(seed, 12);
  const double h = 1e-5;

  std::vector<GradientCheck> out;
  for (Family fam : {Family::Static, Family::SemiStatic, Family::DynamicCumProd}) {
    ThetaParameterization param(fam, spec.n, default_theta_init(fam));
    model.materialize(param);
    for (auto& t : param.theta()) t += uniform(rng, -1.0, 1.0);

    GradientCheck chk;
    chk.family = to_string(fam);
    chk.captured_mass = model.captured_mass(param);

    // Words with enough mass for log differences to be accurate.
    std::vector<std::size_t> probes;
    for (std::size_t w = 0; w < oi.words.size(); ++w)
      if (oi.words[w].size() <= 2) probes.push_back(w);

    std::vector<std::vector<double>> exact;
    for (auto w : probes) exact.push_back(exact_log_pi_gradient(model, param, oi.words[w]));
    std::vector<std::vector<double>> fd(probes.size(), std::vector<double>(param.dim()));
    std::vector<double> gain_fd(param.dim());
    for (std::size_t c = 0; c < param.dim(); ++c) {
      const double keep = param.theta()[c];
      param.theta()[c] = keep + h;
      const auto up = solve_stationary(controlled_oi(oi, param)).values;
      const double g_up = model.gain(param);
      param.theta()[c] = keep - h;
      const auto down = solve_stationary(controlled_oi(oi, param)).values;
      const double g_down = model.gain(param);
      param.theta()[c] = keep;
      for (std::size_t p = 0; p < probes.size(); ++p)
        fd[p][c] = (std::log(up[probes[p]]) - std::log(down[probes[p]])) / (2.0 * h);
      gain_fd[c] = (g_up - g_down) / (2.0 * h);
    }
    for (std::size_t p = 0; p < probes.size(); ++p)
      chk.log_pi_rel_err = std::max(chk.log_pi_rel_err, relative_error(fd[p], exact[p]));
    chk.gain_rel_err = relative_error(gain_fd, exact_gain_gradient(model, param));
    for (double v : model.mean_score(param)) chk.mean_score_linf = std::max(chk.mean_score_linf, std::abs(v));
    out.push_back(chk);
  }
  return out;
}

SageConsistency sage_consistency(const RedundancySpec& spec, int cap, Family family, double theta_init,
                                 std::size_t batches, std::size_t batch_size, std::uint64_t seed) {
  const ExactModel model(spec, cap);
  ThetaParameterization param(family, spec.n, theta_init);
  model.materialize(param);
  SageConsistency out;
  out.exact = exact_gain_gradient(model, param);
  const std::size_t d = param.dim();
  std::vector<double> sum(d, 0.0), sq(d, 0.0);
  RedundancyEnv env(spec, seed, 0);
  Rng rng(seed, 1);
  for (std::size_t b = 0; b < batches; ++b) {
    const auto est = sage_gradient_estimate(model.sample_batch(param, batch_size, env, rng), param);
    for (std::size_t c = 0; c < d; ++c) {
      sum[c] += est[c];
      sq[c] += est[c] * est[c];
    }
  }
  const auto B = static_cast<double>(batches);
  out.mean.resize(d);
  out.std_error.resize(d);
  for (std::size_t c = 0; c < d; ++c) {
    out.mean[c] = sum[c] / B;
    const double var = std::max(0.0, (sq[c] - B * out.mean[c] * out.mean[c]) / (B - 1.0));
    out.std_error[c] = std::sqrt(var / B);
    const double gap = std::abs(out.mean[c] - out.exact[c]);
    out.worst_z = std::max(out.worst_z, out.std_error[c] > 0.0 ? gap / out.std_error[c] : (gap > 0.0 ? HUGE_VAL : 0.0));
  }
  return out;
}

namespace {

SuiteReport core_suite(std::uint64_t seed) {
  SuiteReport rep{"core", true, {}, {}};
  Rng rng(seed, 21);

  // M/M/1/2 with arrival 1 and service 2.
  {
    const QueueSystem mm1(1, {Macrostate{0}, Macrostate{1}, Macrostate{2}},
                          {{0, 1, 1.0}, {1, 2, 1.0}, {1, 0, 2.0}, {2, 1, 2.0}});
    const auto pi = solve_stationary(mm1).values;
    const double err = linf(pi, {4.0 / 7, 2.0 / 7, 1.0 / 7});
    line(rep, err < 1e-12, "mm1k-stationary", "linf vs (4/7, 2/7, 1/7) = " + fmt("%.2e", err));
  }

  double& global = metric(rep, "max_global_residual");
  double& qr = metric(rep, "max_qr_residual");
  double& macro = metric(rep, "max_macro_detailed_balance");
  double& bound = metric(rep, "max_complementary_excess");
  bool valid = true, sums = true;
  for (int k = 0; k < 12; ++k) {
    const auto inst = random_oi_instance(rng, 300);
    const auto oi = build_oi_system(inst.spec, inst.truncation);
    valid = valid && validate_structure(oi.sys).passes;
    const auto pi = solve_stationary(oi.sys);
    sums = sums && std::abs(pi.sum() - 1.0) < 1e-12;
    global = std::max(global, global_balance_residual(oi.sys, pi.values));
    const auto q = check_quasi_reversibility(oi.sys, pi);
    qr = std::max(qr, q.max_residual);
    bound = std::max(bound, q.max_complementary_residual - (q.max_residual + q.max_global_residual) * oi.sys.n() - 1e-15);
    macro = std::max(macro, aggregate_macro_kernel(oi.sys, pi).detailed_balance_residual);
  }
  line(rep, valid, "structure", "random OI systems pass the structural validator");
  line(rep, sums, "normalization", "stationary vectors sum to 1 within 1e-12");
  line(rep, global < 1e-10, "global-balance", "max residual " + fmt("%.2e", global));
  line(rep, qr < 1e-9, "partial-balance", "max arrival/departure residual " + fmt("%.2e", qr));
  line(rep, bound <= 0.0, "complementary-balance", "departure+internal residual within the implied bound");
  line(rep, macro < 1e-9, "macro-detailed-balance", "max residual " + fmt("%.2e", macro));
  return rep;
}

SuiteReport balance_suite(std::uint64_t seed) {
  SuiteReport rep{"balance", true, {}, {}};
  Rng rng(seed, 22);

  double min_coef = 0.0, sum_dev = 0.0, recon = 0.0, roundtrip = 0.0;
  bool balanced = true, monotone = true;
  for (int k = 0; k < 100; ++k) {
    const int n = pick(rng, 1, 3);
    const std::vector<int> caps(static_cast<std::size_t>(n), n == 1 ? 63 : n == 2 ? 7 : 3);
    const auto domain = random_ferrers(rng, caps, static_cast<std::size_t>(pick(rng, 2, 64)));
    const auto gamma = random_monotone_gamma(rng, domain);
    const auto d = check_decomposition(gamma);
    min_coef = std::min(min_coef, d.min_coefficient);
    sum_dev = std::max(sum_dev, std::abs(d.coefficient_sum - 1.0));
    recon = std::max(recon, d.reconstruction_linf);

    const auto policy = policy_from_balance(gamma);
    const auto check = check_balance_condition(policy.policy);
    balanced = balanced && check.balanced;
    if (check.reconstructed)
      for (std::size_t x = 0; x < domain.size(); ++x)
        roundtrip = std::max(roundtrip, std::abs(check.reconstructed->at(x) - gamma.at(x)));
    monotone = monotone && check_monotonicity(policy).holds;
  }
  metric(rep, "min_coefficient") = min_coef;
  metric(rep, "max_coefficient_sum_error") = sum_dev;
  metric(rep, "max_reconstruction_error") = recon;
  line(rep, min_coef >= -1e-14 && sum_dev <= 1e-12 && recon < 1e-12, "decomposition",
       "100 random balance functions, min coefficient " + fmt("%.2e", min_coef) + ", sum error " + fmt("%.2e", sum_dev) +
           ", reconstruction " + fmt("%.2e", recon));
  line(rep, balanced && roundtrip < 1e-12, "balance-roundtrip",
       "policies from balance functions rebuild them, error " + fmt("%.2e", roundtrip));
  line(rep, monotone, "monotonicity", "balanced policies respect the comparison equivalence");

  double lmax = 0.0, qmax = 0.0;
  std::size_t cases = 0, largest = 0;
  for (const auto& c : controlled_product_form_cases(seed, 20)) {
    lmax = std::max(lmax, c.report.linf);
    qmax = std::max(qmax, c.report.controlled_qr_residual);
    largest = std::max(largest, c.microstates);
    ++cases;
  }
  metric(rep, "controlled_linf") = lmax;
  metric(rep, "controlled_qr_residual") = qmax;
  line(rep, lmax < 1e-9 && qmax < 1e-9, "controlled-product-form",
       std::to_string(cases) + " cases (up to " + std::to_string(largest) + " states), linf " + fmt("%.2e", lmax) +
           ", partial balance " + fmt("%.2e", qmax));

  // Log-gradients of the parameterized families against central differences.
  double grad_err = 0.0;
  for (Family fam : {Family::Static, Family::SemiStatic, Family::DynamicCumProd}) {
    ThetaParameterization param(fam, 3, default_theta_init(fam));
    for (int trial = 0; trial < 5; ++trial) {
      const Macrostate x{pick(rng, 0, 3), pick(rng, 0, 3), pick(rng, 0, 3)};
      param.materialize_below(x);
      for (auto& t : param.theta()) t = uniform(rng, -2.0, 2.0);
      const auto g = param.grad_log_gamma(x);
      std::vector<double> fd(param.dim());
      for (std::size_t c = 0; c < param.dim(); ++c) {
        const double keep = param.theta()[c];
        param.theta()[c] = keep + 1e-5;
        const double up = param.log_gamma(x);
        param.theta()[c] = keep - 1e-5;
        const double down = param.log_gamma(x);
        param.theta()[c] = keep;
        fd[c] = (up - down) / 2e-5;
      }
      if (!x.is_zero()) grad_err = std::max(grad_err, relative_error(fd, g));
    }
  }
  line(rep, grad_err < 1e-6, "log-gamma-gradient", "max relative error " + fmt("%.2e", grad_err));
  return rep;
}

SuiteReport models_suite(std::uint64_t seed) {
  SuiteReport rep{"models", true, {}, {}};
  Rng rng(seed, 23);
  double& oi_err = metric(rep, "oi_product_form_linf");
  double& w_err = metric(rep, "whittle_product_form_linf");
  double& pb = metric(rep, "max_partial_balance_residual");
  double& traffic = metric(rep, "traffic_identity_residual");
  double& eq = metric(rep, "equivalence_l1");
  double& rev = metric(rep, "single_site_detailed_balance");

  for (int k = 0; k < 15; ++k) {
    const auto inst = random_oi_instance(rng);
    const auto oi = build_oi_system(inst.spec, inst.truncation);
    const auto pi = solve_stationary(oi.sys);
    oi_err = std::max(oi_err, linf(oi_product_vector(inst.spec, oi), pi.values));
    pb = std::max(pb, check_quasi_reversibility(oi.sys, pi).max_residual);
  }
  line(rep, oi_err < 1e-9, "oi-product-form", "15 random OI queues, linf " + fmt("%.2e", oi_err));

  auto whittle = reference_whittle_instances();
  for (int k = 0; k < 15; ++k) whittle.push_back(random_whittle_instance(rng));
  bool structure = true;
  for (const auto& inst : whittle) {
    traffic = std::max(traffic, solve_traffic(inst.spec).identity_residual);
    const auto ws = build_whittle_system(inst.spec, inst.truncation);
    structure = structure && validate_structure(ws.sys).passes;
    const auto pi = solve_stationary(ws.sys);
    w_err = std::max(w_err, linf(whittle_product_vector(inst.spec, inst.truncation), pi.values));
    pb = std::max(pb, check_quasi_reversibility(ws.sys, pi).max_residual);
    if (inst.spec.m == 1) rev = std::max(rev, detailed_balance_residual(ws.sys, pi.values));
  }
  line(rep, structure, "whittle-structure", std::to_string(whittle.size()) + " networks pass the structural validator");
  line(rep, w_err < 1e-9, "whittle-product-form", std::to_string(whittle.size()) + " networks, linf " + fmt("%.2e", w_err));
  line(rep, traffic < 1e-12, "traffic-identity", "max residual " + fmt("%.2e", traffic));
  line(rep, rev < 1e-9, "single-site-reversibility", "max detailed-balance residual " + fmt("%.2e", rev));

  std::size_t eq_cases = 0;
  for (const auto& inst : reference_whittle_instances()) {
    const auto classes = inst.spec.class_totals(Macrostate::zero(inst.spec.labels()));
    std::vector<int> caps(classes.counts.size(), 0);
    for (const auto& s : inst.truncation.members()) {
      const auto t = inst.spec.class_totals(s);
      for (std::size_t i = 0; i < caps.size(); ++i) caps[i] = std::max(caps[i], t.counts[i]);
    }
    const auto image = FerrersSet::box(caps);
    const auto thresholded = make_size_based(image, [](int l) { return l < 2 ? 0.8 : 0.5; });
    for (const auto& g : {make_uniform(image), thresholded}) {
      // Class totals of the truncation may be a strict subset of the box.
      std::vector<Macrostate> totals;
      for (const auto& s : inst.truncation.members()) totals.push_back(inst.spec.class_totals(s));
      std::sort(totals.begin(), totals.end());
      totals.erase(std::unique(totals.begin(), totals.end()), totals.end());
      const FerrersSet dom(totals);
      std::vector<double> vals;
      for (const auto& x : dom.members()) vals.push_back(g(x));
      const auto label_gamma = lift_to_labels(inst.spec, BalanceFunction(dom, vals), inst.truncation);
      eq = std::max(eq, check_equivalence(inst.spec, label_gamma, inst.truncation).l1);
      ++eq_cases;
    }
  }
  line(rep, eq < 1e-9, "oi-whittle-equivalence", std::to_string(eq_cases) + " controlled pairs, max L1 " + fmt("%.2e", eq));
  line(rep, pb < 1e-9, "partial-balance", "max partial-balance residual " + fmt("%.2e", pb));
  return rep;
}

SuiteReport gradients_suite(std::uint64_t seed) {
  SuiteReport rep{"gradients", true, {}, {}};
  double worst = 0.0;
  for (const auto& c : gradient_checks(seed)) {
    worst = std::max({worst, c.log_pi_rel_err, c.gain_rel_err});
    line(rep, c.log_pi_rel_err < 1e-5 && c.gain_rel_err < 1e-4 && c.mean_score_linf < 1e-10, c.family,
         "score " + fmt("%.2e", c.log_pi_rel_err) + ", gain " + fmt("%.2e", c.gain_rel_err) + ", mean score " +
             fmt("%.2e", c.mean_score_linf) + ", mass " + fmt("%.10f", c.captured_mass));
  }
  metric(rep, "max_fd_relative_error") = worst;
  line(rep, worst < 1e-4, "finite-differences", "max finite-difference relative error " + fmt("%.2e", worst));

  bool refused = false;
  try {
    const ExactModel tiny(small_redundancy_spec(), 1);
    ThetaParameterization param(Family::Static, 2, 0.0);
    exact_gain_gradient(tiny, param);
  } catch (const DomainError&) {
    refused = true;
  }
  line(rep, refused, "mass-guard", "a one-customer truncation is refused");

  const auto sage = sage_consistency(small_redundancy_spec(), 8, Family::Static, 0.0, 200, 1000, seed);
  metric(rep, "sage_worst_z") = sage.worst_z;
  line(rep, sage.worst_z < 3.0, "sage-consistency",
       "200 stationary batches, worst deviation " + fmt("%.2f", sage.worst_z) + " standard errors");
  return rep;
}

}  // namespace

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names = {"core", "balance", "models", "gradients"};
  return names;
}

SuiteReport run_suite(const std::string& name, std::uint64_t seed) {
  if (name == "core") return core_suite(seed);
  if (name == "balance") return balance_suite(seed);
  if (name == "models") return models_suite(seed);
  if (name == "gradients") return gradients_suite(seed);
  throw SpecError("unknown suite '" + name + "'");
}

}  // namespace qrs
