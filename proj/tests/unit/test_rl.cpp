#include <doctest.h>

#include "qrs/rl.hpp"
#include "qrs/verify.hpp"

#include <cmath>
#include <set>
#include <sstream>

using namespace qrs;

namespace {

double logistic(double t) { return 1.0 / (1.0 + std::exp(-t)); }

void check_log(const RunLog& log, std::size_t steps) {
  REQUIRE_FALSE(log.records.empty());
  CHECK(log.records.back().step == steps);
  double prev_total = 0.0;
  std::size_t prev_step = 0;
  for (const auto& r : log.records) {
    CHECK(r.step > prev_step);
    CHECK(is_record_step(r.step));
    const double total = r.mean_reward * static_cast<double>(r.step);
    CHECK(total >= prev_total - 1e-9);  // rewards are nonnegative
    for (double a : r.admit_rate) {
      CHECK(a >= 0.0);
      CHECK(a <= 1.0);
    }
    prev_total = total;
    prev_step = r.step;
  }
}

}  // namespace

TEST_CASE("record steps") {
  CHECK(is_record_step(1));
  CHECK(is_record_step(999));
  CHECK(is_record_step(1000));
  CHECK_FALSE(is_record_step(1005));
  CHECK(is_record_step(1010));
  CHECK_FALSE(is_record_step(10050));
  CHECK(is_record_step(10100));
  CHECK(is_record_step(1000000));
  std::size_t between = 0;
  for (std::size_t s = 1000; s < 10000; ++s) between += is_record_step(s);
  CHECK(between == 900);
}

TEST_CASE("exploration schedule") {
  const QConfig q;
  CHECK(q.epsilon(0) == doctest::Approx(0.1));
  CHECK(q.floor_epoch() == 4995);
  CHECK(q.epsilon(4995) == doctest::Approx(1e-4));
  CHECK(q.epsilon(4994) > 1e-4);
  CHECK(q.epsilon(1000000) == doctest::Approx(1e-4));
  for (std::size_t m = 1; m < 6000; ++m) CHECK(q.epsilon(m) <= q.epsilon(m - 1));
}

TEST_CASE("config validation") {
  SageConfig s;
  s.family = Family::Imbalanced;
  CHECK_THROWS_AS(s.validate(), SpecError);
  s = SageConfig{};
  s.batch = 1;
  CHECK_THROWS_AS(s.validate(), SpecError);
  AcConfig a;
  a.step_v = 1.0;
  CHECK_THROWS_AS(a.validate(), SpecError);
  QConfig q;
  q.eps_floor = 0.5;
  CHECK_THROWS_AS(q.validate(), SpecError);
  CHECK(default_theta_init(Family::Static) == 0.0);
  CHECK(default_theta_init(Family::DynamicCumProd) == 3.0);
}

TEST_CASE("policy probabilities") {
  ThetaParameterization stat(Family::Static, 3);
  CHECK(policy_admit_prob(stat, {{0, 2}, 1}) == doctest::Approx(0.5));
  stat.theta()[1] = 40.0;
  CHECK(policy_admit_prob(stat, {{0, 2}, 1}) == doctest::Approx(1.0));

  ThetaParameterization semi(Family::SemiStatic, 3, 30.0);
  for (int i = 0; i < 3; ++i) semi.theta()[static_cast<std::size_t>(i)] = 0.3 * i - 0.2;
  for (int i = 0; i < 3; ++i) stat.theta()[static_cast<std::size_t>(i)] = 0.3 * i - 0.2;
  for (const Word& w : {Word{}, Word{0, 1}, Word{2, 2, 0, 1}})
    for (int i = 0; i < 3; ++i)
      CHECK(std::abs(policy_admit_prob(semi, {w, i}) - policy_admit_prob(stat, {w, i})) < 1e-6);
}

TEST_CASE("SAGE estimate by hand") {
  ThetaParameterization param(Family::Static, 2);
  const std::vector<SageSample> batch{{{0}, 0, 1, 2.0}, {{}, 1, 0, 4.0}};
  // Mean reward 3; centered part (2-3)(0.5, 0); score part ((2)(0.5, 0) + 4(0, -0.5)) / 2.
  const auto g = sage_gradient_estimate(batch, param);
  CHECK(g[0] == doctest::Approx(0.0));
  CHECK(g[1] == doctest::Approx(-1.0));

  std::vector<SageSample> flat{{{0, 1}, 0, 1, 5.0}, {{1}, 1, 0, 5.0}, {{}, 0, 1, 5.0}};
  const auto e = sage_gradient_estimate(flat, param);
  // Constant rewards: only the score part remains.
  CHECK(e[0] == doctest::Approx(5.0 * (0.5 + 0.5) / 3));
  CHECK(e[1] == doctest::Approx(5.0 * -0.5 / 3));

  CHECK_THROWS_AS(sage_gradient_estimate({batch[0]}, param), DomainError);
  CHECK_THROWS_AS(sage_gradient_estimate(batch, ThetaParameterization(Family::Imbalanced, 2)), UnsupportedError);
}

TEST_CASE("score on a single-class queue matches the geometric series") {
  RedundancySpec spec;
  spec.n = spec.m = 1;
  spec.B = {{1}};
  spec.nu = {0.5};
  spec.mu_srv = {1.0};
  spec.zeta = {1e-300};
  spec.r = {1.0};
  const int cap = 20;
  const ExactModel model(spec, cap);
  ThetaParameterization param(Family::Static, 1, 0.4);
  const double rho = 0.5 * logistic(0.4);
  double num = 0.0, den = 0.0;
  for (int k = 0; k <= cap; ++k) {
    num += k * std::pow(rho, k);
    den += std::pow(rho, k);
  }
  const double mean = num / den;
  for (int x = 0; x <= 4; ++x) {
    const Word w(static_cast<std::size_t>(x), 0);
    const auto g = exact_log_pi_gradient(model, param, w);
    CHECK(g[0] == doctest::Approx((1.0 - logistic(0.4)) * (x - mean)).epsilon(1e-10));
  }
}

TEST_CASE("score identities on the case-study instance") {
  // The identities hold on any truncation, so a small one keeps this fast.
  const auto spec = RedundancySpec::case_study(false);
  const ExactModel model(spec, 5);
  for (auto family : {Family::Static, Family::SemiStatic, Family::DynamicCumProd}) {
    CAPTURE(to_string(family));
    ThetaParameterization param(family, 3, family == Family::DynamicCumProd ? 1.0 : 0.2);
    model.materialize(param);
    for (std::size_t k = 0; k < param.dim(); ++k) param.theta()[k] += 0.05 * std::sin(3.0 * k);
    const auto pi = model.stationary(param);
    // The score at the empty word is minus the mean log-balance gradient.
    const auto g0 = model.log_pi_gradient(param, {});
    std::vector<double> weighted(param.dim(), 0.0);
    for (std::size_t s = 0; s < pi.size(); ++s) {
      const auto direct = param.grad_log_gamma(word_counts(model.words()[s], 3));
      for (std::size_t c = 0; c < direct.size(); ++c) weighted[c] += pi[s] * (direct[c] + g0[c]);
      if (s % 50 == 0) {
        const auto g = model.log_pi_gradient(param, model.words()[s]);
        for (std::size_t c = 0; c < g.size(); ++c) CHECK(g[c] == doctest::Approx(direct[c] + g0[c]).epsilon(1e-12));
      }
    }
    for (double v : weighted) CHECK(std::abs(v) < 1e-10);
    for (double v : model.mean_score(param)) CHECK(std::abs(v) < 1e-10);
  }
}

TEST_CASE("score vanishes where the balance function is flat") {
  const ExactModel model(RedundancySpec::case_study(false), 8);
  ThetaParameterization param(Family::Static, 3, 40.0);
  for (double v : model.log_pi_gradient(param, {0, 1, 2})) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("zero rewards give a zero gain gradient") {
  auto spec = RedundancySpec::case_study(false);
  spec.r = {0.0, 0.0, 0.0};
  const ExactModel model(spec, 8);
  ThetaParameterization param(Family::Static, 3, -2.0);
  CHECK(model.gain(param) == 0.0);
  for (double v : exact_gain_gradient(model, param)) CHECK(v == 0.0);
}

TEST_CASE("near the reject-all limit only the class components move") {
  const ExactModel model(RedundancySpec::case_study(false), 8);
  ThetaParameterization stat(Family::Static, 3, -20.0);
  for (double v : exact_gain_gradient(model, stat)) CHECK(v > 0.0);

  // A lone customer meets the diagonal pair factor as well, so diagonal
  // components move with the class components and the others stay flat.
  ThetaParameterization semi(Family::SemiStatic, 3, -20.0);
  const auto g = exact_gain_gradient(model, semi);
  double cls = 0.0, off = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(g[i] > 0.0);
    CHECK(g[3 + 4 * i] == doctest::Approx(g[i]));
    cls = std::max(cls, g[i]);
  }
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      if (i != j) off = std::max(off, std::abs(g[3 + 3 * i + j]));
  CHECK(off < 1e-6 * cls);
}

TEST_CASE("finite differences") {
  const auto rows = gradient_checks(5, 8);
  REQUIRE_FALSE(rows.empty());
  for (const auto& r : rows) {
    CAPTURE(r.family);
    CHECK(r.log_pi_rel_err < 1e-5);
    CHECK(r.gain_rel_err < 1e-4);
    CHECK(r.mean_score_linf < 1e-10);
    CHECK(r.captured_mass >= 1.0 - 1e-8);
  }
}

TEST_CASE("a truncation that loses mass is refused") {
  const ExactModel model(RedundancySpec::case_study(false), 1);
  ThetaParameterization param(Family::Static, 3);
  CHECK_THROWS_AS(exact_gain_gradient(model, param), DomainError);
  CHECK_THROWS_AS(exact_log_pi_gradient(model, param, {}), DomainError);
}

TEST_CASE("runners are deterministic and log valid, cumulative records") {
  const auto spec = RedundancySpec::case_study(true);
  constexpr std::size_t steps = 20000;
  SageConfig sc;
  AcConfig ac;
  ac.family = Family::Imbalanced;
  QConfig qc;

  const auto s1 = run_sage(spec, sc, steps, 3), s2 = run_sage(spec, sc, steps, 3);
  CHECK(s1.final_theta == s2.final_theta);
  CHECK(s1.records.back().mean_reward == s2.records.back().mean_reward);
  CHECK(run_sage(spec, sc, steps, 4).final_theta != s1.final_theta);
  check_log(s1, steps);
  for (double t : s1.final_theta) CHECK(std::isfinite(t));
  ThetaParameterization fitted(Family::Static, 3);
  fitted.theta() = s1.final_theta;
  for (int i = 0; i < 3; ++i) {
    const double p = policy_admit_prob(fitted, {{0, 1}, i});
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }

  const auto a1 = run_ac(spec, ac, steps, 3);
  CHECK(a1.final_theta == run_ac(spec, ac, steps, 3).final_theta);
  check_log(a1, steps);
  CHECK(a1.table_size > 0);
  CHECK(a1.table_size <= steps);

  const auto q1 = run_q(spec, qc, steps, 3);
  CHECK(q1.records.back().mean_reward == run_q(spec, qc, steps, 3).records.back().mean_reward);
  check_log(q1, steps);
  CHECK(q1.table_size > 0);
  CHECK(q1.table_size <= steps);
  CHECK(q1.final_theta.empty());

  std::ostringstream os;
  write_run_csv(s1, os);
  CHECK(os.str().rfind("step,mean_reward,admit_rate_class_1,admit_rate_class_2,admit_rate_class_3", 0) == 0);

  const auto empty = run_sage(spec, sc, 0, 1);
  CHECK(empty.records.empty());
}

TEST_CASE("tables grow only with visited states") {
  // Q-learning and actor-critic key their tables by (word, incoming class);
  // a short run cannot visit more states than it has steps.
  const auto spec = RedundancySpec::case_study(false);
  QConfig qc;
  for (std::size_t steps : {1, 5, 50}) {
    CHECK(run_q(spec, qc, steps, 8).table_size <= steps);
    CHECK(run_ac(spec, AcConfig{}, steps, 8).table_size <= steps);
  }
  CHECK(run_q(spec, qc, 1, 8).table_size == 1);
}

TEST_CASE("theta digest is stable") {
  CHECK(theta_digest({0.1, 0.2}) == theta_digest({0.1, 0.2}));
  CHECK(theta_digest({0.1, 0.2}) != theta_digest({0.2, 0.1}));
}
