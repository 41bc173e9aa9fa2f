#include <doctest.h>

#include "qrs/balance.hpp"
#include "qrs/oiqueue.hpp"
#include "qrs/verify.hpp"
#include "qrs/whittle.hpp"

#include <cmath>

using namespace qrs;

namespace {

QueueSystem mm1k(int K, double nu, double mu) {
  std::vector<Macrostate> counting;
  std::vector<Edge> edges;
  for (int k = 0; k <= K; ++k) counting.push_back(Macrostate{k});
  for (std::size_t k = 0; k < static_cast<std::size_t>(K); ++k) {
    edges.push_back({k, k + 1, nu});
    edges.push_back({k + 1, k, mu});
  }
  return QueueSystem(1, counting, edges);
}

}  // namespace

TEST_CASE("policy from a static balance function") {
  const auto dom = FerrersSet::box({3, 3});
  const auto bp = policy_from_balance(make_static(dom, {0.5, 0.25}));
  for (const auto& x : dom.members()) {
    if (x[0] < 3) CHECK(bp.policy.prob(x, 0) == doctest::Approx(0.5));
    if (x[1] < 3) CHECK(bp.policy.prob(x, 1) == doctest::Approx(0.25));
  }
  CHECK(bp.policy.prob(Macrostate{3, 0}, 0) == 0.0);
}

TEST_CASE("uniform balance function admits everything inside the domain") {
  const auto dom = FerrersSet::simplex(2, 3);
  const auto bp = policy_from_balance(make_uniform(dom));
  for (const auto& x : dom.members())
    for (int i = 0; i < 2; ++i) CHECK(bp.policy.prob(x, i) == (dom.contains(x.plus(i)) ? 1.0 : 0.0));
}

TEST_CASE("mask balance function of the best path policy") {
  const auto dom = FerrersSet::box({5, 5});
  const auto bp = policy_from_balance(make_mask(dom, {Macrostate{0, 0}, Macrostate{1, 0}, Macrostate{2, 0}}));
  CHECK(bp.policy.prob(Macrostate{0, 0}, 0) == 1.0);
  CHECK(bp.policy.prob(Macrostate{1, 0}, 0) == 1.0);
  CHECK(bp.policy.prob(Macrostate{2, 0}, 0) == 0.0);
  for (const auto& x : {Macrostate{0, 0}, Macrostate{1, 0}, Macrostate{2, 0}}) CHECK(bp.policy.prob(x, 1) == 0.0);
  CHECK(bp.policy.prob(Macrostate{3, 3}, 0) == 0.0);
}

TEST_CASE("increasing functions are rejected") {
  const auto dom = FerrersSet::box({1});
  CHECK_THROWS_AS(policy_from_balance(BalanceFunction(dom, {1.0, 2.0})), DomainError);
  CHECK_THROWS_AS(BalanceFunction(dom, {0.5, 0.2}), DomainError);
  CHECK_THROWS_AS(BalanceFunction(FerrersSet::box({2}), {1.0, 0.0, 0.5}), DomainError);
}

TEST_CASE("balance condition") {
  const auto dom = FerrersSet::box({2, 2});
  SUBCASE("policies built from balance functions pass and rebuild them") {
    Rng rng(3);
    const auto g = random_monotone_gamma(rng, dom, 0.0);
    const auto check = check_balance_condition(policy_from_balance(g).policy);
    CHECK(check.balanced);
    REQUIRE(check.reconstructed.has_value());
    for (std::size_t k = 0; k < dom.size(); ++k) CHECK(check.reconstructed->at(k) == doctest::Approx(g.at(k)));
  }
  SUBCASE("class-1 admission only on an empty class 2 is not balanced") {
    const auto p = AdmissionPolicy::from_function(dom, [](const Macrostate& x, int i) {
      return i == 0 ? (x[1] == 0 ? 1.0 : 0.0) : 1.0;
    });
    const auto check = check_balance_condition(p);
    CHECK_FALSE(check.balanced);
    CHECK(check.witness == Macrostate{0, 0});
    CHECK(check.i == 0);
    CHECK(check.j == 1);
    CHECK_FALSE(check.reconstructed.has_value());
  }
  SUBCASE("decentralized policies are balanced") {
    const auto p = AdmissionPolicy::from_function(dom, [](const Macrostate& x, int i) {
      return i == 0 ? 1.0 / (1.0 + x[0]) : 0.3 + 0.2 * x[1];
    });
    CHECK(check_balance_condition(p).balanced);
  }
}

TEST_CASE("family constructors") {
  SUBCASE("size-based threshold") {
    const auto g = make_size_based(FerrersSet::box({3, 3}), [](int l) { return l < 2 ? 1.0 : 0.0; });
    CHECK(g(Macrostate{1, 1}) == 1.0);
    CHECK(g(Macrostate{2, 1}) == 0.0);
    CHECK(g(Macrostate{2, 0}) == 1.0);
  }
  SUBCASE("cum-prod of ones") {
    const auto g = make_cum_prod(FerrersSet::box({2, 2}), [](const Macrostate&) { return 1.0; });
    for (double v : g.values()) CHECK(v == 1.0);
  }
  SUBCASE("cum-prod runs over the nonzero points below x") {
    const auto g = make_cum_prod(FerrersSet::box({2, 2}), [](const Macrostate&) { return 0.9; });
    CHECK(g(Macrostate{1, 1}) == doctest::Approx(0.729));
    CHECK(g(Macrostate{2, 2}) == doctest::Approx(std::pow(0.9, 8)));
  }
  SUBCASE("decentralized") {
    const auto g = make_decentralized(FerrersSet::box({2, 2}), [](int i, int l) { return i == 0 ? 0.5 : (l == 0 ? 1.0 : 0.2); });
    CHECK(g(Macrostate{2, 2}) == doctest::Approx(0.25 * 0.2));
  }
  SUBCASE("masks must be Ferrers sets") {
    CHECK_THROWS_AS(make_mask(FerrersSet::box({2, 2}), {Macrostate{0, 0}, Macrostate{1, 1}}), DomainError);
    CHECK_THROWS_AS(make_mask(FerrersSet::box({1, 1}), {Macrostate{0, 0}, Macrostate{2, 0}}), DomainError);
  }
}

TEST_CASE("applying a control") {
  const auto sys = mm1k(5, 1.0, 1.5);
  SUBCASE("admit-all leaves the kernel unchanged") {
    const auto c = apply_control(sys, policy_from_balance(make_uniform(sys.macro_image())).policy);
    for (std::size_t k = 0; k < sys.transitions().size(); ++k) CHECK(c.transitions()[k].rate == sys.transitions()[k].rate);
  }
  SUBCASE("reject-all leaves a point mass") {
    std::vector<double> z(sys.macro_image().size(), 0.0);
    z[0] = 1.0;
    const auto c = apply_control(sys, policy_from_balance(BalanceFunction(sys.macro_image(), z)).policy);
    CHECK(solve_stationary(c).values[0] == doctest::Approx(1.0));
  }
  SUBCASE("a size threshold turns M/M/1/5 into M/M/1/3") {
    const auto g = make_size_based(sys.macro_image(), [](int l) { return l < 3 ? 1.0 : 0.0; });
    const auto c = apply_control(sys, policy_from_balance(g).policy);
    const auto small = mm1k(3, 1.0, 1.5);
    const auto pc = solve_stationary(c).values;
    const auto ps = solve_stationary(small).values;
    for (std::size_t k = 0; k < 4; ++k) CHECK(pc[k] == doctest::Approx(ps[k]).epsilon(1e-13));
    CHECK(pc[4] == 0.0);
    CHECK(pc[5] == 0.0);
    for (const auto& t : c.transitions())
      if (t.from < 3 || t.kind != TransitionKind::Arrival) CHECK(t.rate > 0.0);
      else CHECK(t.rate == 0.0);
  }
  SUBCASE("domain mismatch") {
    CHECK_THROWS_AS(apply_control(sys, policy_from_balance(make_uniform(FerrersSet::box({4}))).policy), DomainError);
  }
}

TEST_CASE("controlled product form") {
  SUBCASE("redundancy queue with a static function") {
    const auto oi = build_oi_system(redundancy_to_oi(RedundancySpec::case_study(true)), FerrersSet::simplex(3, 3));
    const auto rep = verify_controlled_product_form(oi.sys, make_static(oi.sys.macro_image(), {0.7, 0.5, 0.9}));
    CHECK(rep.passes);
    CHECK(rep.linf < 1e-10);
    CHECK(rep.controlled_qr_residual < 1e-10);
  }
  SUBCASE("tandem network with a mask") {
    const auto spec = make_tandem(2, 0.8, ServiceKind::Constant, 1.0);
    const auto ws = build_whittle_system(spec, class_capped_truncation(spec, {4}, 4));
    const auto rep = verify_controlled_product_form(ws.sys, make_mask(ws.sys.macro_image(), {Macrostate{0}, Macrostate{1}, Macrostate{2}}));
    CHECK(rep.passes);
  }
  SUBCASE("uniform function") {
    const auto sys = mm1k(4, 1.0, 2.0);
    CHECK(verify_controlled_product_form(sys, make_uniform(sys.macro_image())).linf < 1e-15);
  }
}

TEST_CASE("vertex decomposition") {
  SUBCASE("an indicator is its own decomposition") {
    const auto dom = FerrersSet::box({2, 2});
    const std::vector<Macrostate> a{Macrostate{0, 0}, Macrostate{0, 1}, Macrostate{1, 0}};
    const auto dec = decompose_vertex(make_mask(dom, a));
    int nonzero = 0;
    for (std::size_t k = 0; k < dec.masks.size(); ++k)
      if (dec.coefficients[k] != 0.0) {
        ++nonzero;
        CHECK(dec.coefficients[k] == 1.0);
        CHECK(dec.masks[k].members() == a);
      }
    CHECK(nonzero == 1);
  }
  SUBCASE("static function on the unit square") {
    const auto dec = decompose_vertex(make_static(FerrersSet::box({1, 1}), {0.5, 0.5}));
    REQUIRE(dec.coefficients.size() == 4);
    CHECK(dec.coefficients[0] == doctest::Approx(0.25));
    CHECK(dec.coefficients[1] == doctest::Approx(0.25));
    CHECK(dec.coefficients[2] == doctest::Approx(0.0));
    CHECK(dec.coefficients[3] == doctest::Approx(0.5));
    CHECK(dec.visit_order.front() == Macrostate{1, 1});
    CHECK(dec.masks[3].members() == std::vector<Macrostate>{Macrostate{0, 0}});
  }
  SUBCASE("random monotone functions") {
    Rng rng(5);
    for (int k = 0; k < 50; ++k) {
      const auto g = random_monotone_gamma(rng, FerrersSet::box({3, 3}));
      const auto d = check_decomposition(g);
      CHECK(d.min_coefficient >= -1e-14);
      CHECK(d.coefficient_sum == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(d.reconstruction_linf < 1e-12);
      CHECK(decompose_vertex(g).masks.size() <= g.domain().size());
    }
  }
}

TEST_CASE("monotonicity equivalence") {
  const auto dom = FerrersSet::box({2, 2});
  CHECK(check_monotonicity(policy_from_balance(make_static(dom, {0.3, 0.6}))).holds);
  const auto g = make_cum_prod(dom, [](const Macrostate& y) { return y == Macrostate{1, 1} ? 0.5 : 1.0; });
  CHECK(check_monotonicity(policy_from_balance(g)).holds);
  const auto raw = AdmissionPolicy::from_function(dom, [](const Macrostate& x, int i) {
    return i == 0 ? (x[1] == 0 ? 1.0 : 0.0) : 1.0;
  });
  const auto rep = check_monotonicity(raw);
  CHECK_FALSE(rep.holds);
  CHECK(rep.i != rep.j);
}

TEST_CASE("parameterized log-gradients") {
  SUBCASE("static at zero") {
    ThetaParameterization p(Family::Static, 2);
    const auto g = p.grad_log_gamma(Macrostate{2, 1});
    CHECK(g[0] == doctest::Approx(1.0));
    CHECK(g[1] == doctest::Approx(0.5));
    CHECK(p.admit_prob(Macrostate{4, 4}, 1) == doctest::Approx(0.5));
  }
  SUBCASE("zero at the origin for every balanced family") {
    for (Family f : {Family::Static, Family::SemiStatic, Family::DynamicCumProd}) {
      ThetaParameterization p(f, 3, 1.3);
      for (double v : p.grad_log_gamma(Macrostate{0, 0, 0})) CHECK(v == 0.0);
    }
  }
  SUBCASE("cum-prod sites") {
    ThetaParameterization p(Family::DynamicCumProd, 2, 0.7);
    p.materialize_below(Macrostate{2, 2});
    const auto y = *p.site({1, 1});
    const auto g = p.grad_log_gamma(Macrostate{2, 1});
    CHECK(g[y] == doctest::Approx(1.0 - sigmoid(0.7)));
    CHECK(p.grad_log_gamma(Macrostate{2, 0})[y] == 0.0);
    CHECK_THROWS_AS(p.grad_log_gamma(Macrostate{3, 0}), DomainError);
  }
  SUBCASE("imbalanced family has no balance function") {
    ThetaParameterization p(Family::Imbalanced, 2);
    CHECK_THROWS_AS(p.grad_log_gamma(Macrostate{1, 0}), UnsupportedError);
    p.materialize({0, 1});
    CHECK(p.admit_prob_raw({0}, 1) == doctest::Approx(0.5));
  }
  SUBCASE("admission probability is the ratio of consecutive values") {
    ThetaParameterization p(Family::SemiStatic, 3);
    Rng rng(2);
    for (auto& t : p.theta()) t = rng.uniform() * 4.0 - 2.0;
    const Macrostate x{1, 2, 0};
    for (int i = 0; i < 3; ++i)
      CHECK(p.admit_prob(x, i) == doctest::Approx(std::exp(p.log_gamma(x.plus(i)) - p.log_gamma(x))).epsilon(1e-13));
  }
  SUBCASE("central differences") {
    Rng rng(9);
    for (Family f : {Family::Static, Family::SemiStatic, Family::DynamicCumProd}) {
      ThetaParameterization p(f, 2, 0.0);
      const Macrostate x{2, 3};
      p.materialize_below(x);
      for (auto& t : p.theta()) t = rng.uniform() * 4.0 - 2.0;
      const auto g = p.grad_log_gamma(x);
      std::vector<double> fd(p.dim());
      for (std::size_t c = 0; c < p.dim(); ++c) {
        const double keep = p.theta()[c];
        p.theta()[c] = keep + 1e-5;
        const double up = p.log_gamma(x);
        p.theta()[c] = keep - 1e-5;
        const double down = p.log_gamma(x);
        p.theta()[c] = keep;
        fd[c] = (up - down) / 2e-5;
      }
      CHECK(relative_error(fd, g) < 1e-6);
    }
  }
  SUBCASE("semistatic reduces to static when pair factors saturate") {
    ThetaParameterization semi(Family::SemiStatic, 2), stat(Family::Static, 2);
    semi.theta()[0] = stat.theta()[0] = 0.4;
    semi.theta()[1] = stat.theta()[1] = -0.8;
    for (std::size_t k = 2; k < semi.dim(); ++k) semi.theta()[k] = 30.0;
    for (int i = 0; i < 2; ++i)
      CHECK(std::abs(semi.admit_prob(Macrostate{2, 1}, i) - stat.admit_prob(Macrostate{2, 1}, i)) < 1e-6);
  }
}

TEST_CASE("random balance functions round trip through policies") {
  Rng rng(17);
  for (int k = 0; k < 40; ++k) {
    const int n = 1 + static_cast<int>(rng.next() % 3);
    const auto dom = random_ferrers(rng, std::vector<int>(static_cast<std::size_t>(n), 4), 1 + rng.next() % 64);
    const auto g = random_monotone_gamma(rng, dom);
    const auto check = check_balance_condition(policy_from_balance(g).policy);
    REQUIRE(check.balanced);
    for (std::size_t x = 0; x < dom.size(); ++x) CHECK(check.reconstructed->at(x) == doctest::Approx(g.at(x)).epsilon(1e-12));
  }
}
