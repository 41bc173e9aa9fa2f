#include <doctest.h>

#include "qrs/verify.hpp"
#include "qrs/whittle.hpp"

#include <cmath>

using namespace qrs;

namespace {

WhittleSpec feedback_site(double phi0, ServiceKind kind) {
  WhittleSpec w;
  w.n = w.m = 1;
  w.enter = {1.0};
  w.leave = {0.5};
  w.route = {{0.5}};
  w.phi0 = phi0;
  w.set_service(kind, 1.0);
  return w;
}

}  // namespace

TEST_CASE("traffic equations") {
  const auto tandem = solve_traffic(make_tandem(2, 1.0, ServiceKind::Constant, 1.0));
  CHECK(tandem.lambda[0] == doctest::Approx(1.0));
  CHECK(tandem.lambda[1] == doctest::Approx(1.0));
  CHECK(tandem.identity_residual < 1e-12);
  CHECK(solve_traffic(make_tandem(1, 1.0, ServiceKind::Constant, 1.0)).lambda[0] == doctest::Approx(1.0));
  const auto fb = solve_traffic(feedback_site(1.0, ServiceKind::Constant));
  CHECK(fb.lambda[0] == doctest::Approx(2.0));
}

TEST_CASE("routing that never leaves is rejected") {
  auto w = make_tandem(2, 1.0, ServiceKind::Constant, 1.0);
  w.leave = {0.0, 0.0};
  w.route[1][0] = 1.0;
  CHECK_THROWS_AS(solve_traffic(w), SpecError);
  auto bad = make_tandem(2, 1.0, ServiceKind::Constant, 1.0);
  bad.route[0][1] = 0.5;
  CHECK_THROWS_AS(bad.validate(), SpecError);
}

TEST_CASE("built-in service rates are balanced") {
  for (auto kind : {ServiceKind::Constant, ServiceKind::Linear, ServiceKind::ProcessorSharing}) {
    const auto w = make_tandem(2, 0.7, kind, 1.3);
    CHECK(check_phi_balance(w, class_capped_truncation(w, {4}, 4)).balanced);
  }
}

TEST_CASE("mixing rate shapes across sites breaks balance") {
  auto w = make_tandem(2, 1.0, ServiceKind::Constant, 1.0);
  const auto constant = w.phi;
  w.phi = [constant](int l, const LabelState& s) { return l == 0 ? constant(l, s) : 1.0 * s[l]; };
  const auto check = check_phi_balance(w, class_capped_truncation(w, {3}, 3));
  CHECK_FALSE(check.balanced);
  CHECK(check.label >= 0);
  CHECK_THROWS_AS(check_equivalence(w, make_uniform(class_capped_truncation(w, {3}, 3)),
                                    class_capped_truncation(w, {3}, 3)),
                  SpecError);
}

TEST_CASE("product form values") {
  const auto fb = feedback_site(1.0, ServiceKind::Constant);
  const auto traffic = solve_traffic(fb);
  CHECK(whittle_product_form(fb, traffic, LabelState{0}) == 1.0);
  CHECK(whittle_product_form(fb, traffic, LabelState{3}) == doctest::Approx(8.0));
}

TEST_CASE("kernel structure") {
  const auto tandem = make_tandem(2, 1.0, ServiceKind::Constant, 1.0);
  const auto ws = build_whittle_system(tandem, class_capped_truncation(tandem, {2}, 2));
  const auto from = *ws.states.index_of(LabelState{1, 0});
  const auto to = *ws.states.index_of(LabelState{0, 1});
  bool internal = false;
  for (auto e : ws.sys.out_edges(from)) {
    const auto& t = ws.sys.transitions()[e];
    if (t.to == to) {
      CHECK(t.kind == TransitionKind::Internal);
      CHECK(t.rate == doctest::Approx(1.0));
      internal = true;
    }
  }
  CHECK(internal);

  const auto fb = feedback_site(1.0, ServiceKind::Linear);
  const auto single = build_whittle_system(fb, class_capped_truncation(fb, {3}, 3));
  for (const auto& t : single.sys.transitions()) CHECK(t.kind != TransitionKind::Internal);
  CHECK(validate_structure(single.sys).passes);
}

TEST_CASE("reference networks match their product forms and are equivalent to OI queues") {
  for (const auto& inst : reference_whittle_instances()) {
    CAPTURE(inst.label);
    const auto traffic = solve_traffic(inst.spec);
    const auto ws = build_whittle_system(inst.spec, inst.truncation);
    CHECK(validate_structure(ws.sys).passes);
    const auto pi = solve_stationary(ws.sys);
    double z = 0.0;
    for (const auto& s : inst.truncation.members()) z += whittle_product_form(inst.spec, traffic, s);
    for (std::size_t k = 0; k < inst.truncation.size(); ++k)
      CHECK(std::abs(whittle_product_form(inst.spec, traffic, inst.truncation[k]) / z - pi.values[k]) < 1e-9);
    CHECK(check_equivalence(inst.spec, make_uniform(inst.truncation), inst.truncation).l1 < 1e-9);
  }
}

TEST_CASE("a balance function that tells sites apart is unsupported") {
  const auto tandem = make_tandem(2, 1.0, ServiceKind::Constant, 1.0);
  const auto trunc = class_capped_truncation(tandem, {2}, 2);
  std::vector<double> v;
  for (const auto& s : trunc.members()) v.push_back(s[1] > 0 ? 0.5 : 1.0);
  CHECK_THROWS_AS(check_equivalence(tandem, BalanceFunction(trunc, v), trunc), UnsupportedError);
}

TEST_CASE("class totals lift to label states") {
  const auto tandem = make_tandem(2, 1.0, ServiceKind::Constant, 1.0);
  const auto trunc = class_capped_truncation(tandem, {2}, 2);
  const auto lifted = lift_to_labels(tandem, make_size_based(FerrersSet::box({2}), [](int l) { return l == 0 ? 0.5 : 1.0; }), trunc);
  CHECK(lifted(LabelState{1, 0}) == doctest::Approx(0.5));
  CHECK(lifted(LabelState{0, 1}) == doctest::Approx(0.5));
  CHECK(lifted(LabelState{1, 1}) == doctest::Approx(0.5));
  CHECK(check_equivalence(tandem, lifted, trunc).passes);
  CHECK_THROWS_AS(lift_to_labels(tandem, make_uniform(FerrersSet::box({1})), trunc), DomainError);
}
