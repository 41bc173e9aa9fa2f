#include <doctest.h>

#include "qrs/lp_export.hpp"

#include <sstream>

using namespace qrs;

namespace {

AdmissionProblem unit_square() {
  const auto box = FerrersSet::box({1, 1});
  std::vector<Edge> edges;
  for (std::size_t k = 0; k < box.size(); ++k)
    for (int i = 0; i < 2; ++i) {
      const auto& s = box[k];
      if (s[i] == 0) edges.push_back({k, *box.index_of(s.plus(i)), 0.1});
      else edges.push_back({k, *box.index_of(s.minus(i)), static_cast<double>(s[i]) / s.total()});
    }
  AdmissionProblem p{QueueSystem(2, box.members(), edges), {}, "square"};
  p.rewards.rcont.assign(p.sys.size(), 0.0);
  for (const auto& t : p.sys.transitions()) p.rewards.rdisc.push_back(t.kind == TransitionKind::Arrival ? 1.0 : 0.0);
  return p;
}

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("balanced variant on the unit square") {
  std::ostringstream os;
  const auto stats = export_lp(unit_square(), LpVariant::Balanced, os);
  const auto text = os.str();
  CHECK(stats.variables == 4);
  CHECK(stats.rows == 5);
  CHECK(count(text, " mono_") == 4);
  CHECK(count(text, " norm:") == 1);
  CHECK(text.find("mono_0_0_1: g_0_0 - g_1_0 >= 0") != std::string::npos);
  CHECK(text.rfind("\\ ", 0) == 0);
  CHECK(text.find("End\n") != std::string::npos);
}

TEST_CASE("general variant caps admissions by the offered flow") {
  std::ostringstream os;
  const auto p = unit_square();
  const auto stats = export_lp(p, LpVariant::General, os);
  const auto text = os.str();
  CHECK(stats.variables == p.sys.size() + p.sys.transitions().size());
  CHECK(count(text, " bal_") == 4);
  CHECK(text.find("cap_0_1: eta_0_1 - 0.10000000000000001 pi_0 <= 0") != std::string::npos);
  CHECK(count(text, " <= 1\n") == 4);
}

TEST_CASE("local-balance variant has symmetry rows") {
  std::ostringstream os;
  export_lp(unit_square(), LpVariant::ReversibleLocal, os);
  const auto text = os.str();
  CHECK(count(text, " sym_") == 4);
  CHECK(text.find("eta_0_1 - eta_1_0 = 0") != std::string::npos);
  CHECK(count(text, " bal_") == 0);
}

TEST_CASE("local-balance variant needs identity counting") {
  const std::vector<Macrostate> counting{Macrostate{0}, Macrostate{1}, Macrostate{1}};
  AdmissionProblem p{QueueSystem(1, counting, {{0, 1, 1.0}, {1, 2, 1.0}, {2, 0, 1.0}}), {}, "ring"};
  p.rewards.rcont.assign(3, 0.0);
  p.rewards.rdisc.assign(3, 0.0);
  std::ostringstream os;
  CHECK_THROWS_AS(export_lp(p, LpVariant::ReversibleLocal, os), UnsupportedError);
  CHECK_NOTHROW(export_lp(p, LpVariant::General, os));
}

TEST_CASE("variant names") {
  for (auto v : {LpVariant::General, LpVariant::Balanced, LpVariant::ReversibleLocal})
    CHECK(lp_variant_from_string(to_string(v)) == v);
  CHECK_THROWS_AS(lp_variant_from_string("dual"), SpecError);
}
