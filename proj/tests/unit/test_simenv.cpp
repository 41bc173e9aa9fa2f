#include <doctest.h>

#include "qrs/rl.hpp"
#include "qrs/simenv.hpp"

#include <cmath>
#include <map>
#include <sstream>

using namespace qrs;

namespace {

QueueSystem mm1k(int K, double nu, double mu) {
  std::vector<Macrostate> counting;
  std::vector<Edge> edges;
  for (int x = 0; x <= K; ++x) {
    counting.push_back(Macrostate{x});
    const auto k = static_cast<std::size_t>(x);
    if (x < K) edges.push_back({k, k + 1, nu});
    if (x > 0) edges.push_back({k, k - 1, mu});
  }
  return QueueSystem(1, counting, edges);
}

// Mean and standard error from independent batch values.
std::pair<double, double> mean_se(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()))};
}

}  // namespace

TEST_CASE("generator") {
  Rng a(7, 1), b(7, 1), c(7, 2);
  CHECK(a.next() == b.next());
  CHECK(a.next() != c.next());
  Rng u(3);
  double lo = 1.0, hi = 0.0, sum = 0.0;
  for (int k = 0; k < 100000; ++k) {
    const double x = u.uniform();
    lo = std::min(lo, x);
    hi = std::max(hi, x);
    sum += u.exponential(2.0);
  }
  CHECK(lo >= 0.0);
  CHECK(hi < 1.0);
  CHECK(sum / 100000 == doctest::Approx(0.5).epsilon(0.01));
  CHECK(u.categorical({0.0, 1.0, 0.0}) == 1);
}

TEST_CASE("M/M/1/5 occupancy matches the stationary distribution") {
  const auto sys = mm1k(5, 0.8, 1.0);
  const auto pi = solve_stationary(sys).values;
  constexpr int batches = 50;
  std::vector<std::vector<double>> share(sys.size());
  for (int b = 0; b < batches; ++b) {
    const auto traj = simulate_ctmc(sys, {static_cast<std::uint64_t>(100 + b), 20000, 1000});
    for (std::size_t s = 0; s < sys.size(); ++s) share[s].push_back(traj.occupancy[s] / traj.end_time);
  }
  for (std::size_t s = 0; s < sys.size(); ++s) {
    const auto [m, se] = mean_se(share[s]);
    CAPTURE(s);
    CHECK(std::abs(m - pi[s]) < 3.0 * se);
  }
}

TEST_CASE("a system without arrivals halts at once") {
  const auto traj = simulate_ctmc(mm1k(3, 0.0, 1.0), {1, 100, 1});
  CHECK(traj.halted);
  CHECK(traj.events.empty());
  CHECK(traj.jumps == 0);
  CHECK_THROWS_AS(simulate_ctmc(mm1k(3, 1.0, 1.0), {1, 0, 1}), DomainError);
}

TEST_CASE("simulation is reproducible from the seed") {
  const auto sys = mm1k(5, 1.0, 1.0);
  const auto a = simulate_ctmc(sys, {9, 500, 1});
  const auto b = simulate_ctmc(sys, {9, 500, 1});
  REQUIRE(a.events.size() == b.events.size());
  for (std::size_t k = 0; k < a.events.size(); ++k) {
    CHECK(a.events[k].time == b.events[k].time);
    CHECK(a.events[k].to == b.events[k].to);
  }
  std::ostringstream os;
  dump_trajectory_csv(sys, a, os);
  CHECK(os.str().rfind("t,event,class,length\n", 0) == 0);
  CHECK(simulate_ctmc(sys, {9, 500, 10}).events.size() == 50);
}

TEST_CASE("reset draws the incoming class in proportion to the arrival rates") {
  auto spec = RedundancySpec::case_study(false);
  spec.nu = {0.2, 0.3, 0.5};
  RedundancyEnv env(spec, 5);
  CHECK(RedundancyEnv(spec, 5).reset().incoming == RedundancyEnv(spec, 5).reset().incoming);
  constexpr int N = 100000;
  std::vector<int> hits(3, 0);
  for (int k = 0; k < N; ++k) {
    const auto s = env.reset();
    CHECK(s.word.empty());
    ++hits[static_cast<std::size_t>(s.incoming)];
  }
  for (std::size_t i = 0; i < 3; ++i) {
    const double p = spec.nu[i];
    CHECK(std::abs(hits[i] / double(N) - p) < 3.0 * std::sqrt(p * (1 - p) / N));
  }
  spec.nu = {1.0, 0.0, 0.0};
  CHECK_THROWS_AS(RedundancyEnv(spec, 1), SpecError);
}

TEST_CASE("rejecting into an empty system earns nothing") {
  RedundancyEnv env(RedundancySpec::case_study(false), 2);
  const auto out = env.step(EnvState{{}, 0}, false);
  CHECK(out.reward == 0.0);
  CHECK(out.next.word.empty());
  CHECK(out.completions + out.abandonments == 0);
}

TEST_CASE("a lone class-3 customer completes first with probability 0.2") {
  RedundancyEnv env(RedundancySpec::case_study(true), 11);
  constexpr int N = 200000;
  int completed = 0;
  double reward = 0.0;
  for (int k = 0; k < N; ++k) {
    const auto out = env.step(EnvState{{}, 2}, true);
    completed += out.completions;
    reward += out.reward;
  }
  const double p = completed / double(N);
  CHECK(std::abs(p - 0.2) < 3.0 * std::sqrt(0.2 * 0.8 / N));
  // Reward is 16 on completion, so its mean is 3.2 with sd 16*sqrt(.16).
  CHECK(std::abs(reward / N - 3.2) < 3.0 * 16.0 * 0.4 / std::sqrt(double(N)));
}

TEST_CASE("expected step reward matches the exact race computation") {
  const auto spec = RedundancySpec::case_study(false);
  const ExactModel model(spec, 4);
  RedundancyEnv env(spec, 21);
  for (const Word& w : {Word{0}, Word{2, 1}, Word{0, 0, 2}, Word{1, 2, 0, 1}}) {
    CAPTURE(word_str(w));
    std::vector<double> batch;
    for (int b = 0; b < 40; ++b) {
      double r = 0.0;
      for (int k = 0; k < 2500; ++k) r += env.step(EnvState{w, 0}, false).reward;
      batch.push_back(r / 2500);
    }
    const auto [m, se] = mean_se(batch);
    CHECK(std::abs(m - model.expected_reward(w)) < 3.0 * se);
  }
}

TEST_CASE("fast abandonment leaves nothing to earn") {
  auto spec = RedundancySpec::case_study(false);
  spec.zeta = {1e6, 1e6, 1e6};
  RedundancyEnv env(spec, 4);
  double reward = 0.0;
  for (int k = 0; k < 10000; ++k) reward += env.step(EnvState{{0, 1, 2}, 0}, true).reward;
  CHECK(reward / 10000 < 1e-3);
}

TEST_CASE("decision-epoch distribution and average reward under a fixed balanced policy") {
  const auto spec = RedundancySpec::case_study(false);
  // Cumulative-product policy that practically never admits a fifth customer.
  ThetaParameterization param(Family::DynamicCumProd, 3, 1.0);
  const auto reach = FerrersSet::simplex(3, 5);
  for (const auto& x : reach.members()) {
    if (x.is_zero()) continue;
    const auto site = param.materialize(x.counts);
    if (x.total() == 5) param.theta()[site] = -60.0;
  }
  const ExactModel model(spec, 4);
  const auto pi = model.stationary(param);
  const double exact_gain = model.gain(param);

  RedundancyEnv env(spec, 77);
  Rng coin(77, 1);
  std::map<Word, std::size_t> index;
  for (std::size_t k = 0; k < model.words().size(); ++k) index[model.words()[k]] = k;
  constexpr int batches = 100, per_batch = 10000;
  std::vector<std::vector<double>> freq(pi.size());
  std::vector<double> rewards;
  auto state = env.reset();
  for (int b = 0; b < batches; ++b) {
    std::vector<double> count(pi.size(), 0.0);
    double r = 0.0;
    for (int k = 0; k < per_batch; ++k) {
      count[index.at(state.word)] += 1.0;
      const bool admit = coin.bernoulli(policy_admit_prob(param, state));
      const auto out = env.step(state, admit);
      r += out.reward;
      state = out.next;
    }
    for (std::size_t s = 0; s < pi.size(); ++s) freq[s].push_back(count[s] / per_batch);
    rewards.push_back(r / per_batch);
  }
  int outside = 0;
  for (std::size_t s = 0; s < pi.size(); ++s) {
    const auto [m, se] = mean_se(freq[s]);
    if (!(std::abs(m - pi[s]) < 3.0 * se + 1e-12)) ++outside;
  }
  CHECK(outside == 0);
  const auto [m, se] = mean_se(rewards);
  CHECK(std::abs(m - exact_gain) < 3.0 * se);
}
