#pragma once

#include "qrs/balance.hpp"
#include "qrs/oiqueue.hpp"
#include "qrs/simenv.hpp"

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace qrs {

struct SageConfig {
  Family family = Family::Static;
  std::size_t batch = 100;
  double step = 0.1;
  double theta_init = 0.0;

  void validate() const;
};

struct AcConfig {
  Family family = Family::Static;
  double step_theta = 1e-3;
  double step_rbar = 1e-2;
  double step_v = 1e-2;
  double theta_init = 0.0;

  void validate() const;
};

struct QConfig {
  std::size_t batch = 100;
  double step_rbar = 1e-2;
  double step_q = 1e-2;
  double eps0 = 0.1;
  double eps_decrement = 2e-5;
  double eps_floor = 1e-4;

  void validate() const;
  /// Exploration rate during epoch m (0-based).
  double epsilon(std::size_t epoch) const;
  /// First epoch at which the floor is reached.
  std::size_t floor_epoch() const;
};

/// Default starting value per family: 0 for Static/SemiStatic/Imbalanced,
/// 3 for DynamicCumProd (admission probability about 0.95 per site).
double default_theta_init(Family f);

struct RunRecord {
  std::size_t step = 0;
  double mean_reward = 0.0;
  std::vector<double> admit_rate;
  std::string theta_digest;
};

struct RunLog {
  std::string algorithm;
  std::uint64_t seed = 0;
  int n = 0;
  std::vector<RunRecord> records;
  std::vector<double> final_theta;
  std::size_t table_size = 0;  // v or q entries materialized
};

/// Steps recorded: every step below 1000, then multiples of 10^(i-2)
/// between 10^i and 10^(i+1).
bool is_record_step(std::size_t step);

std::string theta_digest(const std::vector<double>& theta);

void write_run_csv(const RunLog& log, std::ostream& os);

/// Admission probability of the incoming class in an environment state.
double policy_admit_prob(const ThetaParameterization& param, const EnvState& state);

struct SageSample {
  Word word;
  int cls = 0;
  int admit = 0;
  double reward = 0.0;
};

/// C + E with C = (1/(N-1)) sum (R - Rbar) grad log Gamma(S) and
/// E = (1/N) sum R grad log pi(S, I, A). Sites must be materialized.
std::vector<double> sage_gradient_estimate(const std::vector<SageSample>& batch, const ThetaParameterization& param);

RunLog run_sage(const RedundancySpec& spec, const SageConfig& cfg, std::size_t steps, std::uint64_t seed);
RunLog run_ac(const RedundancySpec& spec, const AcConfig& cfg, std::size_t steps, std::uint64_t seed);
RunLog run_q(const RedundancySpec& spec, const QConfig& cfg, std::size_t steps, std::uint64_t seed);

/// Exact quantities on the truncation {total customers <= cap}.
class ExactModel {
 public:
  ExactModel(RedundancySpec spec, int cap);

  const RedundancySpec& spec() const { return spec_; }
  int cap() const { return cap_; }
  const FerrersSet& truncation() const { return trunc_; }
  const std::vector<Word>& words() const { return words_; }

  /// Expected reward collected from post-decision word w until the next
  /// arrival.
  double expected_reward(const Word& w) const;

  /// Sites for every macrostate reachable by one admission from the
  /// truncation.
  void materialize(ThetaParameterization& param) const;

  /// Share of the stationary mass on {total <= cap} relative to
  /// {total <= 2 cap}.
  double captured_mass(const ThetaParameterization& param) const;
  /// Throws DomainError below 1 - 1e-8.
  void require_mass(const ThetaParameterization& param, double min_mass = 1.0 - 1e-8) const;

  /// Stationary distribution over words() at decision epochs.
  std::vector<double> stationary(const ThetaParameterization& param) const;

  std::vector<double> log_pi_gradient(const ThetaParameterization& param, const Word& s) const;
  /// Stationary mean of the score; zero up to rounding.
  std::vector<double> mean_score(const ThetaParameterization& param) const;

  double gain(const ThetaParameterization& param) const;
  std::vector<double> gain_gradient(const ThetaParameterization& param) const;

  /// N independent samples: word from the stationary distribution, class
  /// from nu, action from the policy, then one environment step.
  std::vector<SageSample> sample_batch(const ThetaParameterization& param, std::size_t N, RedundancyEnv& env,
                                       Rng& rng) const;

 private:
  std::vector<double> macro_mass(const ThetaParameterization& param, const FerrersSet& domain) const;

  RedundancySpec spec_;
  int cap_;
  FerrersSet trunc_;
  std::vector<Word> words_;
  std::vector<double> base_;  // product form, 1 at the empty word
  mutable std::map<Word, double> reward_cache_;
};

/// Verifies the mass requirement, then the score gradient at s.
std::vector<double> exact_log_pi_gradient(const ExactModel& model, const ThetaParameterization& param, const Word& s);
std::vector<double> exact_gain_gradient(const ExactModel& model, const ThetaParameterization& param);

}  // namespace qrs
