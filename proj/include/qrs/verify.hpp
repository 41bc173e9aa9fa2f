#pragma once

#include "qrs/balance.hpp"
#include "qrs/core.hpp"
#include "qrs/oiqueue.hpp"
#include "qrs/rl.hpp"
#include "qrs/simenv.hpp"
#include "qrs/whittle.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace qrs {

// Random instance generators shared by the property suites, the unit tests
// and the acceptance binary. All draws come from the caller's Rng.

/// Grows a Ferrers set from the origin by adding random corners, with
/// x_i <= caps[i], until it has target members or no corner is left.
FerrersSet random_ferrers(Rng& rng, const std::vector<int>& caps, std::size_t target);
/// Random Ferrers subset of domain.
FerrersSet random_ferrers_within(Rng& rng, const FerrersSet& domain, std::size_t target);

/// Gamma(0) = 1, Gamma(x) = min_i Gamma(x - e_i) * U with U uniform on
/// [0.3, 1), and 0 with probability zero_prob.
BalanceFunction random_monotone_gamma(Rng& rng, const FerrersSet& domain, double zero_prob = 0.1);

struct NamedGamma {
  std::string family;
  BalanceFunction gamma;
};
/// One random member of each family: static, decentralized, size-based,
/// mask, cum-prod.
std::vector<NamedGamma> family_instances(Rng& rng, const FerrersSet& domain);

struct OiInstance {
  std::string label;
  OISpec spec;
  FerrersSet truncation;
};
/// Random OI queue with n <= 3 classes and at most max_words microstates.
OiInstance random_oi_instance(Rng& rng, std::size_t max_words = 500);

struct WhittleInstance {
  std::string label;
  WhittleSpec spec;
  FerrersSet truncation;
};
/// Random network with n, m <= 2, random routing and a built-in rate function.
WhittleInstance random_whittle_instance(Rng& rng);
/// Fixed networks: single site, tandem, feedback, two-class routing, PS line.
std::vector<WhittleInstance> reference_whittle_instances();

/// n = 2 redundancy instance with fast abandonment, used where exact
/// gradients need a small truncation.
RedundancySpec small_redundancy_spec();

struct ControlledProductFormCase {
  std::string label;
  std::size_t microstates = 0;
  std::string family;
  ControlledProductFormReport report;
};
std::vector<ControlledProductFormCase> controlled_product_form_cases(std::uint64_t seed, int instances);

struct DecompositionCheck {
  double min_coefficient = 0.0;
  double coefficient_sum = 0.0;
  double reconstruction_linf = 0.0;
};
DecompositionCheck check_decomposition(const BalanceFunction& gamma);

struct GradientCheck {
  std::string family;
  double log_pi_rel_err = 0.0;  // vs. central differences of full re-solves
  double gain_rel_err = 0.0;    // vs. central differences of the exact gain
  double mean_score_linf = 0.0;
  double captured_mass = 0.0;
};
/// Families Static, SemiStatic and DynamicCumProd at a random theta.
std::vector<GradientCheck> gradient_checks(std::uint64_t seed, int cap = 8);

struct SageConsistency {
  std::vector<double> exact;
  std::vector<double> mean;
  std::vector<double> std_error;
  double worst_z = 0.0;  // max |mean - exact| / SE
};
SageConsistency sage_consistency(const RedundancySpec& spec, int cap, Family family, double theta_init,
                                 std::size_t batches, std::size_t batch_size, std::uint64_t seed);

/// Max |a - b| / max |b|, 0 when both vanish.
double relative_error(const std::vector<double>& a, const std::vector<double>& b);

struct SuiteReport {
  std::string suite;
  bool passed = true;
  std::vector<std::string> lines;
  std::map<std::string, double> metrics;
};

const std::vector<std::string>& suite_names();
/// Throws SpecError on an unknown suite name.
SuiteReport run_suite(const std::string& name, std::uint64_t seed = 1);

}  // namespace qrs
