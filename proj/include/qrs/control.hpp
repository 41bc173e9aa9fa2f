#pragma once

#include "qrs/balance.hpp"
#include "qrs/core.hpp"

#include <functional>
#include <string>
#include <vector>

namespace qrs {

struct RewardSpec {
  std::vector<double> rcont;  // per microstate, reward per unit time
  std::vector<double> rdisc;  // per transition (indexed like sys.transitions())
};

struct AdmissionProblem {
  QueueSystem sys;
  RewardSpec rewards;
  std::string name;

  void validate() const;
  /// Same system with both reward functions negated.
  AdmissionProblem negated() const;
};

/// probs[s][i]: admission probability of class i in microstate s.
struct PolicyTable {
  std::vector<std::vector<double>> probs;
  bool deterministic = false;

  static PolicyTable admit_all(const QueueSystem& sys);
  static PolicyTable reject_all(const QueueSystem& sys);
  static PolicyTable from_macro(const QueueSystem& sys, const AdmissionPolicy& policy);
};

/// Gain of an already-controlled system (same transition indexing as the
/// problem's system).
double gain_of(const QueueSystem& controlled, const RewardSpec& rewards);
double gain(const AdmissionProblem& problem, const PolicyTable& policy);
double gain(const AdmissionProblem& problem, const AdmissionPolicy& policy);

struct OptimalResult {
  PolicyTable policy;
  double gain = 0.0;
  std::vector<double> bias;  // relative values, 0 at the empty state
  double bellman_residual = 0.0;
  int iterations = 0;
  double uniformization = 0.0;
};

OptimalResult optimal_policy(const AdmissionProblem& problem, int max_iterations = 1000);

/// Bellman optimality residual of (g, h) in rate units.
double bellman_residual(const AdmissionProblem& problem, double g, const std::vector<double>& h);

/// Closed-form weights of the balanced objective, computed once from the
/// uncontrolled stationary distribution.
struct BalancedObjective {
  FerrersSet domain;
  std::vector<double> mass;                  // Pi*(x)
  std::vector<double> occupation;            // reward flow at x that needs no admission
  std::vector<std::vector<double>> arrival;  // [x][i] reward flow of class-i admissions out of x

  static BalancedObjective build(const AdmissionProblem& problem);
  /// Gain of the deterministic balanced policy with mask A.
  double evaluate(const std::vector<Macrostate>& mask) const;
};

/// Ferrers subsets of a 2-D Ferrers domain, as column heights h[x1] with
/// h = -1 for empty columns. Stops with UnsupportedError past cap.
void for_each_mask_2d(const FerrersSet& domain, std::size_t cap,
                      const std::function<void(const std::vector<int>& heights)>& visit);
std::vector<Macrostate> mask_from_heights(const std::vector<int>& heights);
std::size_t count_masks_2d(const FerrersSet& domain);

struct BalancedResult {
  std::vector<Macrostate> mask;
  double gain = 0.0;
  std::size_t masks_enumerated = 0;
};

inline constexpr std::size_t kMaskCap = 1000000;

BalancedResult best_balanced(const AdmissionProblem& problem, std::size_t cap = kMaskCap, int jobs = 1);

struct LossReport {
  double g_opt = 0.0;
  double g_balanced = 0.0;
  double g_worst = 0.0;
  double loss_pct = 0.0;
  bool defined = false;
  OptimalResult optimal;
  BalancedResult balanced;
};

LossReport loss(const AdmissionProblem& problem, int jobs = 1);

enum class Toy { PathReward, CornerReward, Realistic };

const char* to_string(Toy t);
Toy toy_from_string(const std::string& s);

/// Two-class processor-sharing queue on [0,5]^2 with the toy reward.
AdmissionProblem make_toy(Toy id, double nu1, double nu2);

/// M/M/1/K with reward rcont = -holding * x and admission reward per customer.
AdmissionProblem make_single_class(int K, double nu, double mu, double holding, double admission_reward);

}  // namespace qrs
