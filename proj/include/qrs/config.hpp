#pragma once

#include "qrs/balance.hpp"
#include "qrs/control.hpp"
#include "qrs/lp_export.hpp"
#include "qrs/oiqueue.hpp"
#include "qrs/rl.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace qrs {

class ConfigError : public Error {
 public:
  using Error::Error;
};

inline constexpr int kSchemaVersion = 1;

struct ToysBlock {
  std::vector<std::string> ids = {"path_reward", "corner_reward", "realistic"};
  std::vector<double> nu = {0.1, 0.1};
};

struct SweepBlock {
  std::string toy = "realistic";
  std::vector<double> nu1 = {0.1, 0.3, 0.5, 0.7, 0.9};
  std::vector<double> nu2 = {0.1, 0.3, 0.5, 0.7, 0.9};
};

struct ModelBlock {
  std::string scenario = "nonadversarial";
  RedundancySpec spec = RedundancySpec::case_study(false);
};

struct AlgorithmBlock {
  std::string name = "sage";  // sage, ac, q
  std::string family = "static";
  double theta_init = 0.0;
  SageConfig sage;
  AcConfig ac;
  QConfig q;
};

struct LpBlock {
  std::string toy = "path_reward";
  std::vector<double> nu = {0.1, 0.1};
  std::string variant = "general";
};

struct VerifyBlock {
  std::vector<std::string> suites = {"core", "balance", "models", "gradients"};
};

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  std::string output_dir = "out";
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::size_t steps = 100000;
  int jobs = 1;
  ToysBlock toys;
  SweepBlock sweep;
  ModelBlock model;
  AlgorithmBlock algorithm;
  LpBlock lp;
  VerifyBlock verify;
};

/// Throws ConfigError on unknown keys, wrong types, or a schema mismatch.
/// Missing keys keep their defaults.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
nlohmann::json to_json(const ExperimentConfig& c);

nlohmann::json to_json(const BalanceFunction& g);
BalanceFunction balance_function_from_json(const nlohmann::json& j);

/// "1,2,5-8"
std::vector<std::uint64_t> parse_seed_list(const std::string& s);

}  // namespace qrs
