#pragma once

#include "qrs/core.hpp"
#include "qrs/oiqueue.hpp"

#include <cstdint>
#include <ostream>
#include <vector>

namespace qrs {

std::uint64_t splitmix64(std::uint64_t x);
/// Independent 64-bit key per (seed, stream).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Counter-based generator: draw k is a hash of (key, k), so streams never
/// overlap and a run is reproducible from (seed, stream) alone.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) : key_(derive_seed(seed, stream)) {}

  std::uint64_t next();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double exponential(double rate);
  /// Index drawn with probability weights[k] / sum(weights).
  std::size_t categorical(const std::vector<double>& weights);
  std::size_t categorical(const std::vector<double>& weights, double total);
  bool bernoulli(double p) { return uniform() < p; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

struct SimConfig {
  std::uint64_t seed = 1;
  std::size_t horizon_events = 1000;
  std::size_t record_stride = 1;
};

struct SimEvent {
  double time;
  std::size_t from;
  std::size_t to;
  TransitionKind kind;
  int cls;
};

struct Trajectory {
  std::vector<SimEvent> events;  // every record_stride-th jump
  std::vector<double> occupancy;  // time spent in each microstate
  double end_time = 0.0;
  std::size_t jumps = 0;
  bool halted = false;  // stopped in a state with no outflow
};

/// Exact jump simulation from the empty state.
Trajectory simulate_ctmc(const QueueSystem& sys, const SimConfig& cfg);

/// t,event,class,length
void dump_trajectory_csv(const QueueSystem& sys, const Trajectory& traj, std::ostream& os);

struct EnvState {
  Word word;
  int incoming = 0;
};

struct StepOutcome {
  double reward = 0.0;
  EnvState next;
  int completions = 0;
  int abandonments = 0;
};

/// Redundancy system observed at arrival epochs. Each active server serves
/// the oldest compatible customer; each server completion and each
/// abandonment runs on its own exponential clock, racing the next arrival.
class RedundancyEnv {
 public:
  RedundancyEnv(RedundancySpec spec, std::uint64_t seed, std::uint64_t stream = 0);

  const RedundancySpec& spec() const { return spec_; }
  EnvState reset();
  StepOutcome step(const EnvState& state, bool admit);

 private:
  int sample_class();

  RedundancySpec spec_;
  Rng rng_;
  double arrival_rate_;
};

}  // namespace qrs
