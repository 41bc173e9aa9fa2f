#include "qrs/simenv.hpp"

#include <cmath>

namespace qrs {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632BE59BD9B4E019ULL));
}

std::uint64_t Rng::next() { return splitmix64(key_ + 0x9E3779B97F4A7C15ULL * ++counter_); }

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double Rng::exponential(double rate) { return -std::log1p(-uniform()) / rate; }

std::size_t Rng::categorical(const std::vector<double>& weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  return categorical(weights, total);
}

std::size_t Rng::categorical(const std::vector<double>& weights, double total) {
  const double u = uniform() * total;
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (weights[k] <= 0.0) continue;
    acc += weights[k];
    last = k;
    if (u < acc) return k;
  }
  return last;
}

Trajectory simulate_ctmc(const QueueSystem& sys, const SimConfig& cfg) {
  if (cfg.horizon_events < 1) throw DomainError("horizon must be at least one event");
  const std::size_t stride = cfg.record_stride ? cfg.record_stride : 1;
  Rng rng(cfg.seed);
  Trajectory traj;
  traj.occupancy.assign(sys.size(), 0.0);
  const auto& tr = sys.transitions();
  std::size_t s = sys.empty_state();
  std::vector<double> weights;
  double t = 0.0;
  while (traj.jumps < cfg.horizon_events) {
    const auto& out = sys.out_edges(s);
    weights.clear();
    double total = 0.0;
    for (auto k : out) {
      weights.push_back(tr[k].rate);
      total += tr[k].rate;
    }
    if (!(total > 0.0)) {
      traj.halted = true;
      break;
    }
    const double hold = rng.exponential(total);
    traj.occupancy[s] += hold;
    t += hold;
    const auto& edge = tr[out[rng.categorical(weights, total)]];
    ++traj.jumps;
    if (traj.jumps % stride == 0) traj.events.push_back({t, edge.from, edge.to, edge.kind, edge.cls});
    s = edge.to;
  }
  traj.end_time = t;
  return traj;
}

void dump_trajectory_csv(const QueueSystem& sys, const Trajectory& traj, std::ostream& os) {
  os << "t,event,class,length\n";
  os.precision(17);
  for (const auto& e : traj.events)
    os << e.time << ',' << to_string(e.kind) << ',' << (e.cls >= 0 ? e.cls + 1 : 0) << ',' << sys.counting(e.to).total()
       << '\n';
}

RedundancyEnv::RedundancyEnv(RedundancySpec spec, std::uint64_t seed, std::uint64_t stream)
    : spec_(std::move(spec)), rng_(seed, stream) {
  spec_.validate();
  arrival_rate_ = spec_.total_arrival_rate();
}

int RedundancyEnv::sample_class() { return static_cast<int>(rng_.categorical(spec_.nu, arrival_rate_)); }

EnvState RedundancyEnv::reset() { return EnvState{{}, sample_class()}; }

StepOutcome RedundancyEnv::step(const EnvState& state, bool admit) {
  StepOutcome out;
  Word w = state.word;
  if (admit) w.push_back(state.incoming);
  const auto m = static_cast<std::size_t>(spec_.m);
  std::vector<double> weights;
  std::vector<std::size_t> served(m);
  while (true) {
    // Clocks: one per server (serving the oldest compatible customer), one
    // per customer for abandonment, then the next arrival.
    weights.assign(m + w.size() + 1, 0.0);
    double total = arrival_rate_;
    for (std::size_t j = 0; j < m; ++j) {
      served[j] = w.size();
      for (std::size_t p = 0; p < w.size(); ++p)
        if (spec_.compatible(w[p], static_cast<int>(j))) {
          served[j] = p;
          break;
        }
      if (served[j] < w.size()) {
        weights[j] = spec_.mu_srv[j];
        total += weights[j];
      }
    }
    for (std::size_t p = 0; p < w.size(); ++p) {
      weights[m + p] = spec_.zeta[static_cast<std::size_t>(w[p])];
      total += weights[m + p];
    }
    weights.back() = arrival_rate_;
    const std::size_t k = rng_.categorical(weights, total);
    if (k == weights.size() - 1) break;
    if (k < m) {
      const std::size_t p = served[k];
      out.reward += spec_.r[static_cast<std::size_t>(w[p])];
      ++out.completions;
      w.erase(w.begin() + static_cast<std::ptrdiff_t>(p));
    } else {
      ++out.abandonments;
      w.erase(w.begin() + static_cast<std::ptrdiff_t>(k - m));
    }
  }
  out.next = EnvState{std::move(w), sample_class()};
  return out;
}

}  // namespace qrs
