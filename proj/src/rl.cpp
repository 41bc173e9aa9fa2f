#include "qrs/rl.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>
#include <unordered_map>

namespace qrs {

void SageConfig::validate() const {
  if (batch < 2) throw SpecError("SAGE batch must hold at least two decisions");
  if (!(step > 0.0 && step < 1.0)) throw SpecError("SAGE step must lie in (0, 1)");
  if (family == Family::Imbalanced)
    throw SpecError("SAGE needs a balanced family: the imbalanced family has no balance function to score");
}

void AcConfig::validate() const {
  for (double s : {step_theta, step_rbar, step_v})
    if (!(s > 0.0 && s < 1.0)) throw SpecError("actor-critic steps must lie in (0, 1)");
}

void QConfig::validate() const {
  if (batch < 1) throw SpecError("Q-learning epoch must hold at least one decision");
  for (double s : {step_rbar, step_q})
    if (!(s > 0.0 && s < 1.0)) throw SpecError("Q-learning steps must lie in (0, 1)");
  if (!(eps0 >= eps_floor && eps_floor >= 0.0 && eps_decrement >= 0.0 && eps0 <= 1.0))
    throw SpecError("exploration schedule must be non-increasing within [0, 1]");
}

double QConfig::epsilon(std::size_t epoch) const {
  double eps = eps0;
  // Same recursion as the schedule; stops once the floor is hit.
  for (std::size_t m = 0; m < epoch && eps > eps_floor; ++m) eps = std::max(eps_floor, eps - eps_decrement);
  return eps;
}

std::size_t QConfig::floor_epoch() const {
  double eps = eps0;
  std::size_t m = 0;
  while (eps > eps_floor) {
    if (eps_decrement <= 0.0) return static_cast<std::size_t>(-1);
    eps = std::max(eps_floor, eps - eps_decrement);
    ++m;
  }
  return m;
}

double default_theta_init(Family f) { return f == Family::DynamicCumProd ? 3.0 : 0.0; }

bool is_record_step(std::size_t step) {
  if (step < 1000) return true;
  std::size_t decade = 1000;
  while (step >= decade * 10) decade *= 10;
  return step % (decade / 100) == 0;
}

std::string theta_digest(const std::vector<double>& theta) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : theta) {
    std::uint64_t bits;
    static_assert(sizeof bits == sizeof v);
    std::memcpy(&bits, &v, sizeof bits);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_run_csv(const RunLog& log, std::ostream& os) {
  os << "step,mean_reward";
  for (int i = 0; i < log.n; ++i) os << ",admit_rate_class_" << i + 1;
  os << '\n';
  char buf[64];
  for (const auto& r : log.records) {
    std::snprintf(buf, sizeof buf, "%.12g", r.mean_reward);
    os << r.step << ',' << buf;
    for (double a : r.admit_rate) {
      std::snprintf(buf, sizeof buf, "%.12g", a);
      os << ',' << buf;
    }
    os << '\n';
  }
}

double policy_admit_prob(const ThetaParameterization& param, const EnvState& state) {
  if (param.family() == Family::Imbalanced) return param.admit_prob_raw(state.word, state.incoming);
  return param.admit_prob(word_counts(state.word, param.n()), state.incoming);
}

std::vector<double> sage_gradient_estimate(const std::vector<SageSample>& batch, const ThetaParameterization& param) {
  if (!param.balanced()) throw UnsupportedError("SAGE: the imbalanced family has no balance function");
  const std::size_t N = batch.size();
  if (N < 2) throw DomainError("SAGE: batch must hold at least two samples");
  double rbar = 0.0;
  for (const auto& b : batch) rbar += b.reward;
  rbar /= static_cast<double>(N);
  std::vector<double> cov(param.dim(), 0.0), exp(param.dim(), 0.0);
  for (const auto& b : batch) {
    const auto x = word_counts(b.word, param.n());
    const auto g = param.grad_log_gamma(x);
    const auto lp = param.grad_log_policy(x, b.cls, b.admit);
    for (std::size_t k = 0; k < g.size(); ++k) {
      cov[k] += (b.reward - rbar) * g[k];
      exp[k] += b.reward * lp[k];
    }
  }
  for (std::size_t k = 0; k < cov.size(); ++k)
    cov[k] = cov[k] / static_cast<double>(N - 1) + exp[k] / static_cast<double>(N);
  return cov;
}

namespace {

// Cumulative reward and admission counts behind the run records.
class Recorder {
 public:
  Recorder(RunLog& log, int n) : log_(log), arrivals_(static_cast<std::size_t>(n), 0), admits_(static_cast<std::size_t>(n), 0) {
    log_.n = n;
  }

  void add(std::size_t step, int cls, int admit, double reward, const std::vector<double>& theta) {
    total_ += reward;
    ++arrivals_[static_cast<std::size_t>(cls)];
    admits_[static_cast<std::size_t>(cls)] += admit;
    if (!is_record_step(step)) return;
    RunRecord r;
    r.step = step;
    r.mean_reward = total_ / static_cast<double>(step);
    for (std::size_t i = 0; i < arrivals_.size(); ++i)
      r.admit_rate.push_back(arrivals_[i] ? static_cast<double>(admits_[i]) / static_cast<double>(arrivals_[i]) : 0.0);
    r.theta_digest = theta_digest(theta);
    log_.records.push_back(std::move(r));
  }

 private:
  RunLog& log_;
  double total_ = 0.0;
  std::vector<std::size_t> arrivals_;
  std::vector<std::size_t> admits_;
};

std::vector<int> state_key(const EnvState& s) {
  std::vector<int> key = s.word;
  key.push_back(s.incoming);
  return key;
}

struct KeyHash {
  std::size_t operator()(const std::vector<int>& k) const {
    std::size_t h = 1469598103934665603ULL;
    for (int v : k) h = (h ^ static_cast<std::size_t>(v + 1)) * 1099511628211ULL;
    return h;
  }
};

// Makes every parameter site touched by the decision in s exist.
void touch(ThetaParameterization& param, const EnvState& s) {
  if (param.family() == Family::DynamicCumProd) param.materialize_below(word_counts(s.word, param.n()).plus(s.incoming));
  if (param.family() == Family::Imbalanced) param.materialize(state_key(s));
}

std::vector<double> grad_log_policy(const ThetaParameterization& param, const EnvState& s, int admit) {
  if (param.family() == Family::Imbalanced) return param.grad_log_policy_raw(s.word, s.incoming, admit);
  return param.grad_log_policy(word_counts(s.word, param.n()), s.incoming, admit);
}

}  // namespace

RunLog run_sage(const RedundancySpec& spec, const SageConfig& cfg, std::size_t steps, std::uint64_t seed) {
  cfg.validate();
  RunLog log;
  log.algorithm = "sage";
  log.seed = seed;
  RedundancyEnv env(spec, seed, 0);
  Rng rng(seed, 1);
  ThetaParameterization param(cfg.family, spec.n, cfg.theta_init);
  Recorder rec(log, spec.n);
  std::vector<SageSample> batch;
  EnvState state = env.reset();
  for (std::size_t t = 1; t <= steps; ++t) {
    touch(param, state);
    const int admit = rng.bernoulli(policy_admit_prob(param, state)) ? 1 : 0;
    auto out = env.step(state, admit != 0);
    batch.push_back({state.word, state.incoming, admit, out.reward});
    rec.add(t, state.incoming, admit, out.reward, param.theta());
    if (batch.size() == cfg.batch) {
      const auto g = sage_gradient_estimate(batch, param);
      for (std::size_t k = 0; k < g.size(); ++k) param.theta()[k] += cfg.step * g[k];
      batch.clear();
    }
    state = std::move(out.next);
  }
  log.final_theta = param.theta();
  return log;
}

RunLog run_ac(const RedundancySpec& spec, const AcConfig& cfg, std::size_t steps, std::uint64_t seed) {
  cfg.validate();
  RunLog log;
  log.algorithm = "ac";
  log.seed = seed;
  RedundancyEnv env(spec, seed, 0);
  Rng rng(seed, 1);
  ThetaParameterization param(cfg.family, spec.n, cfg.theta_init);
  Recorder rec(log, spec.n);
  std::unordered_map<std::vector<int>, double, KeyHash> v;
  double rbar = 0.0;
  EnvState state = env.reset();
  for (std::size_t t = 1; t <= steps; ++t) {
    touch(param, state);
    const int admit = rng.bernoulli(policy_admit_prob(param, state)) ? 1 : 0;
    auto out = env.step(state, admit != 0);
    rec.add(t, state.incoming, admit, out.reward, param.theta());

    const auto cur = state_key(state);
    const auto nxt = v.find(state_key(out.next));
    const double v_next = nxt == v.end() ? 0.0 : nxt->second;
    double& vc = v[cur];
    const double delta = out.reward - rbar + v_next - vc;
    rbar += cfg.step_rbar * delta;
    vc += cfg.step_v * delta;
    const auto g = grad_log_policy(param, state, admit);
    for (std::size_t k = 0; k < g.size(); ++k) param.theta()[k] += cfg.step_theta * delta * g[k];
    state = std::move(out.next);
  }
  log.final_theta = param.theta();
  log.table_size = v.size();
  return log;
}

RunLog run_q(const RedundancySpec& spec, const QConfig& cfg, std::size_t steps, std::uint64_t seed) {
  cfg.validate();
  RunLog log;
  log.algorithm = "q";
  log.seed = seed;
  RedundancyEnv env(spec, seed, 0);
  Rng rng(seed, 1);
  Recorder rec(log, spec.n);
  std::unordered_map<std::vector<int>, std::array<double, 2>, KeyHash> q;
  const std::vector<double> no_theta;
  double rbar = 0.0;
  double eps = cfg.eps0;
  EnvState state = env.reset();
  for (std::size_t t = 1; t <= steps; ++t) {
    const auto cur = state_key(state);
    auto& qc = q[cur];
    int admit;
    if (rng.bernoulli(eps))
      admit = rng.bernoulli(0.5) ? 1 : 0;
    else if (qc[0] == qc[1])
      admit = rng.bernoulli(0.5) ? 1 : 0;
    else
      admit = qc[1] > qc[0] ? 1 : 0;
    auto out = env.step(state, admit != 0);
    rec.add(t, state.incoming, admit, out.reward, no_theta);

    const auto nxt = q.find(state_key(out.next));
    const double best_next = nxt == q.end() ? 0.0 : std::max(nxt->second[0], nxt->second[1]);
    // The lookup above may not insert, so qc stays valid.
    const double delta = out.reward - rbar + best_next - qc[static_cast<std::size_t>(admit)];
    rbar += cfg.step_rbar * delta;
    qc[static_cast<std::size_t>(admit)] += cfg.step_q * delta;
    if (t % cfg.batch == 0) eps = std::max(cfg.eps_floor, eps - cfg.eps_decrement);
    state = std::move(out.next);
  }
  log.table_size = q.size();
  return log;
}

ExactModel::ExactModel(RedundancySpec spec, int cap)
    : spec_(std::move(spec)), cap_(cap), trunc_(FerrersSet::simplex(spec_.n, cap)) {
  spec_.validate();
  words_ = enumerate_words(spec_.n, trunc_);
  const auto oi = redundancy_to_oi(spec_);
  base_.reserve(words_.size());
  for (const auto& w : words_) base_.push_back(oi_product_form(oi, w));
}

double ExactModel::expected_reward(const Word& w) const {
  if (w.empty()) return 0.0;
  auto it = reward_cache_.find(w);
  if (it != reward_cache_.end()) return it->second;
  double num = 0.0, rate = 0.0;
  for (const auto& rem : redundancy_removals(spec_, w)) {
    num += rem.rate * (rem.reward + expected_reward(rem.target));
    rate += rem.rate;
  }
  const double v = num / (rate + spec_.total_arrival_rate());
  reward_cache_.emplace(w, v);
  return v;
}

void ExactModel::materialize(ThetaParameterization& param) const {
  if (param.family() != Family::DynamicCumProd) return;
  for (const auto& x : trunc_.members())
    for (int i = 0; i < spec_.n; ++i) param.materialize_below(x.plus(i));
}

std::vector<double> ExactModel::macro_mass(const ThetaParameterization& param, const FerrersSet& domain) const {
  // Pi*(x) mu(x) = sum_i nu_i Pi*(x - e_i); lexicographic order visits x - e_i first.
  std::vector<double> base(domain.size(), 0.0), out(domain.size(), 0.0);
  for (std::size_t k = 0; k < domain.size(); ++k) {
    const auto& x = domain[k];
    if (x.is_zero()) {
      base[k] = 1.0;
    } else {
      double v = 0.0;
      for (int i = 0; i < x.dim(); ++i)
        if (x[i] > 0) v += spec_.nu[static_cast<std::size_t>(i)] * base[*domain.index_of(x.minus(i))];
      base[k] = v / spec_.rate(x);
    }
    out[k] = base[k] * std::exp(param.log_gamma(x));
  }
  return out;
}

double ExactModel::captured_mass(const ThetaParameterization& param) const {
  const auto wide = FerrersSet::simplex(spec_.n, 2 * cap_);
  const auto mass = macro_mass(param, wide);
  double inside = 0.0, all = 0.0;
  for (std::size_t k = 0; k < wide.size(); ++k) {
    all += mass[k];
    if (wide[k].total() <= cap_) inside += mass[k];
  }
  return inside / all;
}

void ExactModel::require_mass(const ThetaParameterization& param, double min_mass) const {
  const double m = captured_mass(param);
  if (m < min_mass) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "truncation at %d customers keeps only %.10g of the stationary mass; use a larger cap",
                  cap_, m);
    throw DomainError(buf);
  }
}

std::vector<double> ExactModel::stationary(const ThetaParameterization& param) const {
  std::vector<double> p(words_.size());
  std::vector<double> gamma(trunc_.size());
  for (std::size_t k = 0; k < trunc_.size(); ++k) gamma[k] = std::exp(param.log_gamma(trunc_[k]));
  double z = 0.0;
  for (std::size_t k = 0; k < words_.size(); ++k) {
    p[k] = base_[k] * gamma[*trunc_.index_of(word_counts(words_[k], spec_.n))];
    z += p[k];
  }
  for (auto& v : p) v /= z;
  return p;
}

std::vector<double> ExactModel::log_pi_gradient(const ThetaParameterization& param, const Word& s) const {
  const auto mass = macro_mass(param, trunc_);
  const double z = std::accumulate(mass.begin(), mass.end(), 0.0);
  auto g = param.grad_log_gamma(word_counts(s, spec_.n));
  for (std::size_t k = 0; k < trunc_.size(); ++k) {
    const auto gx = param.grad_log_gamma(trunc_[k]);
    for (std::size_t c = 0; c < g.size(); ++c) g[c] -= mass[k] / z * gx[c];
  }
  return g;
}

std::vector<double> ExactModel::mean_score(const ThetaParameterization& param) const {
  const auto p = stationary(param);
  std::vector<double> out(param.dim(), 0.0);
  // Score at x is the same for all words over x.
  std::map<Macrostate, std::vector<double>> cache;
  for (std::size_t k = 0; k < words_.size(); ++k) {
    const auto x = word_counts(words_[k], spec_.n);
    auto it = cache.find(x);
    if (it == cache.end()) it = cache.emplace(x, log_pi_gradient(param, words_[k])).first;
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += p[k] * it->second[c];
  }
  return out;
}

double ExactModel::gain(const ThetaParameterization& param) const {
  const auto p = stationary(param);
  const double lam = spec_.total_arrival_rate();
  double g = 0.0;
  for (std::size_t k = 0; k < words_.size(); ++k) {
    const auto x = word_counts(words_[k], spec_.n);
    const double stay = expected_reward(words_[k]);
    for (int i = 0; i < spec_.n; ++i) {
      Word up = words_[k];
      up.push_back(i);
      const double a = param.admit_prob(x, i);
      g += p[k] * spec_.nu[static_cast<std::size_t>(i)] / lam * (a * expected_reward(up) + (1.0 - a) * stay);
    }
  }
  return g;
}

std::vector<double> ExactModel::gain_gradient(const ThetaParameterization& param) const {
  const auto p = stationary(param);
  const double lam = spec_.total_arrival_rate();
  const std::size_t d = param.dim();
  const auto n = static_cast<std::size_t>(spec_.n);

  // Per-macrostate gradients.
  std::vector<std::vector<double>> glg(trunc_.size()), admit_grad(trunc_.size() * n), reject_grad(trunc_.size() * n);
  std::vector<double> admit(trunc_.size() * n);
  std::vector<double> mean(d, 0.0);
  for (std::size_t k = 0; k < trunc_.size(); ++k) {
    glg[k] = param.grad_log_gamma(trunc_[k]);
    for (std::size_t i = 0; i < n; ++i) {
      admit[k * n + i] = param.admit_prob(trunc_[k], static_cast<int>(i));
      admit_grad[k * n + i] = param.grad_log_policy(trunc_[k], static_cast<int>(i), 1);
      reject_grad[k * n + i] = param.grad_log_policy(trunc_[k], static_cast<int>(i), 0);
    }
  }
  std::vector<std::size_t> macro(words_.size());
  for (std::size_t w = 0; w < words_.size(); ++w) {
    macro[w] = *trunc_.index_of(word_counts(words_[w], spec_.n));
    for (std::size_t c = 0; c < d; ++c) mean[c] += p[w] * glg[macro[w]][c];
  }
  std::vector<double> out(d, 0.0);
  for (std::size_t w = 0; w < words_.size(); ++w) {
    const std::size_t k = macro[w];
    const double stay = expected_reward(words_[w]);
    for (std::size_t i = 0; i < n; ++i) {
      Word up = words_[w];
      up.push_back(static_cast<int>(i));
      const double weight = p[w] * spec_.nu[i] / lam;
      const double a = admit[k * n + i];
      const double ra = weight * a * expected_reward(up);
      const double rr = weight * (1.0 - a) * stay;
      for (std::size_t c = 0; c < d; ++c) {
        const double score = glg[k][c] - mean[c];
        out[c] += ra * (score + admit_grad[k * n + i][c]) + rr * (score + reject_grad[k * n + i][c]);
      }
    }
  }
  return out;
}

std::vector<SageSample> ExactModel::sample_batch(const ThetaParameterization& param, std::size_t N, RedundancyEnv& env,
                                                 Rng& rng) const {
  const auto p = stationary(param);
  std::vector<double> cumulative(p.size());
  std::partial_sum(p.begin(), p.end(), cumulative.begin());
  std::vector<SageSample> out;
  out.reserve(N);
  for (std::size_t t = 0; t < N; ++t) {
    const double u = rng.uniform() * cumulative.back();
    auto k = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
    k = std::min(k, p.size() - 1);
    const int cls = static_cast<int>(rng.categorical(spec_.nu));
    const EnvState s{words_[k], cls};
    const int admit = rng.bernoulli(policy_admit_prob(param, s)) ? 1 : 0;
    out.push_back({s.word, cls, admit, env.step(s, admit != 0).reward});
  }
  return out;
}

std::vector<double> exact_log_pi_gradient(const ExactModel& model, const ThetaParameterization& param, const Word& s) {
  if (!param.balanced()) throw UnsupportedError("score gradient needs a balanced family");
  model.require_mass(param);
  return model.log_pi_gradient(param, s);
}

std::vector<double> exact_gain_gradient(const ExactModel& model, const ThetaParameterization& param) {
  if (!param.balanced()) throw UnsupportedError("gain gradient needs a balanced family");
  model.require_mass(param);
  return model.gain_gradient(param);
}

}  // namespace qrs
