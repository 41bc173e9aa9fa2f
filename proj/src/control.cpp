#include "qrs/control.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <set>
#include <thread>

namespace qrs {

void AdmissionProblem::validate() const {
  if (rewards.rcont.size() != sys.size()) throw DomainError("occupation reward must cover every microstate");
  if (rewards.rdisc.size() != sys.transitions().size()) throw DomainError("transition reward must cover every edge");
}

AdmissionProblem AdmissionProblem::negated() const {
  AdmissionProblem out = *this;
  for (auto& v : out.rewards.rcont) v = -v;
  for (auto& v : out.rewards.rdisc) v = -v;
  return out;
}

PolicyTable PolicyTable::admit_all(const QueueSystem& sys) {
  return {std::vector<std::vector<double>>(sys.size(), std::vector<double>(static_cast<std::size_t>(sys.n()), 1.0)), true};
}

PolicyTable PolicyTable::reject_all(const QueueSystem& sys) {
  return {std::vector<std::vector<double>>(sys.size(), std::vector<double>(static_cast<std::size_t>(sys.n()), 0.0)), true};
}

PolicyTable PolicyTable::from_macro(const QueueSystem& sys, const AdmissionPolicy& policy) {
  if (!(policy.domain == sys.macro_image())) throw DomainError("policy domain differs from the system's macrostates");
  PolicyTable out;
  out.deterministic = true;
  for (std::size_t s = 0; s < sys.size(); ++s) {
    out.probs.push_back(policy.probs[sys.macro_index(s)]);
    for (double p : out.probs.back()) out.deterministic = out.deterministic && (p == 0.0 || p == 1.0);
  }
  return out;
}

double gain_of(const QueueSystem& controlled, const RewardSpec& rewards) {
  const auto pi = solve_stationary(controlled);
  double g = 0.0;
  for (std::size_t s = 0; s < controlled.size(); ++s) g += pi.values[s] * rewards.rcont[s];
  const auto& tr = controlled.transitions();
  for (std::size_t k = 0; k < tr.size(); ++k) g += pi.values[tr[k].from] * tr[k].rate * rewards.rdisc[k];
  return g;
}

double gain(const AdmissionProblem& problem, const PolicyTable& policy) {
  problem.validate();
  return gain_of(apply_control(problem.sys, policy.probs), problem.rewards);
}

double gain(const AdmissionProblem& problem, const AdmissionPolicy& policy) {
  problem.validate();
  return gain_of(apply_control(problem.sys, policy), problem.rewards);
}

namespace {

// Admission bit-vectors available in s: one bit per class with an arrival
// edge out of s.
struct ActionSpace {
  std::vector<unsigned> classes_present;  // bitmask per state
};

ActionSpace action_space(const QueueSystem& sys) {
  ActionSpace a;
  a.classes_present.assign(sys.size(), 0u);
  for (const auto& t : sys.transitions())
    if (t.kind == TransitionKind::Arrival) a.classes_present[t.from] |= 1u << t.cls;
  return a;
}

// Reward rate plus drift of h under action bits in state s.
double action_value(const AdmissionProblem& p, std::size_t s, unsigned bits, const std::vector<double>& h) {
  double v = p.rewards.rcont[s];
  const auto& tr = p.sys.transitions();
  for (auto k : p.sys.out_edges(s)) {
    const auto& t = tr[k];
    if (t.kind == TransitionKind::Arrival && !(bits & (1u << t.cls))) continue;
    v += t.rate * (p.rewards.rdisc[k] + h[t.to] - h[s]);
  }
  return v;
}

// Subsets of `present`, in increasing numeric order.
std::vector<unsigned> subsets(unsigned present) {
  std::vector<unsigned> out;
  unsigned sub = 0;
  while (true) {
    out.push_back(sub);
    if (sub == present) break;
    sub = (sub - present) & present;
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

double bellman_residual(const AdmissionProblem& problem, double g, const std::vector<double>& h) {
  const auto space = action_space(problem.sys);
  double worst = 0.0;
  for (std::size_t s = 0; s < problem.sys.size(); ++s) {
    double best = -std::numeric_limits<double>::infinity();
    for (unsigned a : subsets(space.classes_present[s])) best = std::max(best, action_value(problem, s, a, h));
    worst = std::max(worst, std::abs(best - g));
  }
  return worst;
}

OptimalResult optimal_policy(const AdmissionProblem& problem, int max_iterations) {
  problem.validate();
  const auto& sys = problem.sys;
  const std::size_t N = sys.size();
  const std::size_t empty = sys.empty_state();
  const auto space = action_space(sys);

  OptimalResult out;
  for (std::size_t s = 0; s < N; ++s) out.uniformization = std::max(out.uniformization, sys.total_outflow(s));
  out.uniformization *= 1.05;
  const double L = out.uniformization > 0.0 ? out.uniformization : 1.0;

  std::vector<unsigned> action = space.classes_present;  // start from admit-all
  std::vector<double> h(N, 0.0);
  double g = 0.0;
  const auto& tr = sys.transitions();
  // Unknowns: g, then h(s) for s != empty. Rows are the uniformized
  // evaluation equations h(s) + g/L = r(s)/L + sum_t P(s,t) h(t).
  auto col = [&](std::size_t s) { return static_cast<Eigen::Index>(s < empty ? s + 1 : s); };
  for (int it = 1; it <= max_iterations; ++it) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N));
    Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(N));
    for (std::size_t s = 0; s < N; ++s) {
      const auto row = static_cast<Eigen::Index>(s);
      a(row, 0) = 1.0 / L;
      double r = problem.rewards.rcont[s];
      double out_rate = 0.0;
      for (auto k : sys.out_edges(s)) {
        const auto& t = tr[k];
        if (t.kind == TransitionKind::Arrival && !(action[s] & (1u << t.cls))) continue;
        r += t.rate * problem.rewards.rdisc[k];
        out_rate += t.rate;
        if (t.to != empty) a(row, col(t.to)) -= t.rate / L;
      }
      if (s != empty) a(row, col(s)) += out_rate / L;
      b(row) = r / L;
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
    if (!(lu.rcond() > 1e-14)) throw SolverError("policy evaluation is singular (chain not unichain)");
    const Eigen::VectorXd x = lu.solve(b);
    g = x(0);
    for (std::size_t s = 0; s < N; ++s) h[s] = s == empty ? 0.0 : x(col(s));

    bool changed = false;
    for (std::size_t s = 0; s < N; ++s) {
      const double current = action_value(problem, s, action[s], h);
      unsigned best = action[s];
      double best_value = current;
      for (unsigned cand : subsets(space.classes_present[s])) {
        const double v = action_value(problem, s, cand, h);
        if (v > best_value + 1e-11 * (1.0 + std::abs(best_value))) {
          best = cand;
          best_value = v;
        }
      }
      if (best != action[s]) {
        action[s] = best;
        changed = true;
      }
    }
    out.iterations = it;
    if (!changed) break;
    if (it == max_iterations) throw SolverError("policy iteration did not converge");
  }
  out.gain = g;
  out.bias = h;
  out.bellman_residual = bellman_residual(problem, g, h);
  if (out.bellman_residual > 1e-9)
    throw SolverError("policy iteration stopped with Bellman residual " + std::to_string(out.bellman_residual));
  out.policy.deterministic = true;
  out.policy.probs.assign(N, std::vector<double>(static_cast<std::size_t>(sys.n()), 0.0));
  for (std::size_t s = 0; s < N; ++s)
    for (int i = 0; i < sys.n(); ++i)
      if (action[s] & (1u << i)) out.policy.probs[s][static_cast<std::size_t>(i)] = 1.0;
  return out;
}

BalancedObjective BalancedObjective::build(const AdmissionProblem& problem) {
  problem.validate();
  const auto& sys = problem.sys;
  const auto pi = solve_stationary(sys);
  BalancedObjective o;
  o.domain = sys.macro_image();
  const std::size_t X = o.domain.size();
  o.mass.assign(X, 0.0);
  o.occupation.assign(X, 0.0);
  o.arrival.assign(X, std::vector<double>(static_cast<std::size_t>(sys.n()), 0.0));
  for (std::size_t s = 0; s < sys.size(); ++s) {
    const auto x = sys.macro_index(s);
    o.mass[x] += pi.values[s];
    o.occupation[x] += pi.values[s] * problem.rewards.rcont[s];
  }
  const auto& tr = sys.transitions();
  for (std::size_t k = 0; k < tr.size(); ++k) {
    const double flow = pi.values[tr[k].from] * tr[k].rate * problem.rewards.rdisc[k];
    const auto x = sys.macro_index(tr[k].from);
    if (tr[k].kind == TransitionKind::Arrival)
      o.arrival[x][static_cast<std::size_t>(tr[k].cls)] += flow;
    else
      o.occupation[x] += flow;
  }
  return o;
}

double BalancedObjective::evaluate(const std::vector<Macrostate>& mask) const {
  const std::set<Macrostate> a(mask.begin(), mask.end());
  double num = 0.0, den = 0.0;
  for (const auto& x : a) {
    const auto k = domain.index_of(x);
    if (!k) throw DomainError("mask point " + x.str() + " outside the domain");
    num += occupation[*k];
    den += mass[*k];
    for (int i = 0; i < x.dim(); ++i)
      if (a.count(x.plus(i))) num += arrival[*k][static_cast<std::size_t>(i)];
  }
  return num / den;
}

namespace {

std::vector<int> column_heights(const FerrersSet& domain) {
  if (domain.dim() != 2) throw UnsupportedError("mask enumeration is limited to two classes; use the LP export");
  std::vector<int> H;
  for (const auto& x : domain.members()) {
    if (x[0] >= static_cast<int>(H.size())) H.resize(static_cast<std::size_t>(x[0]) + 1, -1);
    H[static_cast<std::size_t>(x[0])] = std::max(H[static_cast<std::size_t>(x[0])], x[1]);
  }
  return H;
}

void enumerate_heights(const std::vector<int>& H, std::size_t c, std::vector<int>& h,
                       const std::function<void(const std::vector<int>&)>& visit) {
  if (c == H.size()) {
    visit(h);
    return;
  }
  const int top = c == 0 ? H[0] : std::min(h[c - 1], H[c]);
  const int bottom = c == 0 ? 0 : -1;
  for (int v = top; v >= bottom; --v) {
    h[c] = v;
    if (v == -1) {
      std::fill(h.begin() + static_cast<std::ptrdiff_t>(c), h.end(), -1);
      visit(h);
      return;
    }
    enumerate_heights(H, c + 1, h, visit);
  }
}

}  // namespace

std::size_t count_masks_2d(const FerrersSet& domain) {
  const auto H = column_heights(domain);
  // ways[v + 1]: sequences so far ending with height v.
  const double sat = 1e18;
  std::vector<double> ways(static_cast<std::size_t>(H[0]) + 2, 0.0);
  for (int v = 0; v <= H[0]; ++v) ways[static_cast<std::size_t>(v) + 1] = 1.0;
  for (std::size_t c = 1; c < H.size(); ++c) {
    std::vector<double> next(static_cast<std::size_t>(H[c]) + 2, 0.0);
    double suffix = 0.0;
    for (int v = static_cast<int>(ways.size()) - 2; v >= -1; --v) {
      suffix = std::min(sat, suffix + ways[static_cast<std::size_t>(v + 1)]);
      if (v <= H[c]) next[static_cast<std::size_t>(v + 1)] = suffix;
    }
    ways = std::move(next);
  }
  double total = 0.0;
  for (double w : ways) total = std::min(sat, total + w);
  return static_cast<std::size_t>(total);
}

void for_each_mask_2d(const FerrersSet& domain, std::size_t cap,
                      const std::function<void(const std::vector<int>& heights)>& visit) {
  const auto H = column_heights(domain);
  if (count_masks_2d(domain) > cap) throw UnsupportedError("too many Ferrers masks to enumerate; use the LP export");
  std::vector<int> h(H.size(), -1);
  enumerate_heights(H, 0, h, visit);
}

std::vector<Macrostate> mask_from_heights(const std::vector<int>& heights) {
  std::vector<Macrostate> out;
  for (std::size_t c = 0; c < heights.size(); ++c)
    for (int v = 0; v <= heights[c]; ++v) out.push_back(Macrostate{static_cast<int>(c), v});
  return out;
}

BalancedResult best_balanced(const AdmissionProblem& problem, std::size_t cap, int jobs) {
  if (problem.sys.n() != 2) throw UnsupportedError("best balanced enumeration needs two classes; use the LP export");
  const auto obj = BalancedObjective::build(problem);
  const auto H = column_heights(obj.domain);
  if (count_masks_2d(obj.domain) > cap) throw UnsupportedError("too many Ferrers masks to enumerate; use the LP export");

  // Column prefix sums: value and mass of rows 0..v, and the class-1 reward
  // into the next column for rows 0..v.
  const std::size_t C = H.size();
  std::vector<std::vector<double>> value(C), mass(C), cross(C);
  for (std::size_t c = 0; c < C; ++c) {
    double v = 0.0, m = 0.0, x = 0.0;
    for (int r = 0; r <= H[c]; ++r) {
      const auto k = *obj.domain.index_of(Macrostate{static_cast<int>(c), r});
      v += obj.occupation[k];
      if (r > 0) v += obj.arrival[*obj.domain.index_of(Macrostate{static_cast<int>(c), r - 1})][1];
      m += obj.mass[k];
      x += obj.arrival[k][0];
      value[c].push_back(v);
      mass[c].push_back(m);
      cross[c].push_back(x);
    }
  }
  auto score = [&](const std::vector<int>& h) {
    double num = 0.0, den = 0.0;
    for (std::size_t c = 0; c < C && h[c] >= 0; ++c) {
      const auto hv = static_cast<std::size_t>(h[c]);
      num += value[c][hv];
      den += mass[c][hv];
      if (c + 1 < C && h[c + 1] >= 0) num += cross[c][static_cast<std::size_t>(h[c + 1])];
    }
    return num / den;
  };

  // One task per height of the first column.
  struct Best {
    double gain = -std::numeric_limits<double>::infinity();
    std::vector<int> heights;
    std::size_t count = 0;
  };
  const int tasks = H[0] + 1;
  std::vector<Best> results(static_cast<std::size_t>(tasks));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int t = next++; t < tasks; t = next++) {
      Best& best = results[static_cast<std::size_t>(t)];
      std::vector<int> h(C, -1);
      h[0] = H[0] - t;
      auto visit = [&](const std::vector<int>& hs) {
        ++best.count;
        const double g = score(hs);
        if (g > best.gain) {
          best.gain = g;
          best.heights = hs;
        }
      };
      if (C == 1)
        visit(h);
      else
        enumerate_heights(H, 1, h, visit);
    }
  };
  const int nthreads = std::max(1, std::min(jobs, tasks));
  std::vector<std::thread> pool;
  for (int k = 1; k < nthreads; ++k) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  BalancedResult out;
  out.gain = -std::numeric_limits<double>::infinity();
  std::vector<int> winner;
  for (const auto& b : results) {
    out.masks_enumerated += b.count;
    if (b.gain > out.gain) {
      out.gain = b.gain;
      winner = b.heights;
    }
  }
  out.mask = mask_from_heights(winner);
  return out;
}

LossReport loss(const AdmissionProblem& problem, int jobs) {
  LossReport rep;
  rep.optimal = optimal_policy(problem);
  rep.g_opt = rep.optimal.gain;
  rep.g_worst = -optimal_policy(problem.negated()).gain;
  rep.balanced = best_balanced(problem, kMaskCap, jobs);
  rep.g_balanced = rep.balanced.gain;
  const double denom = rep.g_opt - rep.g_worst;
  rep.defined = denom > 1e-14 * std::max(1.0, std::abs(rep.g_opt));
  rep.loss_pct = rep.defined ? 100.0 * (rep.g_opt - rep.g_balanced) / denom : std::numeric_limits<double>::quiet_NaN();
  return rep;
}

const char* to_string(Toy t) {
  switch (t) {
    case Toy::PathReward:
      return "path_reward";
    case Toy::CornerReward:
      return "corner_reward";
    case Toy::Realistic:
      return "realistic";
  }
  return "?";
}

Toy toy_from_string(const std::string& s) {
  if (s == "path_reward") return Toy::PathReward;
  if (s == "corner_reward") return Toy::CornerReward;
  if (s == "realistic") return Toy::Realistic;
  throw SpecError("unknown toy problem '" + s + "'");
}

AdmissionProblem make_toy(Toy id, double nu1, double nu2) {
  constexpr int cap = 5;
  const auto box = FerrersSet::box({cap, cap});
  std::vector<Macrostate> counting = box.members();
  std::vector<Edge> edges;
  const double nu[2] = {nu1, nu2};
  for (std::size_t k = 0; k < counting.size(); ++k) {
    const auto& s = counting[k];
    const int total = s.total();
    for (int i = 0; i < 2; ++i) {
      if (s[i] < cap) edges.push_back({k, *box.index_of(s.plus(i)), nu[i]});
      if (s[i] > 0) edges.push_back({k, *box.index_of(s.minus(i)), static_cast<double>(s[i]) / total});
    }
  }
  AdmissionProblem p{QueueSystem(2, counting, edges), {}, to_string(id)};
  const auto& sys = p.sys;
  p.rewards.rcont.assign(sys.size(), 0.0);
  p.rewards.rdisc.assign(sys.transitions().size(), 0.0);

  const std::set<Macrostate> path = {{0, 0}, {1, 0}, {2, 0}, {2, 1}, {3, 1}, {3, 2},
                                     {3, 3}, {3, 4}, {4, 4}, {4, 5}, {5, 5}};
  for (std::size_t s = 0; s < sys.size(); ++s) {
    const auto& x = sys.counting(s);
    if (id == Toy::CornerReward && x == Macrostate{cap, 0}) p.rewards.rcont[s] = 1.0;
    if (id == Toy::Realistic) p.rewards.rcont[s] = -static_cast<double>(x.total());
  }
  const auto& tr = sys.transitions();
  for (std::size_t k = 0; k < tr.size(); ++k) {
    if (tr[k].kind != TransitionKind::Arrival) continue;
    if (id == Toy::PathReward && path.count(sys.counting(tr[k].from)) && path.count(sys.counting(tr[k].to)))
      p.rewards.rdisc[k] = 1.0;
    if (id == Toy::Realistic) p.rewards.rdisc[k] = tr[k].cls == 0 ? 3.0 : 6.0;
  }
  return p;
}

AdmissionProblem make_single_class(int K, double nu, double mu, double holding, double admission_reward) {
  std::vector<Macrostate> counting;
  std::vector<Edge> edges;
  for (int x = 0; x <= K; ++x) {
    counting.push_back(Macrostate{x});
    const auto k = static_cast<std::size_t>(x);
    if (x < K) edges.push_back({k, k + 1, nu});
    if (x > 0) edges.push_back({k, k - 1, mu});
  }
  AdmissionProblem p{QueueSystem(1, counting, edges), {}, "single_class"};
  p.rewards.rcont.resize(p.sys.size());
  for (std::size_t s = 0; s < p.sys.size(); ++s) p.rewards.rcont[s] = -holding * p.sys.counting(s)[0];
  for (const auto& t : p.sys.transitions())
    p.rewards.rdisc.push_back(t.kind == TransitionKind::Arrival ? admission_reward : 0.0);
  return p;
}

}  // namespace qrs
