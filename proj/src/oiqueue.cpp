#include "qrs/oiqueue.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace qrs {

Macrostate word_counts(const Word& w, int n) {
  Macrostate x = Macrostate::zero(n);
  for (int c : w) ++x[c];
  return x;
}

std::string word_str(const Word& w) {
  if (w.empty()) return "-";
  std::ostringstream os;
  const bool wide = std::any_of(w.begin(), w.end(), [](int c) { return c >= 9; });
  for (std::size_t p = 0; p < w.size(); ++p) {
    if (wide && p) os << '.';
    os << w[p] + 1;
  }
  return os.str();
}

void OISpec::validate() const {
  if (n <= 0 || static_cast<int>(nu.size()) != n) throw SpecError("OI spec: need one arrival rate per class");
  for (double v : nu)
    if (!(v > 0.0)) throw SpecError("OI spec: arrival rates must be positive");
  if (!mu) throw SpecError("OI spec: missing rate function");
  if (std::abs(mu(Macrostate::zero(n))) > 0.0) throw SpecError("OI spec: rate function must vanish at 0");
}

void RedundancySpec::validate() const {
  if (n <= 0 || m <= 0) throw SpecError("redundancy spec: need classes and servers");
  auto sized = [](const auto& v, int k) { return static_cast<int>(v.size()) == k; };
  if (!sized(B, n) || !sized(nu, n) || !sized(zeta, n) || !sized(r, n) || !sized(mu_srv, m))
    throw SpecError("redundancy spec: dimension mismatch");
  for (int i = 0; i < n; ++i) {
    if (!sized(B[static_cast<std::size_t>(i)], m)) throw SpecError("redundancy spec: B must be n x m");
    bool any = false;
    for (int j = 0; j < m; ++j) any = any || compatible(i, j);
    if (!any) throw SpecError("redundancy spec: class " + std::to_string(i + 1) + " has no compatible server");
  }
  auto positive = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return x > 0.0 && std::isfinite(x); });
  };
  if (!positive(nu) || !positive(zeta) || !positive(mu_srv)) throw SpecError("redundancy spec: rates must be positive");
}

double RedundancySpec::total_arrival_rate() const { return std::accumulate(nu.begin(), nu.end(), 0.0); }

double RedundancySpec::rate(const Macrostate& x) const {
  double v = 0.0;
  for (int j = 0; j < m; ++j) {
    bool active = false;
    for (int i = 0; i < n && !active; ++i) active = x[i] > 0 && compatible(i, j);
    if (active) v += mu_srv[static_cast<std::size_t>(j)];
  }
  for (int i = 0; i < n; ++i) v += zeta[static_cast<std::size_t>(i)] * x[i];
  return v;
}

RedundancySpec RedundancySpec::case_study(bool adversarial) {
  RedundancySpec s;
  s.n = 3;
  s.m = 3;
  s.B = {{1, 1, 0}, {0, 1, 1}, {0, 0, 1}};
  s.nu = {0.5, 0.5, 0.5};
  s.mu_srv = {0.5, 0.5, 0.5};
  s.r = {1.0, 2.0, 16.0};
  s.zeta = adversarial ? std::vector<double>{0.1, 0.2, 0.5} : std::vector<double>{0.5, 0.2, 0.1};
  return s;
}

std::vector<Word> enumerate_words(int n, const FerrersSet& truncation) {
  if (truncation.dim() != n) throw DomainError("truncation dimension differs from the class count");
  std::vector<Word> out{Word{}};
  std::size_t begin = 0;
  while (begin < out.size()) {
    const std::size_t end = out.size();
    for (std::size_t k = begin; k < end; ++k) {
      const Macrostate x = word_counts(out[k], n);
      for (int i = 0; i < n; ++i) {
        if (!truncation.contains(x.plus(i))) continue;
        Word w = out[k];
        w.push_back(i);
        out.push_back(std::move(w));
      }
    }
    // Each length layer comes out lexicographic since parents are.
    begin = end;
  }
  return out;
}

OISystem build_oi_system(const OISpec& spec, const FerrersSet& truncation) {
  spec.validate();
  for (const auto& x : truncation.members())
    if (spec.admissible && !spec.admissible(x)) throw DomainError("truncation leaves the admissible set at " + x.str());

  OISystem out{QueueSystem(1, {Macrostate{0}}, {}), enumerate_words(spec.n, truncation), {}};
  for (std::size_t k = 0; k < out.words.size(); ++k) out.index.emplace(out.words[k], k);

  std::map<Macrostate, double> mu_cache;
  auto mu = [&](const Macrostate& x) {
    auto it = mu_cache.find(x);
    if (it != mu_cache.end()) return it->second;
    const double v = spec.mu(x);
    mu_cache.emplace(x, v);
    return v;
  };

  std::vector<Macrostate> counting;
  std::vector<std::string> names;
  std::vector<Edge> edges;
  for (std::size_t k = 0; k < out.words.size(); ++k) {
    const Word& w = out.words[k];
    counting.push_back(word_counts(w, spec.n));
    names.push_back(word_str(w));
    for (int i = 0; i < spec.n; ++i) {
      Word up = w;
      up.push_back(i);
      auto it = out.index.find(up);
      if (it != out.index.end()) edges.push_back({k, it->second, spec.nu[static_cast<std::size_t>(i)]});
    }
    Macrostate prefix = Macrostate::zero(spec.n);
    double before = 0.0;
    for (std::size_t p = 0; p < w.size(); ++p) {
      ++prefix[w[p]];
      const double now = mu(prefix);
      double delta = now - before;
      if (!(now > 0.0) || delta < -1e-12 * std::max(1.0, now)) {
        std::ostringstream os;
        os << "rate function is not positive and non-decreasing along " << prefix;
        throw SpecError(os.str());
      }
      delta = std::max(delta, 0.0);
      before = now;
      Word down = w;
      down.erase(down.begin() + static_cast<std::ptrdiff_t>(p));
      edges.push_back({k, out.index.at(down), delta});
    }
  }
  out.sys = QueueSystem(spec.n, std::move(counting), edges, std::move(names));
  return out;
}

double oi_product_form(const OISpec& spec, const Word& w) {
  double v = 1.0;
  Macrostate prefix = Macrostate::zero(spec.n);
  for (int c : w) {
    ++prefix[c];
    const double rate = spec.mu(prefix);
    if (!(rate > 0.0)) throw SpecError("rate function vanishes at " + prefix.str());
    v *= spec.nu[static_cast<std::size_t>(c)] / rate;
  }
  return v;
}

OISpec redundancy_to_oi(const RedundancySpec& spec) {
  spec.validate();
  OISpec out;
  out.n = spec.n;
  out.nu = spec.nu;
  out.mu = [spec](const Macrostate& x) { return spec.rate(x); };
  return out;
}

DepartureReward redundancy_departure_reward(const RedundancySpec& spec, const Word& w, std::size_t p) {
  if (p >= w.size()) throw DomainError("position out of range");
  const int cls = w[p];
  for (std::size_t q = 0; q < p; ++q)
    if (w[q] == cls) throw DomainError("position does not hold the oldest customer of its class");
  double served = 0.0;
  for (int j = 0; j < spec.m; ++j) {
    if (!spec.compatible(cls, j)) continue;
    bool taken = false;
    for (std::size_t q = 0; q < p && !taken; ++q) taken = spec.compatible(w[q], j);
    if (!taken) served += spec.mu_srv[static_cast<std::size_t>(j)];
  }
  std::size_t d = p;
  while (d + 1 < w.size() && w[d + 1] == cls) ++d;
  const auto ci = static_cast<std::size_t>(cls);
  DepartureReward out;
  out.completion_prob = served / (served + spec.zeta[ci] * static_cast<double>(d - p + 1));
  out.reward = spec.r[ci] * out.completion_prob;
  return out;
}

std::vector<Removal> redundancy_removals(const RedundancySpec& spec, const Word& w) {
  std::vector<Removal> out;
  Macrostate prefix = Macrostate::zero(spec.n);
  Macrostate seen = Macrostate::zero(spec.n);
  double before = 0.0;
  std::size_t p = 0;
  while (p < w.size()) {
    const int cls = w[p];
    Removal rem;
    rem.cls = cls;
    rem.target = w;
    rem.target.erase(rem.target.begin() + static_cast<std::ptrdiff_t>(p));
    if (seen[cls] == 0) rem.reward = redundancy_departure_reward(spec, w, p).reward;
    std::size_t q = p;
    for (; q < w.size() && w[q] == cls; ++q) {
      ++prefix[cls];
      const double now = spec.rate(prefix);
      rem.rate += now - before;
      before = now;
    }
    ++seen[cls];
    out.push_back(std::move(rem));
    p = q;
  }
  return out;
}

}  // namespace qrs
