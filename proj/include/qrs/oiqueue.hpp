#pragma once

#include "qrs/core.hpp"

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace qrs {

/// Customer classes in arrival order, oldest first. Classes are 0-based.
using Word = std::vector<int>;

Macrostate word_counts(const Word& w, int n);
/// 1-based class digits ("13"), "-" for the empty word.
std::string word_str(const Word& w);

struct OISpec {
  int n = 0;
  std::vector<double> nu;
  /// Total departure rate as a function of the macrostate.
  std::function<double(const Macrostate&)> mu;
  /// Defaults to every macrostate.
  std::function<bool(const Macrostate&)> admissible;

  void validate() const;
};

struct RedundancySpec {
  int n = 0;
  int m = 0;
  std::vector<std::vector<int>> B;  // n x m compatibility
  std::vector<double> nu;
  std::vector<double> zeta;
  std::vector<double> mu_srv;
  std::vector<double> r;

  void validate() const;
  bool compatible(int cls, int server) const { return B[static_cast<std::size_t>(cls)][static_cast<std::size_t>(server)] != 0; }
  double total_arrival_rate() const;
  /// Active server speeds plus abandonment: sum_{j active} mu_j + sum_i zeta_i x_i.
  double rate(const Macrostate& x) const;

  /// Three classes, three servers, nu = mu = 0.5, r = (1, 2, 16). The
  /// adversarial scenario has zeta = (0.1, 0.2, 0.5), the other one swaps the
  /// abandonment rates of classes 1 and 3.
  static RedundancySpec case_study(bool adversarial);
};

struct OISystem {
  QueueSystem sys;
  std::vector<Word> words;  // by length, then lexicographic
  std::map<Word, std::size_t> index;
};

/// Words whose macrostate lies in the truncation. Arrivals that would leave
/// it are dropped.
std::vector<Word> enumerate_words(int n, const FerrersSet& truncation);

OISystem build_oi_system(const OISpec& spec, const FerrersSet& truncation);

/// Unnormalized, value 1 at the empty word.
double oi_product_form(const OISpec& spec, const Word& w);

OISpec redundancy_to_oi(const RedundancySpec& spec);

struct DepartureReward {
  double reward = 0.0;
  double completion_prob = 0.0;
};

/// p (0-based) must index the oldest customer of its class in w.
DepartureReward redundancy_departure_reward(const RedundancySpec& spec, const Word& w, std::size_t p);

/// One removal transition out of w: a maximal run of equal letters merges
/// into a single edge since removing any of them yields the same word.
struct Removal {
  Word target;
  int cls = -1;
  double rate = 0.0;
  double reward = 0.0;  // r_i * completion probability; 0 if not the oldest of its class
};

std::vector<Removal> redundancy_removals(const RedundancySpec& spec, const Word& w);

}  // namespace qrs
