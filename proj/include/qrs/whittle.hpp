#pragma once

#include "qrs/balance.hpp"
#include "qrs/core.hpp"
#include "qrs/oiqueue.hpp"

#include <functional>
#include <string>
#include <vector>

namespace qrs {

/// Label state: s[i*m + k] elements of class i at site k. Stored as a
/// Macrostate over the n*m labels so that truncations are FerrersSets.
using LabelState = Macrostate;

enum class ServiceKind { Constant, Linear, ProcessorSharing };

const char* to_string(ServiceKind k);
ServiceKind service_kind_from_string(const std::string& s);

struct WhittleSpec {
  int n = 0;
  int m = 0;
  std::vector<double> enter;               // P_{0,ik}
  std::vector<std::vector<double>> route;  // P_{ik,jl}
  std::vector<double> leave;               // P_{ik,0}
  double phi0 = 1.0;
  std::function<double(int label, const LabelState&)> phi;
  std::function<double(const LabelState&)> Phi;  // optional

  int labels() const { return n * m; }
  int label(int cls, int site) const { return cls * m + site; }
  int class_of(int label) const { return label / m; }
  Macrostate class_totals(const LabelState& s) const;

  /// Rows sum to 1, routing preserves the class.
  void validate() const;
  /// Sets phi and the matching Phi for a built-in rate function.
  void set_service(ServiceKind kind, double c);
};

/// Single-class line of m sites, entering at site 1 and leaving after site m.
WhittleSpec make_tandem(int m, double phi0, ServiceKind kind, double c);

struct TrafficSolution {
  std::vector<double> lambda;  // per label
  double identity_residual = 0.0;
};

TrafficSolution solve_traffic(const WhittleSpec& spec);

struct PhiBalanceCheck {
  bool balanced = true;
  LabelState witness;
  int label = -1;
  double residual = 0.0;
};

PhiBalanceCheck check_phi_balance(const WhittleSpec& spec, const FerrersSet& truncation, double tol = kDefaultTol);

/// Phi(s) * prod lambda_ik^{s_ik}
double whittle_product_form(const WhittleSpec& spec, const TrafficSolution& traffic, const LabelState& s);

/// Label states whose per-class totals are at most caps[i] and whose overall
/// total is at most total. Closed under internal moves.
FerrersSet class_capped_truncation(const WhittleSpec& spec, const std::vector<int>& caps, int total);

struct WhittleSystem {
  QueueSystem sys;  // microstate k is truncation[k]; counting = class totals
  FerrersSet states;
};

WhittleSystem build_whittle_system(const WhittleSpec& spec, const FerrersSet& truncation);

/// Arrival of label ik out of s is scaled by Gamma(s+e_ik)/Gamma(s), Gamma on
/// label states.
QueueSystem control_whittle(const WhittleSystem& ws, const WhittleSpec& spec, const BalanceFunction& label_gamma);

/// Gamma on class totals viewed as a function of label states.
BalanceFunction lift_to_labels(const WhittleSpec& spec, const BalanceFunction& class_gamma, const FerrersSet& truncation);

/// OI queue with one class per label: nu_ik = phi0 * lambda_ik and
/// mu(s) = phi0 * sum_{s_ik > 0} Phi(s - e_ik) / Phi(s).
OISpec matched_oi(const WhittleSpec& spec, const TrafficSolution& traffic);

struct EquivalenceReport {
  double l1 = 0.0;
  bool passes = false;
};

EquivalenceReport check_equivalence(const WhittleSpec& spec, const BalanceFunction& label_gamma,
                                    const FerrersSet& truncation, double tol = kDefaultTol);

}  // namespace qrs
