#pragma once

#include "qrs/control.hpp"

#include <ostream>
#include <string>

namespace qrs {

/// general: stationary probabilities and edge flows, flow balance rows, one
///   admission fraction per (microstate, class).
/// balanced: one variable per macrostate of the balance function.
/// reversible_local: flow symmetry instead of flow balance (identity
///   counting only).
enum class LpVariant { General, Balanced, ReversibleLocal };

const char* to_string(LpVariant v);
LpVariant lp_variant_from_string(const std::string& s);

struct LpStats {
  std::size_t variables = 0;
  std::size_t rows = 0;
};

/// Writes the problem in the CPLEX LP text format.
LpStats export_lp(const AdmissionProblem& problem, LpVariant variant, std::ostream& os);

}  // namespace qrs
