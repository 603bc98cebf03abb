#pragma once

// Test-only oracle: exact MIQP optimum by solving one convex QP per Boolean
// pattern, 2^n patterns in total.

#include <cstdint>
#include <limits>
#include <vector>

#include "freewheel/qp.hpp"

namespace oracle {

struct PatternOptimum {
  double objective = std::numeric_limits<double>::infinity();
  std::vector<std::uint8_t> pattern;
  freewheel::VectorXd x;
  bool feasible = false;
};

inline freewheel::QpProblem fix_pattern(const freewheel::QpProblem& qp, const std::vector<int>& bool_idx,
                                        unsigned mask) {
  freewheel::QpProblem fixed = qp;
  for (std::size_t i = 0; i < bool_idx.size(); ++i) {
    const double v = (mask >> i) & 1u ? 1.0 : 0.0;
    fixed.lb[bool_idx[i]] = v;
    fixed.ub[bool_idx[i]] = v;
  }
  return fixed;
}

inline PatternOptimum enumerate_patterns(const freewheel::QpProblem& qp, const std::vector<int>& bool_idx) {
  PatternOptimum best;
  const unsigned count = 1u << bool_idx.size();
  for (unsigned mask = 0; mask < count; ++mask) {
    const auto sol = freewheel::solve_qp(fix_pattern(qp, bool_idx, mask));
    if (sol.status != freewheel::QpStatus::optimal || !(sol.objective < best.objective)) continue;
    best.objective = sol.objective;
    best.x = sol.x;
    best.feasible = true;
    best.pattern.assign(bool_idx.size(), 0);
    for (std::size_t i = 0; i < bool_idx.size(); ++i) best.pattern[i] = (mask >> i) & 1u;
  }
  return best;
}

}  // namespace oracle
