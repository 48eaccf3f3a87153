#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "mot/model.hpp"

namespace mot {

enum class LpStatus { kOptimal, kInfeasible, kIterationLimit };

std::string_view to_string(LpStatus s);

struct LpSolution {
  LpStatus status = LpStatus::kInfeasible;
  double value = 0.0;
  std::vector<double> coupling;  // nx * ny, row-major in sorted point order
  long pivots = 0;
};

struct LpOptions {
  std::size_t max_variables = 100000;
  long max_pivots = 200000;
  double feasibility_tol = 1e-9;
};

// max P[c] over martingale couplings of (mu, nu). Throws DomainError when
// |X||Y| exceeds the size guard.
LpSolution solve_mot_lp(const MotInstance& inst, const LpOptions& opt = {});

// Whether a martingale coupling of (mu, nu) exists (phase one only).
bool feasible_martingale(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                         const LpOptions& opt = {});

// Largest absolute residual among the row, column and martingale constraints.
double coupling_residual(const MotInstance& inst, const std::vector<double>& coupling);

}  // namespace mot
