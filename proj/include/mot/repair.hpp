#pragma once

#include <optional>
#include <vector>

#include "mot/hybrid.hpp"
#include "mot/model.hpp"
#include "mot/newton.hpp"

namespace mot {

struct RepairConfig {
  double epsilon = 1e-2;
  // Epsilon scaling, used for the first alpha only.
  double eps_start = 1.0;
  double eps_factor = 2.0;
  std::vector<double> alphas{1e-1, 1e-2, 1e-3, 1e-4};  // decreasing
  // Stop at the first alpha whose f*-gap moved by less than this, relative.
  std::optional<double> early_stop_rel_change = 0.01;
  NewtonConfig newton = [] {
    NewtonConfig c;
    c.grad_tol = 1e-10;
    c.max_outer_iters = 500;
    return c;
  }();
};

struct RepairStage {
  double alpha = 0.0;
  double fstar_gap = 0.0;
  std::vector<double> nu_alpha;  // y-marginal of the penalized kernel
  std::vector<double> psi;
  int newton_iters = 0;
  double grad_error = 0.0;  // penalized, norm 1
  bool converged = false;
  double seconds = 0.0;
};

struct RepairResult {
  DiscreteMeasure nu_repaired;
  double fstar_gap = 0.0;
  double final_alpha = 0.0;
  // Linear extrapolation of the f*-gap to alpha = 0 from the last two stages.
  std::optional<double> fstar_gap_extrapolated;
  std::vector<RepairStage> stages;
};

// f*(nu_alpha - nu) = 1/2 sum a^-1 (nu_alpha - nu)^2.
double fstar_quadratic(std::span<const double> a, std::span<const double> nu_alpha,
                       std::span<const double> nu);

// Penalized implied solves over the alpha schedule with warm starts. The
// returned measure lives on nu's grid.
RepairResult repair_marginals(const MotInstance& inst, std::span<const double> a,
                              const RepairConfig& cfg = {});

struct SlopeResult {
  std::vector<double> alphas;
  std::vector<std::vector<double>> slopes;  // (nu_alpha - nu) / alpha
  std::vector<double> drift;                // max_y |slope_k - slope_{k-1}|, k >= 1
  double diagnostic = 0.0;                  // last drift
  std::vector<double> extrapolated;         // linear in alpha from the last two
  std::vector<RepairStage> stages;
};

// Runs every alpha of the schedule (no early stop).
SlopeResult penalization_slope(const MotInstance& inst, std::span<const double> a,
                               const RepairConfig& cfg = {});

}  // namespace mot
