#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mot/entropic.hpp"
#include "mot/newton.hpp"
#include "mot/semidual.hpp"
#include "mot/sinkhorn.hpp"

namespace mot {

enum class SolverChoice { kBregman, kNewton, kHybrid };
std::string_view to_string(SolverChoice s);
SolverChoice solver_from_string(std::string_view s);

enum class PenaltyWeights { kOnes, kNu, kNuSquared, kNuOverPsi0 };
std::string_view to_string(PenaltyWeights w);
PenaltyWeights penalty_weights_from_string(std::string_view s);

std::vector<double> make_penalty_weights(PenaltyWeights w, const DiscreteMeasure& nu,
                                         std::span<const double> psi0);

// From the first stage whose epsilon is <= eps_threshold on, the experiment is
// regenerated with grid size n.
struct GridStage {
  double eps_threshold = 1.0;
  std::size_t n = 10;
};

// Grid refinement used for the reference runs of a named experiment: 1D
// doubles from 10 to 1000 as epsilon halves from 1, 2D goes 10 to 80.
std::vector<GridStage> reference_grid_schedule(const std::string& experiment);

struct ScheduleConfig {
  double eps_start = 1.0;
  double eps_target = 1e-2;
  double eps_factor = 2.0;
  double stage_grad_tol = 1e-2;
  double final_grad_tol = 1e-6;
  // Extra stages that land exactly on these epsilons and are solved to
  // final_grad_tol.
  std::vector<double> checkpoints;

  std::string generator;  // experiment name; empty means a fixed grid
  std::vector<GridStage> grid_schedule;

  bool truncate = true;
  double truncation_factor = 1e-7;
  double truncation_eps = 1e-2;

  // Bregman to Newton switch.
  double switch_divisor = 2.0;
  double switch_divisor_small = 1.1;
  double switch_small_error = 0.1;
  long switch_max_sweeps = 100;

  long max_sweeps_per_stage = 20000;
  int max_cycles_per_stage = 50;
  double max_seconds_per_stage = 0.0;

  double alpha = 1e-2;
  PenaltyWeights weights = PenaltyWeights::kNuSquared;
  // Anchor the penalty at the psi each Newton phase starts from instead of
  // at zero. Newton then repeats until the unpenalized error is below tol.
  bool proximal_anchor = true;
  NewtonConfig newton;
};

// Nearest-neighbour copy of the duals onto new grids (ties go to the lower
// sorted index, i.e. the lexicographically smaller point).
DualState prolong_duals(const DualState& old_state, const DiscreteMeasure& old_mu,
                        const DiscreteMeasure& old_nu, const DiscreteMeasure& new_mu,
                        const DiscreteMeasure& new_nu);

// Active sets on a refined grid: each new x inherits the active y's of its
// nearest old x, dilated by one old grid neighbourhood.
ActiveSets prolong_active(const ActiveSets& old_active, const DiscreteMeasure& old_mu,
                          const DiscreteMeasure& old_nu, const DiscreteMeasure& new_mu,
                          const DiscreteMeasure& new_nu);

struct StageReport {
  int stage = 0;
  double epsilon = 0.0;
  std::size_t nx = 0, ny = 0, nnz = 0;
  double tol = 0.0;
  long sweeps = 0;
  int newton_iters = 0;
  int cycles = 0;
  double grad_error = 0.0;  // |nu - y_marginal|_1 at the end of the stage
  bool converged = false;
  double seconds = 0.0;
  double dropped_mass = 0.0;
  std::size_t dropped_entries = 0;
  int restored_rows = 0;
  bool refined = false;
  // The stage failed on a truncated support and was redone on the full grid.
  bool widened = false;
  std::string error;
  SweepLog log;  // iterations across Bregman and Newton phases
};

struct SolveReport {
  SolverChoice solver = SolverChoice::kHybrid;
  std::shared_ptr<const MotInstance> inst;
  ActiveSets active;
  DualState state;
  double epsilon = 0.0;
  std::vector<StageReport> stages;
  KernelStats stats;
  double x_marginal_error = 0.0;
  double y_marginal_error = 0.0;
  double martingale_error = 0.0;
  std::optional<double> gap_hull;
  std::optional<double> gap_sup;
  bool converged = false;
  double seconds = 0.0;
};

struct HybridHooks {
  // Called after every stage with the problem and state at its end.
  std::function<void(const StageReport&, const EntropicProblem&, const DualState&)> on_stage;
  bool compute_gaps = true;
  // Stop at the first stage with epsilon <= this value, after grid refinement
  // and before solving; the report then carries the starting problem.
  std::optional<double> stop_before;
};

SolveReport run_hybrid(std::shared_ptr<const MotInstance> inst, const ScheduleConfig& sched,
                       SolverChoice solver, const HybridHooks& hooks = {});

// One stage at fixed epsilon from a given state; used by run_hybrid and the
// benchmark. Restores truncated rows that turn out to be infeasible.
struct StageOutcome {
  EntropicProblem prob;
  DualState state;
  StageReport report;
};
StageOutcome solve_stage(EntropicProblem prob, DualState state, const ScheduleConfig& sched,
                         SolverChoice solver, double tol);

// mu[phi_bar] + nu[psi] - P_eps[c].
double duality_gap(const MotInstance& inst, const DualState& state, double primal_value,
                   DominatorMode mode);

}  // namespace mot
