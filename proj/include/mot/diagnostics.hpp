#pragma once

#include <iosfwd>
#include <memory>
#include <vector>

#include "mot/hybrid.hpp"

namespace mot {

struct GapRow {
  double eps = 0.0;
  double gap = 0.0;
  double gap_over_eps = 0.0;
  DominatorMode mode = DominatorMode::kConcaveHull;
  double grad_error = 0.0;
  bool converged = false;
};

std::string_view to_string(DominatorMode m);
DominatorMode dominator_mode_from_string(std::string_view s);

// Runs the schedule down to the smallest entry of eps_list (decreasing), with
// every entry a checkpoint solved to final_grad_tol, and records the gap in
// each requested mode there.
std::vector<GapRow> gap_curve(std::shared_ptr<const MotInstance> inst, ScheduleConfig sched,
                              const std::vector<double>& eps_list,
                              const std::vector<DominatorMode>& modes,
                              SolverChoice solver = SolverChoice::kHybrid);
void write_gap_csv(std::ostream& os, const std::vector<GapRow>& rows);

// CSV with columns x1..xd,y1..yd,p (x,y,p in 1D) for active entries with
// p >= threshold.
void export_coupling(std::ostream& os, const EntropicProblem& prob, const DualState& state,
                     double threshold = 1e-10);

struct CouplingEntry {
  std::vector<double> x, y;
  double p = 0.0;
};
std::vector<CouplingEntry> read_coupling(std::istream& is);

// Conditional law of Y given X = x_i on the active entries: (y-index, p/mu_i).
struct ConditionalSlice {
  std::size_t x_index = 0;
  std::vector<std::size_t> y_index;
  std::vector<double> prob;
};
ConditionalSlice conditional_slice(const EntropicProblem& prob, const DualState& state,
                                   std::size_t xi);
void write_slice_csv(std::ostream& os, const MotInstance& inst, const ConditionalSlice& s);

// Solver comparison at one stage: the schedule is run down to (not through)
// eps, then every solver starts from the same state.
struct BenchStart {
  std::shared_ptr<const MotInstance> inst;
  ActiveSets active;
  DualState state;
  double epsilon = 0.0;
};
BenchStart prepare_bench(std::shared_ptr<const MotInstance> inst, ScheduleConfig sched,
                         double eps);

struct BenchTrace {
  SolverChoice solver = SolverChoice::kHybrid;
  SweepLog log;
  bool reached = false;
  double seconds = 0.0;  // time to reach the target, or total when not reached
};
std::vector<BenchTrace> bench_solvers(const BenchStart& start, const ScheduleConfig& sched,
                                      double target, double max_seconds,
                                      const std::vector<SolverChoice>& solvers);
// solver,iter,seconds,grad_error,dual_value
void write_bench_csv(std::ostream& os, const std::vector<BenchTrace>& traces);

// Index of the support point of m nearest to pt.
std::size_t nearest_point(const DiscreteMeasure& m, std::span<const double> pt);

}  // namespace mot
