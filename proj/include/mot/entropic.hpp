#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "mot/active_sets.hpp"
#include "mot/detail/cost_eval.hpp"
#include "mot/model.hpp"

namespace mot {

// Quadratic penalty 0.5 * alpha * sum_y a_y (psi_y - anchor_y)^2 added to the
// implied objective. An empty anchor means anchoring at zero.
struct Penalization {
  double alpha = 0.0;
  std::vector<double> a;
  std::vector<double> anchor;

  double value(std::span<const double> psi) const;
  void add_gradient(std::span<const double> psi, std::span<double> g) const;
};

struct HSolverConfig {
  double tol_factor = 1e-11;  // h_tol = tol_factor * (1 + |x|)
  int max_iters = 50;
  int max_halvings = 60;
  double max_log_step = 50.0;  // cap on max_y |step . (y - x)| / eps
};

struct EntropicProblem {
  std::shared_ptr<const MotInstance> inst;
  double epsilon = 1.0;
  ActiveSets active;
  std::optional<Penalization> penalization;
  HSolverConfig hconf;
  detail::CostEvaluator cost;

  EntropicProblem() = default;
  // An empty `active` means the full product grid.
  EntropicProblem(std::shared_ptr<const MotInstance> instance, double eps,
                  ActiveSets active_sets = {});

  std::size_t nx() const { return inst->nx(); }
  std::size_t ny() const { return inst->ny(); }
  std::size_t dim() const { return inst->dim(); }

  // Throws std::invalid_argument on a broken invariant.
  void check() const;
};

// phi(x) + psi(y) + h(x).(y - x) - c(x, y)
double delta(const EntropicProblem& prob, const DualState& state, std::size_t xi,
             std::size_t yi);

// M + log(sum exp(t - M)) + offset with M = max t. Throws DomainError when
// terms is empty.
double stabilized_log_mean(std::span<const double> terms, double log_weight_offset);

std::vector<double> update_phi(const EntropicProblem& prob, const DualState& state);
std::vector<double> update_psi(const EntropicProblem& prob, const DualState& state);

struct HUpdate {
  std::vector<double> h_x;
  double phi_x = 0.0;
  int iterations = 0;
};

// Newton on the implied row function for one x. Throws
// InfeasibleMartingaleError when x is not inside the hull of its active y's
// and IterationLimitError when Newton stalls.
HUpdate update_h(const EntropicProblem& prob, const DualState& state, std::size_t xi,
                 std::span<const double> warm_start);

// Runs update_h for every x (in parallel), writing phi and h into state.
// Returns the total Newton iteration count. When several rows fail, the
// error of the smallest x-index is rethrown.
long update_phi_h(const EntropicProblem& prob, DualState& state);

// exp(-Delta / eps) for every active entry, in row-compressed order.
std::vector<double> kernel_values(const EntropicProblem& prob, const DualState& state);

std::vector<double> y_marginal(const EntropicProblem& prob, const DualState& state);

struct KernelStats {
  double primal_value = 0.0;
  double entropy = 0.0;
  double dual_value = 0.0;
  double mass = 0.0;
  std::vector<double> x_marginal;
  std::vector<double> y_marginal;
  std::vector<double> martingale_residual;  // nx * dim

  double x_marginal_error(const MotInstance& inst) const;
  double y_marginal_error(const MotInstance& inst) const;
  double martingale_error() const;
};

KernelStats kernel_stats(const EntropicProblem& prob, const DualState& state);

// mu[phi] + nu[psi] + eps * mass, without penalty.
double dual_value(const EntropicProblem& prob, const DualState& state);

// Dual value and y-marginal from a single kernel pass. grad_error is
// |nu - y_marginal|_1.
struct DualSummary {
  double dual_value = 0.0;
  double grad_error = 0.0;
  std::vector<double> y_marginal;
};

DualSummary dual_summary(const EntropicProblem& prob, const DualState& state);

struct TruncationResult {
  ActiveSets active;
  double dropped_mass = 0.0;
  std::size_t dropped_entries = 0;
};

// Drops entries with p < factor * min(mu_x, nu_y), keeping the largest entry
// of every row and of every column.
TruncationResult truncate_kernel(const EntropicProblem& prob, const DualState& state,
                                 double threshold_factor);

// Same rule evaluated on the full grid, ignoring prob.active, so that entries
// dropped earlier can come back.
TruncationResult truncate_kernel_full(const EntropicProblem& prob, const DualState& state,
                                      double threshold_factor);

}  // namespace mot
