#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "mot/entropic.hpp"
#include "mot/sinkhorn.hpp"

namespace mot {

// psi with the implied (phi, h) minimizers and the cached kernel data needed
// by the gradient and Hessian-vector product.
struct ImpliedState {
  DualState dual;
  std::vector<double> p;         // kernel entries, row-compressed
  std::vector<double> y_marg;    // D_psi
  std::vector<double> block_inv; // per x, inverse of the (d+1)^2 row block
  double value = 0.0;            // V_eps at the implied point, no penalty
  long h_iters = 0;

  const std::vector<double>& psi() const { return dual.psi; }
};

// Throws InfeasibleMartingaleError / IterationLimitError from update_h.
ImpliedState implicitation(const EntropicProblem& prob, std::span<const double> psi,
                           const ImpliedState* warm = nullptr);
// Same, warm-starting h from an arbitrary dual state.
ImpliedState implicitation(const EntropicProblem& prob, std::span<const double> psi,
                           std::span<const double> warm_h);

// V_eps at the implied point plus the penalty, if any.
double penalized_value(const EntropicProblem& prob, const ImpliedState& is);

std::vector<double> grad_tilde_v(const EntropicProblem& prob, const ImpliedState& is);
std::vector<double> hvp_tilde_v(const EntropicProblem& prob, const ImpliedState& is,
                                std::span<const double> p);
// Exact diagonal of the implied Hessian, floored to stay positive.
std::vector<double> hessian_diagonal(const EntropicProblem& prob, const ImpliedState& is);

struct CgResult {
  std::vector<double> p;
  int iterations = 0;
  double residual = 0.0;  // |H p - g|_2
  bool negative_curvature = false;
};

using LinearOp = std::function<std::vector<double>(std::span<const double>)>;

// Preconditioned CG for H p = g, stopping at |H p - g|_2 <= forcing * |g|_2.
CgResult cg_solve(const LinearOp& hvp, std::span<const double> grad,
                  std::span<const double> precond_diag, double forcing, int max_iters);

struct WolfeConfig {
  double c1 = 1e-4;
  double c2 = 0.9;
  int max_bisections = 40;
};

// One point of the line t -> f(x - t d): value and grad(x - t d) . d. ok=false
// marks an infeasible point (treated as +inf).
struct LinePoint {
  double value = 0.0;
  double slope = 0.0;
  bool ok = true;
};

struct LineSearchResult {
  double t = 0.0;
  int evals = 0;
  bool exhausted = false;  // returned the best Armijo point instead
  LinePoint point;
};

// slope0 = g0 . d > 0.
LineSearchResult wolfe_line_search(const std::function<LinePoint(double)>& eval, double f0,
                                   double slope0, const WolfeConfig& cfg = {});

// Vector form: fg(x) returns (f, grad).
using ValueGrad = std::function<std::pair<double, std::vector<double>>(std::span<const double>)>;
LineSearchResult wolfe_line_search(const ValueGrad& fg, std::span<const double> x,
                                   std::span<const double> direction,
                                   std::span<const double> g0, const WolfeConfig& cfg = {});

struct NewtonConfig {
  int cg_max_iters = 500;
  double forcing_cap = 0.5;
  double forcing_exponent = 0.5;  // eta = min(cap, |g|^exponent)
  std::optional<double> fixed_forcing;
  bool line_search = true;  // false: unit steps
  WolfeConfig wolfe;
  double grad_tol = 1e-6;
  int max_outer_iters = 200;
  double max_seconds = 0.0;
  bool record_iterates = false;
};

struct NewtonResult {
  ImpliedState state;
  SweepLog log;  // grad_error is the penalized gradient in norm 1
  std::vector<std::vector<double>> psi_iterates;
  bool converged = false;
  int iterations = 0;
  int cg_iterations = 0;
  int negative_curvature_events = 0;
  int line_search_failures = 0;
  double grad_error = 0.0;
};

NewtonResult run_newton(const EntropicProblem& prob, std::span<const double> psi0,
                        const NewtonConfig& cfg, std::span<const double> warm_h = {},
                        const SweepCallback& cb = {});

}  // namespace mot
