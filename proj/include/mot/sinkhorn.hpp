#pragma once

#include <functional>
#include <iosfwd>
#include <vector>

#include "mot/entropic.hpp"

namespace mot {

struct SweepRecord {
  long iter = 0;
  double seconds = 0.0;
  double grad_error = 0.0;
  double dual_value = 0.0;
  long h_iters = 0;
};

struct SweepLog {
  std::vector<SweepRecord> rows;

  // iter,seconds,grad_error,dual_value
  void write_csv(std::ostream& os, bool header = true) const;
  // Number of records whose dual value exceeds the previous one by more than
  // slack.
  std::size_t monotonicity_violations(double slack = 0.0) const;
};

// psi block then the implied (phi, h) block. Returns the h-Newton iteration
// count.
long sinkhorn_sweep(const EntropicProblem& prob, DualState& state);

struct SinkhornStop {
  double grad_tol = 1e-6;
  long max_iters = 1000;
  double max_seconds = 0.0;  // 0 disables the wall-clock limit
};

struct SinkhornResult {
  DualState state;
  SweepLog log;
  bool converged = false;
  long iterations = 0;
  double grad_error = 0.0;
};

// Optional early stop: return true to stop after the current sweep.
using SweepCallback = std::function<bool(const SweepRecord&)>;

SinkhornResult run_sinkhorn(const EntropicProblem& prob, DualState state,
                            const SinkhornStop& stop, const SweepCallback& cb = {});

}  // namespace mot
