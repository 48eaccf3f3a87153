#include "mot/sinkhorn.hpp"

#include <chrono>
#include <iomanip>
#include <ostream>

namespace mot {

void SweepLog::write_csv(std::ostream& os, bool header) const {
  if (header) os << "iter,seconds,grad_error,dual_value\n";
  os << std::setprecision(17);
  for (const auto& r : rows)
    os << r.iter << ',' << r.seconds << ',' << r.grad_error << ',' << r.dual_value << '\n';
}

std::size_t SweepLog::monotonicity_violations(double slack) const {
  std::size_t n = 0;
  for (std::size_t k = 1; k < rows.size(); ++k)
    if (rows[k].dual_value > rows[k - 1].dual_value + slack) ++n;
  return n;
}

long sinkhorn_sweep(const EntropicProblem& prob, DualState& state) {
  state.psi = update_psi(prob, state);
  return update_phi_h(prob, state);
}

SinkhornResult run_sinkhorn(const EntropicProblem& prob, DualState state,
                            const SinkhornStop& stop, const SweepCallback& cb) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  SinkhornResult res;
  for (long it = 0; it < stop.max_iters; ++it) {
    const long hit = sinkhorn_sweep(prob, state);
    const auto sum = dual_summary(prob, state);
    SweepRecord rec;
    rec.iter = it + 1;
    rec.seconds = std::chrono::duration<double>(clock::now() - t0).count();
    rec.grad_error = sum.grad_error;
    rec.dual_value = sum.dual_value;
    rec.h_iters = hit;
    res.log.rows.push_back(rec);
    res.iterations = it + 1;
    res.grad_error = sum.grad_error;
    if (sum.grad_error <= stop.grad_tol) {
      res.converged = true;
      break;
    }
    if (cb && cb(rec)) break;
    if (stop.max_seconds > 0.0 && rec.seconds >= stop.max_seconds) break;
  }
  res.state = std::move(state);
  return res;
}

}  // namespace mot
