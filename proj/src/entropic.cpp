#include "mot/entropic.hpp"

#include <omp.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "mot/errors.hpp"
#include "mot/hull.hpp"

namespace mot {

namespace {

constexpr std::size_t kMaxDim = 3;
using SmallMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;
using SmallVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double t : v) s += t * t;
  return std::sqrt(s);
}

// Runs body(i) for i in [0, n) in parallel and rethrows the exception of the
// smallest failing index, if any.
template <class Body>
void parallel_rows(std::size_t n, Body&& body) {
  std::vector<std::exception_ptr> errors;
  bool failed = false;
#pragma omp parallel
  {
#pragma omp for schedule(dynamic, 8)
    for (long i = 0; i < static_cast<long>(n); ++i) {
      try {
        body(static_cast<std::size_t>(i));
      } catch (...) {
#pragma omp critical(mot_row_errors)
        {
          if (errors.empty()) errors.resize(n);
          errors[static_cast<std::size_t>(i)] = std::current_exception();
          failed = true;
        }
      }
    }
  }
  if (failed) {
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
}

struct RowScratch {
  std::vector<double> base;  // -(psi - c) / eps
  std::vector<double> dy;    // (y - x), row-major
  std::vector<double> s;
  std::vector<double> w;
};

struct RowEval {
  double g = 0.0;  // log-sum-exp
  SmallVec m;      // weighted mean of y - x
  SmallMat cov;
};

template <class Cost>
void load_row(const EntropicProblem& prob, const DualState& state, std::size_t i,
              const Cost& cost, RowScratch& sc) {
  const auto& act = prob.active;
  const std::size_t d = prob.dim();
  const std::size_t b = act.row_begin(i), e = act.row_end(i), r = e - b;
  const double inv_eps = 1.0 / prob.epsilon;
  const auto x = prob.inst->mu.point(i);
  sc.base.resize(r);
  sc.dy.resize(r * d);
  sc.s.resize(r);
  sc.w.resize(r);
  for (std::size_t k = 0; k < r; ++k) {
    const std::size_t j = act.y_at(b + k);
    const auto y = prob.inst->nu.point(j);
    sc.base[k] = -(state.psi[j] - cost(i, j)) * inv_eps;
    for (std::size_t q = 0; q < d; ++q) sc.dy[k * d + q] = y[q] - x[q];
  }
}

// Row log-sum-exp at temperature temp (eps unless smoothing a hard row).
void eval_row(RowScratch& sc, std::size_t d, double eps, std::span<const double> h,
              bool with_cov, RowEval& out, double temp = 0.0) {
  const std::size_t r = sc.base.size();
  if (temp <= 0.0) temp = eps;
  const double scale = eps / temp;
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < r; ++k) {
    double hd = 0.0;
    for (std::size_t q = 0; q < d; ++q) hd += h[q] * sc.dy[k * d + q];
    sc.s[k] = (temp == eps ? sc.base[k] : sc.base[k] * scale) - hd / temp;
    mx = std::max(mx, sc.s[k]);
  }
  double wsum = 0.0;
  for (std::size_t k = 0; k < r; ++k) {
    sc.w[k] = std::exp(sc.s[k] - mx);
    wsum += sc.w[k];
  }
  out.g = mx + std::log(wsum);
  out.m.setZero(d);
  for (std::size_t k = 0; k < r; ++k)
    for (std::size_t q = 0; q < d; ++q) out.m[q] += sc.w[k] * sc.dy[k * d + q];
  out.m /= wsum;
  if (!with_cov) return;
  out.cov.setZero(d, d);
  for (std::size_t k = 0; k < r; ++k) {
    for (std::size_t p = 0; p < d; ++p) {
      const double u = sc.dy[k * d + p] - out.m[p];
      for (std::size_t q = 0; q <= p; ++q)
        out.cov(p, q) += sc.w[k] * u * (sc.dy[k * d + q] - out.m[q]);
    }
  }
  for (std::size_t p = 0; p < d; ++p)
    for (std::size_t q = 0; q <= p; ++q) {
      out.cov(p, q) /= wsum;
      out.cov(q, p) = out.cov(p, q);
    }
}

[[noreturn]] void throw_infeasible(std::size_t xi) {
  std::ostringstream os;
  os << "x-index " << xi
     << " is not in the interior of the convex hull of its active y-points";
  throw InfeasibleMartingaleError(xi, os.str());
}

// Root of the decreasing function m(h) by Newton steps kept inside a sign
// bracket, bisecting when a step leaves it or stalls. On entry cur holds the
// evaluation at out.h_x[0]; on success it holds the final one.
bool bracketed_1d(RowScratch& sc, double eps, double tol, int max_evals, HUpdate& out,
                  RowEval& cur) {
  RowEval e;
  double h = out.h_x[0];
  if (std::abs(cur.m[0]) <= tol) return true;
  int evals = 0;
  auto newton_target = [&](double at, const RowEval& ev) {
    const double c = ev.cov(0, 0);
    return c > 0.0 ? at + eps * ev.m[0] / c : std::numeric_limits<double>::quiet_NaN();
  };
  // a: m > 0, b: m < 0, a < b.
  double a = h, b = h;
  RowEval ea = cur, eb = cur;
  {
    const double sign = cur.m[0] > 0.0 ? 1.0 : -1.0;
    double step = std::abs(newton_target(h, cur) - h);
    if (!(step > 0.0) || !std::isfinite(step)) step = eps;
    // Past this shift every exponent has moved by more than the spread of
    // the row plus a margin, so the sign of m has flipped.
    double lo = sc.s[0], hi = sc.s[0], min_dy = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < sc.base.size(); ++k) {
      lo = std::min(lo, sc.s[k]);
      hi = std::max(hi, sc.s[k]);
      if (sc.dy[k] != 0.0) min_dy = std::min(min_dy, std::abs(sc.dy[k]));
    }
    if (std::isfinite(min_dy)) step = std::min(step, eps * (hi - lo + 40.0) / min_dy);
    step = std::max(step, 1e-3 * eps);
    double far = h;
    RowEval ef = cur;
    while (ef.m[0] * sign > 0.0) {
      if (++evals > max_evals) return false;
      (sign > 0.0 ? a : b) = far;
      (sign > 0.0 ? ea : eb) = ef;
      far += sign * step;
      step *= 2.0;
      const double hv[1] = {far};
      eval_row(sc, 1, eps, hv, true, ef);
      if (std::abs(ef.m[0]) <= tol) {
        out.h_x[0] = far;
        cur = ef;
        ++out.iterations;
        return true;
      }
    }
    (sign > 0.0 ? b : a) = far;
    (sign > 0.0 ? eb : ea) = ef;
  }
  double width = b - a;
  while (evals++ < max_evals) {
    const RowEval& best = std::abs(ea.m[0]) < std::abs(eb.m[0]) ? ea : eb;
    const double from = &best == &ea ? a : b;
    double next = newton_target(from, best);
    if (!(next > a && next < b) || (b - a) > 0.5 * width) next = 0.5 * (a + b);
    width = b - a;
    if (!(next > a && next < b)) {
      // Bracket exhausted at double precision.
      out.h_x[0] = from;
      cur = best;
      return true;
    }
    const double hv[1] = {next};
    eval_row(sc, 1, eps, hv, true, e);
    ++out.iterations;
    if (std::abs(e.m[0]) <= tol) {
      out.h_x[0] = next;
      cur = e;
      return true;
    }
    if (e.m[0] > 0.0) {
      a = next;
      ea = e;
    } else {
      b = next;
      eb = e;
    }
  }
  return false;
}

// Damped Newton on the row log-sum-exp at temperature temp; cur holds the
// evaluation at out.h_x on entry and on exit.
bool damped_newton(RowScratch& sc, std::size_t d, double eps, double temp, double tol,
                   const HSolverConfig& conf, HUpdate& out, RowEval& cur) {
  const std::size_t r = sc.base.size();
  std::vector<double> trial(d);
  RowEval nxt;
  for (int it = 0;; ++it) {
    const double mnorm = cur.m.norm();
    if (mnorm <= tol) return true;
    if (it == conf.max_iters) return false;

    SmallMat a = cur.cov;
    const double tr = a.trace();
    const double reg = std::max(1e-13 * tr, 1e-300);
    for (std::size_t q = 0; q < d; ++q) a(q, q) += reg;
    SmallVec step = temp * a.ldlt().solve(cur.m);
    if (!step.allFinite()) step = cur.m;
    double reach = 0.0;
    for (std::size_t k = 0; k < r; ++k) {
      double v = 0.0;
      for (std::size_t q = 0; q < d; ++q) v += step[q] * sc.dy[k * d + q];
      reach = std::max(reach, std::abs(v) / temp);
    }
    if (reach > conf.max_log_step) step *= conf.max_log_step / reach;

    double t = 1.0;
    bool accepted = false;
    for (int hv = 0; hv <= conf.max_halvings; ++hv) {
      for (std::size_t q = 0; q < d; ++q) trial[q] = out.h_x[q] + t * step[q];
      eval_row(sc, d, eps, trial, true, nxt, temp);
      if (std::isfinite(nxt.g) && (nxt.g < cur.g || nxt.m.norm() < mnorm)) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) return false;
    out.h_x = trial;
    std::swap(cur, nxt);
    ++out.iterations;
  }
}

template <class Cost>
HUpdate solve_row(const EntropicProblem& prob, const DualState& state, std::size_t xi,
                  std::span<const double> warm, const Cost& cost, RowScratch& sc) {
  const std::size_t d = prob.dim();
  const double eps = prob.epsilon;
  load_row(prob, state, xi, cost, sc);
  const std::size_t r = sc.base.size();

  for (std::size_t q = 0; q < d; ++q) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t k = 0; k < r; ++k) {
      lo = std::min(lo, sc.dy[k * d + q]);
      hi = std::max(hi, sc.dy[k * d + q]);
    }
    if (!(lo < 0.0 && hi > 0.0)) throw_infeasible(xi);
  }

  const auto x = prob.inst->mu.point(xi);
  const double tol = prob.hconf.tol_factor * (1.0 + norm2(x));

  HUpdate out;
  out.h_x.assign(warm.begin(), warm.end());
  RowEval cur;
  eval_row(sc, d, eps, out.h_x, true, cur);
  bool converged = false;
  if (d == 1) {
    converged = bracketed_1d(sc, eps, tol, 4 * prob.hconf.max_iters, out, cur);
    if (converged) {
      out.phi_x = eps * (cur.g - std::log(prob.inst->mu.weight(xi)));
      return out;
    }
  }
  if (d > 1) converged = damped_newton(sc, d, eps, eps, tol, prob.hconf, out, cur);
  if (!converged && d > 1) {
    // Continuation in the row temperature from a smooth start.
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double b : sc.base) {
      lo = std::min(lo, b * eps);
      hi = std::max(hi, b * eps);
    }
    double temp = std::max(eps, hi - lo);
    out.h_x.assign(d, 0.0);
    while (temp > eps) {
      eval_row(sc, d, eps, out.h_x, true, cur, temp);
      damped_newton(sc, d, eps, temp, tol, prob.hconf, out, cur);
      temp = std::max(eps, 0.5 * temp);
    }
    eval_row(sc, d, eps, out.h_x, true, cur);
    converged = damped_newton(sc, d, eps, eps, tol, prob.hconf, out, cur);
  }

  if (!converged) {
    if (d >= 2) {
      // Strictly concave test function so the envelope at 0 is well posed.
      std::vector<double> pts(r * d), f(r, 0.0);
      for (std::size_t k = 0; k < r; ++k)
        for (std::size_t q = 0; q < d; ++q) {
          pts[k * d + q] = sc.dy[k * d + q];
          f[k] -= sc.dy[k * d + q] * sc.dy[k * d + q];
        }
      bool inside = true;
      try {
        const auto hr = hull_nd(d, pts, f, std::vector<double>(d, 0.0), std::nullopt);
        inside = !hr.near_boundary;
      } catch (const HullError&) {
        inside = false;
      }
      if (!inside) throw_infeasible(xi);
    }
    std::ostringstream os;
    os << "h-Newton did not converge at x-index " << xi << " (|m| = " << cur.m.norm()
       << ", tol " << tol << ")";
    throw IterationLimitError(xi, os.str());
  }
  out.phi_x = eps * (cur.g - std::log(prob.inst->mu.weight(xi)));
  return out;
}

}  // namespace

double Penalization::value(std::span<const double> psi) const {
  CompensatedSum s;
  for (std::size_t j = 0; j < psi.size(); ++j) {
    const double v = psi[j] - (anchor.empty() ? 0.0 : anchor[j]);
    s.add(a[j] * v * v);
  }
  return 0.5 * alpha * s.value();
}

void Penalization::add_gradient(std::span<const double> psi, std::span<double> g) const {
  for (std::size_t j = 0; j < psi.size(); ++j)
    g[j] += alpha * a[j] * (psi[j] - (anchor.empty() ? 0.0 : anchor[j]));
}

EntropicProblem::EntropicProblem(std::shared_ptr<const MotInstance> instance, double eps,
                                 ActiveSets active_sets)
    : inst(std::move(instance)), epsilon(eps), active(std::move(active_sets)) {
  if (!inst) throw std::invalid_argument("EntropicProblem: null instance");
  if (active.nx() == 0) active = ActiveSets::full(inst->nx(), inst->ny());
  if (inst->dim() > kMaxDim)
    throw UnsupportedDimensionError("entropic solver supports dimension 1 to 3");
  cost = detail::CostEvaluator(*inst);
  check();
}

void EntropicProblem::check() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon))
    throw std::invalid_argument("EntropicProblem: epsilon must be positive");
  if (active.nx() != inst->nx() || active.ny() != inst->ny())
    throw std::invalid_argument("EntropicProblem: active sets do not match the grid");
  if (penalization) {
    const auto& pen = *penalization;
    if (pen.alpha < 0.0) throw std::invalid_argument("Penalization: negative alpha");
    if (pen.a.size() != inst->ny())
      throw std::invalid_argument("Penalization: weight vector has wrong size");
    for (double v : pen.a)
      if (!(v > 0.0)) throw std::invalid_argument("Penalization: weights must be > 0");
    if (!pen.anchor.empty() && pen.anchor.size() != inst->ny())
      throw std::invalid_argument("Penalization: anchor has wrong size");
  }
}

double delta(const EntropicProblem& prob, const DualState& state, std::size_t xi,
             std::size_t yi) {
  const auto x = prob.inst->mu.point(xi);
  const auto y = prob.inst->nu.point(yi);
  double hd = 0.0;
  for (std::size_t q = 0; q < x.size(); ++q) hd += state.h[xi * x.size() + q] * (y[q] - x[q]);
  return state.phi[xi] + state.psi[yi] + hd - prob.inst->cost_at(xi, yi);
}

double stabilized_log_mean(std::span<const double> terms, double log_weight_offset) {
  if (terms.empty()) throw DomainError("stabilized_log_mean: empty term list");
  double mx = terms[0];
  for (double t : terms) mx = std::max(mx, t);
  double s = 0.0;
  for (double t : terms) s += std::exp(t - mx);
  return mx + std::log(s) + log_weight_offset;
}

std::vector<double> update_phi(const EntropicProblem& prob, const DualState& state) {
  const std::size_t d = prob.dim();
  const double inv_eps = 1.0 / prob.epsilon;
  std::vector<double> phi(prob.nx());
  const auto& act = prob.active;
  prob.cost.visit([&](const auto& cost) {
#pragma omp parallel
    {
      std::vector<double> t(act.max_row_size());
#pragma omp for schedule(dynamic, 8)
      for (long li = 0; li < static_cast<long>(prob.nx()); ++li) {
        const std::size_t i = static_cast<std::size_t>(li);
        const auto x = prob.inst->mu.point(i);
        const std::size_t b = act.row_begin(i), r = act.row_end(i) - b;
        for (std::size_t k = 0; k < r; ++k) {
          const std::size_t j = act.y_at(b + k);
          const auto y = prob.inst->nu.point(j);
          double hd = 0.0;
          for (std::size_t q = 0; q < d; ++q) hd += state.h[i * d + q] * (y[q] - x[q]);
          t[k] = -(state.psi[j] + hd - cost(i, j)) * inv_eps;
        }
        phi[i] = prob.epsilon * stabilized_log_mean({t.data(), r},
                                                   -std::log(prob.inst->mu.weight(i)));
      }
    }
  });
  return phi;
}

std::vector<double> update_psi(const EntropicProblem& prob, const DualState& state) {
  const std::size_t d = prob.dim();
  const double inv_eps = 1.0 / prob.epsilon;
  std::vector<double> psi(prob.ny());
  const auto& act = prob.active;
  prob.cost.visit([&](const auto& cost) {
#pragma omp parallel
    {
      std::vector<double> t(act.max_col_size());
#pragma omp for schedule(dynamic, 8)
      for (long lj = 0; lj < static_cast<long>(prob.ny()); ++lj) {
        const std::size_t j = static_cast<std::size_t>(lj);
        const auto y = prob.inst->nu.point(j);
        const std::size_t b = act.col_begin(j), r = act.col_end(j) - b;
        for (std::size_t k = 0; k < r; ++k) {
          const std::size_t i = act.x_at(b + k);
          const auto x = prob.inst->mu.point(i);
          double hd = 0.0;
          for (std::size_t q = 0; q < d; ++q) hd += state.h[i * d + q] * (y[q] - x[q]);
          t[k] = -(state.phi[i] + hd - cost(i, j)) * inv_eps;
        }
        psi[j] = prob.epsilon * stabilized_log_mean({t.data(), r},
                                                   -std::log(prob.inst->nu.weight(j)));
      }
    }
  });
  return psi;
}

HUpdate update_h(const EntropicProblem& prob, const DualState& state, std::size_t xi,
                 std::span<const double> warm_start) {
  if (xi >= prob.nx()) throw IndexError("update_h: x-index out of range");
  if (warm_start.size() != prob.dim())
    throw std::invalid_argument("update_h: warm start has wrong dimension");
  RowScratch sc;
  return prob.cost.visit([&](const auto& cost) {
    return solve_row(prob, state, xi, warm_start, cost, sc);
  });
}

long update_phi_h(const EntropicProblem& prob, DualState& state) {
  const std::size_t d = prob.dim();
  const std::size_t n = prob.nx();
  std::vector<double> new_phi(n), new_h(n * d);
  std::vector<int> iters(n, 0);
  prob.cost.visit([&](const auto& cost) {
    std::vector<RowScratch> scratch(static_cast<std::size_t>(omp_get_max_threads()));
    parallel_rows(n, [&](std::size_t i) {
      auto& sc = scratch[static_cast<std::size_t>(omp_get_thread_num())];
      const auto u = solve_row(prob, state, i, state.h_at(i), cost, sc);
      new_phi[i] = u.phi_x;
      for (std::size_t q = 0; q < d; ++q) new_h[i * d + q] = u.h_x[q];
      iters[i] = u.iterations;
    });
  });
  state.phi = std::move(new_phi);
  state.h = std::move(new_h);
  long total = 0;
  for (int v : iters) total += v;
  return total;
}

std::vector<double> kernel_values(const EntropicProblem& prob, const DualState& state) {
  const std::size_t d = prob.dim();
  const double inv_eps = 1.0 / prob.epsilon;
  const auto& act = prob.active;
  std::vector<double> p(act.nnz());
  prob.cost.visit([&](const auto& cost) {
#pragma omp parallel for schedule(dynamic, 8)
    for (long li = 0; li < static_cast<long>(prob.nx()); ++li) {
      const std::size_t i = static_cast<std::size_t>(li);
      const auto x = prob.inst->mu.point(i);
      for (std::size_t pos = act.row_begin(i); pos < act.row_end(i); ++pos) {
        const std::size_t j = act.y_at(pos);
        const auto y = prob.inst->nu.point(j);
        double hd = 0.0;
        for (std::size_t q = 0; q < d; ++q) hd += state.h[i * d + q] * (y[q] - x[q]);
        p[pos] = std::exp(-(state.phi[i] + state.psi[j] + hd - cost(i, j)) * inv_eps);
      }
    }
  });
  return p;
}

namespace {

std::vector<double> column_sums(const ActiveSets& act, const std::vector<double>& p) {
  std::vector<double> out(act.ny());
#pragma omp parallel for schedule(static)
  for (long lj = 0; lj < static_cast<long>(act.ny()); ++lj) {
    const std::size_t j = static_cast<std::size_t>(lj);
    double s = 0.0;
    for (std::size_t k = act.col_begin(j); k < act.col_end(j); ++k)
      s += p[act.csr_position(k)];
    out[j] = s;
  }
  return out;
}

}  // namespace

std::vector<double> y_marginal(const EntropicProblem& prob, const DualState& state) {
  return column_sums(prob.active, kernel_values(prob, state));
}

DualSummary dual_summary(const EntropicProblem& prob, const DualState& state) {
  const auto p = kernel_values(prob, state);
  const auto& act = prob.active;
  std::vector<double> rows(prob.nx());
#pragma omp parallel for schedule(static)
  for (long li = 0; li < static_cast<long>(prob.nx()); ++li) {
    const std::size_t i = static_cast<std::size_t>(li);
    CompensatedSum s;
    for (std::size_t pos = act.row_begin(i); pos < act.row_end(i); ++pos) s.add(p[pos]);
    rows[i] = s.value();
  }
  DualSummary out;
  CompensatedSum total;
  for (std::size_t i = 0; i < prob.nx(); ++i) total.add(prob.inst->mu.weight(i) * state.phi[i]);
  for (std::size_t j = 0; j < prob.ny(); ++j) total.add(prob.inst->nu.weight(j) * state.psi[j]);
  CompensatedSum mass;
  for (double v : rows) mass.add(v);
  total.add(prob.epsilon * mass.value());
  out.dual_value = total.value();
  out.y_marginal = column_sums(act, p);
  CompensatedSum err;
  for (std::size_t j = 0; j < prob.ny(); ++j)
    err.add(std::abs(prob.inst->nu.weight(j) - out.y_marginal[j]));
  out.grad_error = err.value();
  return out;
}

double dual_value(const EntropicProblem& prob, const DualState& state) {
  return dual_summary(prob, state).dual_value;
}

double KernelStats::x_marginal_error(const MotInstance& inst) const {
  double s = 0.0;
  for (std::size_t i = 0; i < x_marginal.size(); ++i)
    s += std::abs(x_marginal[i] - inst.mu.weight(i));
  return s;
}

double KernelStats::y_marginal_error(const MotInstance& inst) const {
  double s = 0.0;
  for (std::size_t j = 0; j < y_marginal.size(); ++j)
    s += std::abs(y_marginal[j] - inst.nu.weight(j));
  return s;
}

double KernelStats::martingale_error() const {
  double s = 0.0;
  for (double v : martingale_residual) s += std::abs(v);
  return s;
}

KernelStats kernel_stats(const EntropicProblem& prob, const DualState& state) {
  const std::size_t d = prob.dim();
  const std::size_t n = prob.nx();
  const double inv_eps = 1.0 / prob.epsilon;
  const auto& act = prob.active;
  KernelStats st;
  std::vector<double> p(act.nnz());
  std::vector<double> row_primal(n), row_entropy(n);
  st.x_marginal.assign(n, 0.0);
  st.martingale_residual.assign(n * d, 0.0);
  prob.cost.visit([&](const auto& cost) {
#pragma omp parallel for schedule(dynamic, 8)
    for (long li = 0; li < static_cast<long>(n); ++li) {
      const std::size_t i = static_cast<std::size_t>(li);
      const auto x = prob.inst->mu.point(i);
      CompensatedSum mass, primal, entropy;
      for (std::size_t pos = act.row_begin(i); pos < act.row_end(i); ++pos) {
        const std::size_t j = act.y_at(pos);
        const auto y = prob.inst->nu.point(j);
        double hd = 0.0;
        for (std::size_t q = 0; q < d; ++q) hd += state.h[i * d + q] * (y[q] - x[q]);
        const double c = cost(i, j);
        const double lp = -(state.phi[i] + state.psi[j] + hd - c) * inv_eps;
        const double v = std::exp(lp);
        p[pos] = v;
        mass.add(v);
        primal.add(v * c);
        entropy.add((lp - 1.0) * v);
        for (std::size_t q = 0; q < d; ++q)
          st.martingale_residual[i * d + q] += v * (y[q] - x[q]);
      }
      st.x_marginal[i] = mass.value();
      row_primal[i] = primal.value();
      row_entropy[i] = entropy.value();
    }
  });
  st.y_marginal = column_sums(act, p);
  CompensatedSum mass, primal, entropy;
  for (std::size_t i = 0; i < n; ++i) {
    mass.add(st.x_marginal[i]);
    primal.add(row_primal[i]);
    entropy.add(row_entropy[i]);
  }
  st.mass = mass.value();
  st.primal_value = primal.value();
  st.entropy = entropy.value();
  CompensatedSum dual;
  for (std::size_t i = 0; i < n; ++i) dual.add(prob.inst->mu.weight(i) * state.phi[i]);
  for (std::size_t j = 0; j < prob.ny(); ++j) dual.add(prob.inst->nu.weight(j) * state.psi[j]);
  dual.add(prob.epsilon * st.mass);
  st.dual_value = dual.value();
  return st;
}

TruncationResult truncate_kernel(const EntropicProblem& prob, const DualState& state,
                                 double threshold_factor) {
  const auto& act = prob.active;
  const auto p = kernel_values(prob, state);
  const std::size_t n = prob.nx(), m = prob.ny();
  std::vector<char> keep(act.nnz(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    const double mu_i = prob.inst->mu.weight(i);
    std::size_t best = act.row_begin(i);
    for (std::size_t pos = act.row_begin(i); pos < act.row_end(i); ++pos) {
      const double thr = threshold_factor * std::min(mu_i, prob.inst->nu.weight(act.y_at(pos)));
      if (!(p[pos] < thr)) keep[pos] = 1;
      if (p[pos] > p[best]) best = pos;
    }
    keep[best] = 1;
  }
  for (std::size_t j = 0; j < m; ++j) {
    std::size_t best = act.csr_position(act.col_begin(j));
    for (std::size_t k = act.col_begin(j); k < act.col_end(j); ++k) {
      const std::size_t pos = act.csr_position(k);
      if (p[pos] > p[best]) best = pos;
    }
    keep[best] = 1;
  }
  TruncationResult out;
  std::vector<std::vector<ActiveSets::Index>> rows(n);
  CompensatedSum dropped;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t pos = act.row_begin(i); pos < act.row_end(i); ++pos) {
      if (keep[pos]) {
        rows[i].push_back(act.y_at(pos));
      } else {
        dropped.add(p[pos]);
        ++out.dropped_entries;
      }
    }
  }
  out.dropped_mass = dropped.value();
  out.active = out.dropped_entries == 0 ? act : ActiveSets::from_rows(m, rows);
  return out;
}

TruncationResult truncate_kernel_full(const EntropicProblem& prob, const DualState& state,
                                      double threshold_factor) {
  const std::size_t n = prob.nx(), m = prob.ny(), d = prob.dim();
  const double eps = prob.epsilon;
  const auto& mu = prob.inst->mu;
  const auto& nu = prob.inst->nu;
  std::vector<std::vector<ActiveSets::Index>> rows(n);
  std::vector<double> row_dropped(n, 0.0);
  std::vector<std::size_t> row_dropped_n(n, 0);
  std::vector<double> col_best(m, -1.0);
  std::vector<std::size_t> col_arg(m, 0);
  prob.cost.visit([&](const auto& cost) {
    auto pval = [&](std::size_t i, std::size_t j) {
      const auto x = mu.point(i);
      const auto y = nu.point(j);
      double dl = state.phi[i] + state.psi[j] - cost(i, j);
      for (std::size_t q = 0; q < d; ++q) dl += state.h[i * d + q] * (y[q] - x[q]);
      return std::exp(-dl / eps);
    };
    parallel_rows(n, [&](std::size_t i) {
      const double mu_i = mu.weight(i);
      std::size_t best = 0;
      double bp = -1.0, drop = 0.0;
      std::size_t ndrop = 0;
      auto& r = rows[i];
      for (std::size_t j = 0; j < m; ++j) {
        const double v = pval(i, j);
        if (v > bp) {
          bp = v;
          best = j;
        }
        if (!(v < threshold_factor * std::min(mu_i, nu.weight(j))))
          r.push_back(static_cast<ActiveSets::Index>(j));
      }
      if (r.empty() || std::find(r.begin(), r.end(), best) == r.end()) {
        r.insert(std::upper_bound(r.begin(), r.end(), static_cast<ActiveSets::Index>(best)),
                 static_cast<ActiveSets::Index>(best));
      }
      std::size_t k = 0;
      for (std::size_t j = 0; j < m; ++j) {
        if (k < r.size() && r[k] == j) {
          ++k;
          continue;
        }
        drop += pval(i, j);
        ++ndrop;
      }
      row_dropped[i] = drop;
      row_dropped_n[i] = ndrop;
    });
    parallel_rows(m, [&](std::size_t j) {
      for (std::size_t i = 0; i < n; ++i) {
        const double v = pval(i, j);
        if (v > col_best[j]) {
          col_best[j] = v;
          col_arg[j] = i;
        }
      }
    });
  });
  TruncationResult out;
  CompensatedSum dropped;
  for (std::size_t i = 0; i < n; ++i) {
    dropped.add(row_dropped[i]);
    out.dropped_entries += row_dropped_n[i];
  }
  for (std::size_t j = 0; j < m; ++j) {
    auto& r = rows[col_arg[j]];
    const auto it = std::lower_bound(r.begin(), r.end(), static_cast<ActiveSets::Index>(j));
    if (it == r.end() || *it != j) {
      r.insert(it, static_cast<ActiveSets::Index>(j));
      dropped.add(-col_best[j]);
      --out.dropped_entries;
    }
  }
  out.dropped_mass = dropped.value();
  out.active = out.dropped_entries == 0 ? ActiveSets::full(n, m) : ActiveSets::from_rows(m, rows);
  return out;
}

}  // namespace mot
