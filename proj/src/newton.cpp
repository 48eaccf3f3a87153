#include "mot/newton.hpp"

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "mot/errors.hpp"

namespace mot {

namespace {

using BlockMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 4, 4>;
using BlockVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 4, 1>;

double norm1(std::span<const double> v) {
  double s = 0.0;
  for (double t : v) s += std::abs(t);
  return s;
}

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double t : v) s += t * t;
  return std::sqrt(s);
}

double dotv(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

void fill_block(const EntropicProblem& prob, ImpliedState& is) {
  const std::size_t d = prob.dim(), b = d + 1;
  const auto& act = prob.active;
  is.block_inv.assign(prob.nx() * b * b, 0.0);
#pragma omp parallel for schedule(dynamic, 8)
  for (long li = 0; li < static_cast<long>(prob.nx()); ++li) {
    const std::size_t i = static_cast<std::size_t>(li);
    const auto x = prob.inst->mu.point(i);
    BlockMat m = BlockMat::Zero(b, b);
    BlockVec v(b);
    v[0] = 1.0;
    for (std::size_t pos = act.row_begin(i); pos < act.row_end(i); ++pos) {
      const auto y = prob.inst->nu.point(act.y_at(pos));
      for (std::size_t q = 0; q < d; ++q) v[q + 1] = y[q] - x[q];
      m.noalias() += is.p[pos] * v * v.transpose();
    }
    BlockMat inv;
    Eigen::LDLT<BlockMat> ldlt(m);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive() &&
        ldlt.vectorD().minCoeff() > 1e-300) {
      inv = ldlt.solve(BlockMat::Identity(b, b));
    } else {
      inv = Eigen::CompleteOrthogonalDecomposition<BlockMat>(m).pseudoInverse();
    }
    for (std::size_t r = 0; r < b; ++r)
      for (std::size_t c = 0; c < b; ++c) is.block_inv[i * b * b + r * b + c] = inv(r, c);
  }
}

}  // namespace

ImpliedState implicitation(const EntropicProblem& prob, std::span<const double> psi,
                           std::span<const double> warm_h) {
  if (psi.size() != prob.ny()) throw std::invalid_argument("implicitation: psi size");
  ImpliedState is;
  is.dual = DualState::zeros(prob.nx(), prob.ny(), prob.dim());
  is.dual.psi.assign(psi.begin(), psi.end());
  if (!warm_h.empty()) is.dual.h.assign(warm_h.begin(), warm_h.end());
  is.h_iters = update_phi_h(prob, is.dual);
  is.p = kernel_values(prob, is.dual);

  const auto& act = prob.active;
  is.y_marg.assign(prob.ny(), 0.0);
#pragma omp parallel for schedule(static)
  for (long lj = 0; lj < static_cast<long>(prob.ny()); ++lj) {
    const std::size_t j = static_cast<std::size_t>(lj);
    double s = 0.0;
    for (std::size_t k = act.col_begin(j); k < act.col_end(j); ++k)
      s += is.p[act.csr_position(k)];
    is.y_marg[j] = s;
  }
  CompensatedSum total, mass;
  for (std::size_t i = 0; i < prob.nx(); ++i) {
    total.add(prob.inst->mu.weight(i) * is.dual.phi[i]);
    for (std::size_t pos = act.row_begin(i); pos < act.row_end(i); ++pos) mass.add(is.p[pos]);
  }
  for (std::size_t j = 0; j < prob.ny(); ++j) total.add(prob.inst->nu.weight(j) * psi[j]);
  total.add(prob.epsilon * mass.value());
  is.value = total.value();
  fill_block(prob, is);
  return is;
}

ImpliedState implicitation(const EntropicProblem& prob, std::span<const double> psi,
                           const ImpliedState* warm) {
  if (warm) return implicitation(prob, psi, std::span<const double>(warm->dual.h));
  return implicitation(prob, psi, std::span<const double>{});
}

double penalized_value(const EntropicProblem& prob, const ImpliedState& is) {
  double v = is.value;
  if (prob.penalization) v += prob.penalization->value(is.dual.psi);
  return v;
}

std::vector<double> grad_tilde_v(const EntropicProblem& prob, const ImpliedState& is) {
  std::vector<double> g(prob.ny());
  for (std::size_t j = 0; j < prob.ny(); ++j) g[j] = prob.inst->nu.weight(j) - is.y_marg[j];
  if (prob.penalization) prob.penalization->add_gradient(is.dual.psi, g);
  return g;
}

std::vector<double> hvp_tilde_v(const EntropicProblem& prob, const ImpliedState& is,
                                std::span<const double> pv) {
  const std::size_t d = prob.dim(), b = d + 1, n = prob.nx();
  const auto& act = prob.active;
  std::vector<double> z(n * b);
#pragma omp parallel for schedule(dynamic, 8)
  for (long li = 0; li < static_cast<long>(n); ++li) {
    const std::size_t i = static_cast<std::size_t>(li);
    const auto x = prob.inst->mu.point(i);
    double acc[4] = {0.0, 0.0, 0.0, 0.0};
    for (std::size_t pos = act.row_begin(i); pos < act.row_end(i); ++pos) {
      const std::size_t j = act.y_at(pos);
      const auto y = prob.inst->nu.point(j);
      const double w = is.p[pos] * pv[j];
      acc[0] += w;
      for (std::size_t q = 0; q < d; ++q) acc[q + 1] += w * (y[q] - x[q]);
    }
    const double* inv = is.block_inv.data() + i * b * b;
    for (std::size_t r = 0; r < b; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < b; ++c) s += inv[r * b + c] * acc[c];
      z[i * b + r] = s;
    }
  }
  std::vector<double> out(prob.ny());
  const double inv_eps = 1.0 / prob.epsilon;
#pragma omp parallel for schedule(dynamic, 8)
  for (long lj = 0; lj < static_cast<long>(prob.ny()); ++lj) {
    const std::size_t j = static_cast<std::size_t>(lj);
    const auto y = prob.inst->nu.point(j);
    double s = 0.0;
    for (std::size_t k = act.col_begin(j); k < act.col_end(j); ++k) {
      const std::size_t i = act.x_at(k);
      const auto x = prob.inst->mu.point(i);
      double t = z[i * b];
      for (std::size_t q = 0; q < d; ++q) t += (y[q] - x[q]) * z[i * b + q + 1];
      s += is.p[act.csr_position(k)] * t;
    }
    out[j] = (is.y_marg[j] * pv[j] - s) * inv_eps;
  }
  if (prob.penalization) {
    const auto& pen = *prob.penalization;
    for (std::size_t j = 0; j < prob.ny(); ++j) out[j] += pen.alpha * pen.a[j] * pv[j];
  }
  return out;
}

std::vector<double> hessian_diagonal(const EntropicProblem& prob, const ImpliedState& is) {
  const std::size_t d = prob.dim(), b = d + 1;
  const auto& act = prob.active;
  const double inv_eps = 1.0 / prob.epsilon;
  std::vector<double> diag(prob.ny());
#pragma omp parallel for schedule(dynamic, 8)
  for (long lj = 0; lj < static_cast<long>(prob.ny()); ++lj) {
    const std::size_t j = static_cast<std::size_t>(lj);
    const auto y = prob.inst->nu.point(j);
    double s = 0.0;
    double v[4];
    for (std::size_t k = act.col_begin(j); k < act.col_end(j); ++k) {
      const std::size_t i = act.x_at(k);
      const auto x = prob.inst->mu.point(i);
      v[0] = 1.0;
      for (std::size_t q = 0; q < d; ++q) v[q + 1] = y[q] - x[q];
      const double* inv = is.block_inv.data() + i * b * b;
      double quad = 0.0;
      for (std::size_t r = 0; r < b; ++r)
        for (std::size_t c = 0; c < b; ++c) quad += v[r] * inv[r * b + c] * v[c];
      const double pp = is.p[act.csr_position(k)];
      s += pp * pp * quad;
    }
    const double raw = (is.y_marg[j] - s) * inv_eps;
    diag[j] = std::max(raw, std::max(1e-12 * is.y_marg[j] * inv_eps, 1e-300));
  }
  if (prob.penalization) {
    const auto& pen = *prob.penalization;
    for (std::size_t j = 0; j < prob.ny(); ++j) diag[j] += pen.alpha * pen.a[j];
  }
  return diag;
}

CgResult cg_solve(const LinearOp& hvp, std::span<const double> grad,
                  std::span<const double> precond_diag, double forcing, int max_iters) {
  const std::size_t n = grad.size();
  CgResult res;
  res.p.assign(n, 0.0);
  std::vector<double> r(grad.begin(), grad.end()), z(n), dir(n);
  const double gnorm = norm2(grad);
  const double target = forcing * gnorm;
  res.residual = gnorm;
  if (gnorm == 0.0) return res;
  for (std::size_t k = 0; k < n; ++k) z[k] = r[k] / precond_diag[k];
  dir = z;
  double rz = dotv(r, z);
  for (int it = 0; it < max_iters; ++it) {
    const auto hd = hvp(dir);
    const double curv = dotv(dir, hd);
    if (!(curv > 0.0)) {
      res.negative_curvature = true;
      if (it == 0) {
        for (std::size_t k = 0; k < n; ++k) res.p[k] = grad[k] / precond_diag[k];
      }
      break;
    }
    const double a = rz / curv;
    for (std::size_t k = 0; k < n; ++k) {
      res.p[k] += a * dir[k];
      r[k] -= a * hd[k];
    }
    res.iterations = it + 1;
    res.residual = norm2(r);
    if (res.residual <= target) break;
    for (std::size_t k = 0; k < n; ++k) z[k] = r[k] / precond_diag[k];
    const double rz_new = dotv(r, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t k = 0; k < n; ++k) dir[k] = z[k] + beta * dir[k];
  }
  return res;
}

LineSearchResult wolfe_line_search(const std::function<LinePoint(double)>& eval, double f0,
                                   double slope0, const WolfeConfig& cfg) {
  LineSearchResult res;
  double lo = 0.0, hi = std::numeric_limits<double>::infinity(), t = 1.0;
  double best_f = f0;
  bool have_best = false;
  LinePoint best_pt;
  double best_t = 0.0;
  for (int k = 0; k <= cfg.max_bisections; ++k) {
    const LinePoint pt = eval(t);
    ++res.evals;
    const bool armijo = pt.ok && std::isfinite(pt.value) && pt.value <= f0 - cfg.c1 * t * slope0;
    if (armijo && (!have_best || pt.value < best_f)) {
      best_f = pt.value;
      best_t = t;
      best_pt = pt;
      have_best = true;
    }
    if (!armijo) {
      hi = t;
    } else if (pt.slope > cfg.c2 * slope0) {
      lo = t;
    } else if (pt.slope < -cfg.c2 * slope0) {
      hi = t;
    } else {
      res.t = t;
      res.point = pt;
      return res;
    }
    t = std::isinf(hi) ? 2.0 * t : 0.5 * (lo + hi);
  }
  res.exhausted = true;
  res.t = best_t;
  res.point = best_pt;
  return res;
}

LineSearchResult wolfe_line_search(const ValueGrad& fg, std::span<const double> x,
                                   std::span<const double> direction,
                                   std::span<const double> g0, const WolfeConfig& cfg) {
  const double slope0 = dotv(g0, direction);
  const double f0 = fg(x).first;
  std::vector<double> xt(x.size());
  auto eval = [&](double t) {
    for (std::size_t k = 0; k < x.size(); ++k) xt[k] = x[k] - t * direction[k];
    const auto [f, g] = fg(xt);
    return LinePoint{f, dotv(g, direction), std::isfinite(f)};
  };
  return wolfe_line_search(eval, f0, slope0, cfg);
}

NewtonResult run_newton(const EntropicProblem& prob, std::span<const double> psi0,
                        const NewtonConfig& cfg, std::span<const double> warm_h,
                        const SweepCallback& cb) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  NewtonResult res;
  res.state = implicitation(prob, psi0, warm_h);
  long h_iters = res.state.h_iters;
  const std::size_t ny = prob.ny();
  std::vector<double> trial_psi(ny);

  for (int it = 0;; ++it) {
    const auto g = grad_tilde_v(prob, res.state);
    SweepRecord rec;
    rec.iter = it;
    rec.seconds = std::chrono::duration<double>(clock::now() - t0).count();
    rec.grad_error = norm1(g);
    rec.dual_value = penalized_value(prob, res.state);
    rec.h_iters = h_iters;
    res.log.rows.push_back(rec);
    res.grad_error = rec.grad_error;
    if (rec.grad_error <= cfg.grad_tol) {
      res.converged = true;
      break;
    }
    if (it >= cfg.max_outer_iters) break;
    if (cfg.max_seconds > 0.0 && rec.seconds >= cfg.max_seconds) break;
    if (it > 0 && cb && cb(rec)) break;

    const auto diag = hessian_diagonal(prob, res.state);
    const double gn = norm2(g);
    const double eta =
        cfg.fixed_forcing ? *cfg.fixed_forcing
                          : std::min(cfg.forcing_cap, std::pow(gn, cfg.forcing_exponent));
    const ImpliedState& base = res.state;
    auto op = [&](std::span<const double> v) { return hvp_tilde_v(prob, base, v); };
    const auto cg = cg_solve(op, g, diag, eta, cfg.cg_max_iters);
    res.cg_iterations += cg.iterations;
    if (cg.negative_curvature) ++res.negative_curvature_events;

    h_iters = 0;
    if (!cfg.line_search) {
      for (std::size_t j = 0; j < ny; ++j) trial_psi[j] = base.dual.psi[j] - cg.p[j];
      ImpliedState next = implicitation(prob, trial_psi, &base);
      h_iters = next.h_iters;
      res.state = std::move(next);
    } else {
      const double f0 = rec.dual_value;
      const double slope0 = dotv(g, cg.p);
      // Keep the state of the last evaluated point and of the best Armijo
      // point; each trial warm-starts h from the accepted base.
      std::optional<ImpliedState> last, best;
      double last_t = -1.0, best_t = -1.0, best_f = f0;
      auto eval = [&](double t) {
        for (std::size_t j = 0; j < ny; ++j) trial_psi[j] = base.dual.psi[j] - t * cg.p[j];
        LinePoint lp;
        try {
          ImpliedState s = implicitation(prob, trial_psi, &base);
          h_iters += s.h_iters;
          lp.value = penalized_value(prob, s);
          lp.slope = dotv(grad_tilde_v(prob, s), cg.p);
          lp.ok = std::isfinite(lp.value);
          if (lp.ok && lp.value <= f0 - cfg.wolfe.c1 * t * slope0 && lp.value < best_f) {
            best_f = lp.value;
            best_t = t;
            best = s;
          }
          last = std::move(s);
          last_t = t;
        } catch (const InfeasibleMartingaleError&) {
          lp.ok = false;
        } catch (const IterationLimitError&) {
          lp.ok = false;
        }
        if (!lp.ok) lp.value = std::numeric_limits<double>::infinity();
        return lp;
      };
      const auto ls = wolfe_line_search(eval, f0, slope0, cfg.wolfe);
      if (ls.exhausted) ++res.line_search_failures;
      if (ls.t <= 0.0) break;
      ImpliedState next;
      if (last && ls.t == last_t)
        next = std::move(*last);
      else if (best && ls.t == best_t)
        next = std::move(*best);
      else
        next = implicitation(prob, trial_psi, &base);
      // An exhausted search at the roundoff floor of the objective can
      // accept a point with a larger gradient; stop there instead.
      if (ls.exhausted && norm1(grad_tilde_v(prob, next)) >= rec.grad_error) break;
      res.state = std::move(next);
    }
    res.iterations = it + 1;
    if (cfg.record_iterates) res.psi_iterates.push_back(res.state.dual.psi);
  }
  return res;
}

}  // namespace mot
