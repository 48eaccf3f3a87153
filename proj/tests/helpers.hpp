#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <vector>

#include "mot/entropic.hpp"
#include "mot/model.hpp"

namespace testutil {

inline std::shared_ptr<const mot::MotInstance> share(mot::MotInstance inst) {
  return std::make_shared<const mot::MotInstance>(std::move(inst));
}

inline mot::DiscreteMeasure measure1d(std::vector<double> pts, std::vector<double> w) {
  return mot::DiscreteMeasure(1, std::move(pts), std::move(w));
}

// Random 1D pair in convex order built by hand: nu is the y-marginal of
// two-point martingale kernels on a common grid. Independent of the library
// generator.
inline mot::MotInstance random_pair(std::mt19937_64& rng, std::size_t nx, std::size_t ny,
                                    bool tabulated = true) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> ys(ny);
  for (std::size_t j = 0; j < ny; ++j) ys[j] = -1.0 + 2.0 * double(j) / double(ny - 1);
  std::vector<double> xs, wx;
  std::vector<double> nu(ny, 0.0);
  while (xs.size() < nx) {
    const double x = -0.5 + u(rng);
    bool dup = false;
    for (double v : xs) dup |= std::abs(v - x) < 1e-6;
    if (dup) continue;
    xs.push_back(x);
    wx.push_back(0.2 + u(rng));
  }
  double s = 0;
  for (double w : wx) s += w;
  for (double& w : wx) w /= s;
  for (std::size_t i = 0; i < nx; ++i) {
    // Full-support kernel: mix uniform on the grid with a two-point law that
    // fixes the mean at x.
    std::vector<double> k(ny, 1.0 / double(ny));
    double m = 0;
    for (std::size_t j = 0; j < ny; ++j) m += k[j] * ys[j];
    const double lam = 0.6;
    // target mean of the two-point component
    const double t = (xs[i] - (1 - lam) * m) / lam;
    std::size_t jr = 1;
    while (jr < ny - 1 && ys[jr] < t) ++jr;
    const std::size_t jl = jr - 1;
    const double q = (t - ys[jl]) / (ys[jr] - ys[jl]);
    for (std::size_t j = 0; j < ny; ++j) k[j] *= (1 - lam);
    k[jl] += lam * (1 - q);
    k[jr] += lam * q;
    for (std::size_t j = 0; j < ny; ++j) nu[j] += wx[i] * k[j];
  }
  mot::CostSpec c;
  if (tabulated) {
    std::vector<double> m(nx * ny);
    for (auto& v : m) v = 2.0 * u(rng) - 1.0;
    c = mot::CostSpec::tabulated(nx, ny, std::move(m));
  } else {
    c = mot::CostSpec::formula(mot::CostKind::kForwardStartPower);
  }
  return mot::MotInstance(measure1d(xs, wx), measure1d(ys, nu), c);
}

inline mot::DualState random_state(std::mt19937_64& rng, std::size_t nx, std::size_t ny,
                                   std::size_t d, double scale = 0.3) {
  std::normal_distribution<double> g(0.0, scale);
  auto s = mot::DualState::zeros(nx, ny, d);
  for (auto& v : s.phi) v = g(rng);
  for (auto& v : s.psi) v = g(rng);
  for (auto& v : s.h) v = g(rng);
  return s;
}

// Naive Gibbs kernel with no stabilization, long double.
inline long double naive_p(const mot::EntropicProblem& p, const mot::DualState& s, std::size_t i,
                           std::size_t j) {
  const auto& I = *p.inst;
  long double d = (long double)s.phi[i] + s.psi[j] - I.cost_at(i, j);
  for (std::size_t k = 0; k < I.dim(); ++k)
    d += (long double)s.h[i * I.dim() + k] * (I.nu.point(j)[k] - I.mu.point(i)[k]);
  return std::exp(-d / (long double)p.epsilon);
}

// Central finite difference of f along direction v.
template <class F>
double fd(F&& f, std::vector<double> x, const std::vector<double>& v, double step) {
  auto xp = x, xm = x;
  for (std::size_t k = 0; k < x.size(); ++k) {
    xp[k] += step * v[k];
    xm[k] -= step * v[k];
  }
  return (f(xp) - f(xm)) / (2 * step);
}

inline double l1(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t k = 0; k < a.size(); ++k) s += std::abs(a[k] - b[k]);
  return s;
}

// Plain Nelder-Mead, for small smooth problems.
inline std::vector<double> nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x0, double scale, int iters) {
  const std::size_t n = x0.size();
  std::vector<std::vector<double>> pts(n + 1, x0);
  for (std::size_t k = 0; k < n; ++k) pts[k + 1][k] += scale;
  std::vector<double> fv(n + 1);
  for (std::size_t k = 0; k <= n; ++k) fv[k] = f(pts[k]);
  for (int it = 0; it < iters; ++it) {
    std::vector<std::size_t> idx(n + 1);
    for (std::size_t k = 0; k <= n; ++k) idx[k] = k;
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return fv[a] < fv[b]; });
    const auto best = idx[0], worst = idx[n], second = idx[n - 1];
    std::vector<double> c(n, 0.0);
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t q = 0; q < n; ++q) c[q] += pts[idx[k]][q] / double(n);
    auto along = [&](double t) {
      std::vector<double> y(n);
      for (std::size_t q = 0; q < n; ++q) y[q] = c[q] + t * (pts[worst][q] - c[q]);
      return y;
    };
    auto r = along(-1.0);
    const double fr = f(r);
    if (fr < fv[best]) {
      auto e = along(-2.0);
      const double fe = f(e);
      if (fe < fr) { pts[worst] = e; fv[worst] = fe; }
      else { pts[worst] = r; fv[worst] = fr; }
    } else if (fr < fv[second]) {
      pts[worst] = r;
      fv[worst] = fr;
    } else {
      auto k = along(fr < fv[worst] ? -0.5 : 0.5);
      const double fk = f(k);
      if (fk < std::min(fr, fv[worst])) {
        pts[worst] = k;
        fv[worst] = fk;
      } else {
        for (std::size_t m = 0; m <= n; ++m) {
          if (m == best) continue;
          for (std::size_t q = 0; q < n; ++q) pts[m][q] = pts[best][q] + 0.5 * (pts[m][q] - pts[best][q]);
          fv[m] = f(pts[m]);
        }
      }
    }
  }
  std::size_t b = 0;
  for (std::size_t k = 1; k <= n; ++k) if (fv[k] < fv[b]) b = k;
  return pts[b];
}

// V_eps(phi, psi, h) in long double, full grid, no penalty.
inline long double full_dual(const mot::MotInstance& I, double eps, const std::vector<double>& phi,
                             const std::vector<double>& psi, const std::vector<double>& h) {
  long double v = 0;
  const std::size_t d = I.dim();
  for (std::size_t i = 0; i < I.nx(); ++i) v += (long double)I.mu.weight(i) * phi[i];
  for (std::size_t j = 0; j < I.ny(); ++j) v += (long double)I.nu.weight(j) * psi[j];
  for (std::size_t i = 0; i < I.nx(); ++i)
    for (std::size_t j = 0; j < I.ny(); ++j) {
      long double dl = (long double)phi[i] + psi[j] - I.cost_at(i, j);
      for (std::size_t q = 0; q < d; ++q) dl += (long double)h[i * d + q] * (I.nu.point(j)[q] - I.mu.point(i)[q]);
      v += eps * std::exp(-dl / eps);
    }
  return v;
}

// Implied (phi, h) for 1D rows by bisection on the martingale equation and
// the closed form for phi.
inline void implied_1d(const mot::MotInstance& I, double eps, const std::vector<double>& psi,
                       std::vector<double>& phi, std::vector<double>& h) {
  phi.assign(I.nx(), 0.0);
  h.assign(I.nx(), 0.0);
  for (std::size_t i = 0; i < I.nx(); ++i) {
    const double x = I.mu.point(i)[0];
    auto expo = [&](double hh, std::size_t j) {
      return -(psi[j] + hh * (I.nu.point(j)[0] - x) - I.cost_at(i, j)) / eps;
    };
    auto g = [&](double hh) {
      long double m = -1e300L;
      for (std::size_t j = 0; j < I.ny(); ++j) m = std::max<long double>(m, expo(hh, j));
      long double acc = 0;
      for (std::size_t j = 0; j < I.ny(); ++j) acc += (I.nu.point(j)[0] - x) * std::exp(expo(hh, j) - m);
      return acc;
    };
    double lo = -1, hi = 1;
    while (g(lo) < 0) lo *= 2;
    while (g(hi) > 0) hi *= 2;
    for (int k = 0; k < 200; ++k) {
      const double mid = 0.5 * (lo + hi);
      (g(mid) > 0 ? lo : hi) = mid;
    }
    h[i] = 0.5 * (lo + hi);
    long double acc = 0;
    for (std::size_t j = 0; j < I.ny(); ++j) acc += std::exp((long double)expo(h[i], j));
    phi[i] = eps * std::log(acc / I.mu.weight(i));
  }
}

// One full-space Newton step on V_eps + 0.5 alpha sum a psi^2 over
// (phi, psi, h) from (implied phi, psi, implied h), 1D, dense exact solve.
// Returns the new psi.
inline std::vector<double> dense_newton_step(const mot::MotInstance& I, double eps,
                                             const std::vector<double>& psi, double alpha,
                                             const std::vector<double>& a) {
  std::vector<double> phi, h;
  implied_1d(I, eps, psi, phi, h);
  const std::size_t nx = I.nx(), ny = I.ny(), n = 2 * nx + ny;
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
  for (std::size_t i = 0; i < nx; ++i) g[i] = I.mu.weight(i);
  for (std::size_t j = 0; j < ny; ++j) g[nx + j] = I.nu.weight(j) + alpha * a[j] * psi[j];
  for (std::size_t i = 0; i < nx; ++i)
    for (std::size_t j = 0; j < ny; ++j) {
      const double dy = I.nu.point(j)[0] - I.mu.point(i)[0];
      const double p = std::exp(-(phi[i] + psi[j] + h[i] * dy - I.cost_at(i, j)) / eps);
      Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
      v[i] = 1;
      v[nx + j] = 1;
      v[nx + ny + i] = dy;
      g -= p * v;
      H += (p / eps) * v * v.transpose();
    }
  for (std::size_t j = 0; j < ny; ++j) H(nx + j, nx + j) += alpha * a[j];
  const Eigen::VectorXd step = H.completeOrthogonalDecomposition().solve(g);
  std::vector<double> out(ny);
  for (std::size_t j = 0; j < ny; ++j) out[j] = psi[j] - step[nx + j];
  return out;
}

}  // namespace testutil
