#include "mot/hull.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "mot/errors.hpp"

namespace mot {

namespace {

constexpr double kTinyCoefficient = 1e-12;

[[noreturn]] void outside() {
  throw HullError(HullError::Kind::kOutsideHull, "x not in the convex hull of grid.");
}

void sort_support(HullResult& r) {
  std::vector<std::size_t> order(r.support.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return r.support[a] < r.support[b]; });
  std::vector<std::size_t> s(order.size());
  std::vector<double> l(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    s[k] = r.support[order[k]];
    l[k] = r.barycentric[order[k]];
  }
  r.support = std::move(s);
  r.barycentric = std::move(l);
  for (double v : r.barycentric)
    if (v < kTinyCoefficient) r.tiny_coefficient = true;
}

}  // namespace

HullResult hull_1d(std::span<const double> grid_y, std::span<const double> f, double x,
                   const HullOptions& opt) {
  const std::size_t n = grid_y.size();
  if (n == 0 || f.size() != n) throw DomainError("hull_1d: empty grid or size mismatch");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (grid_y[a] != grid_y[b]) return grid_y[a] < grid_y[b];
    if (f[a] != f[b]) return f[a] > f[b];
    return a < b;
  });

  HullResult r;
  const double lo = grid_y[idx.front()], hi = grid_y[idx.back()];
  const double scale = 1.0 + std::max(std::abs(lo), std::abs(hi));
  if (x < lo || x > hi) {
    if (x < lo - opt.boundary_slack * scale || x > hi + opt.boundary_slack * scale)
      outside();
    x = std::clamp(x, lo, hi);
    r.near_boundary = true;
  }

  // Upper hull by the monotone chain.
  std::vector<std::size_t> up;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t b = idx[k];
    if (!up.empty() && grid_y[up.back()] == grid_y[b]) continue;
    while (up.size() >= 2) {
      const std::size_t o = up[up.size() - 2], a = up.back();
      const double cross = (grid_y[a] - grid_y[o]) * (f[b] - f[o]) -
                           (f[a] - f[o]) * (grid_y[b] - grid_y[o]);
      if (cross >= 0.0)
        up.pop_back();
      else
        break;
    }
    up.push_back(b);
  }

  auto slope = [&](std::size_t k) {
    return (f[up[k + 1]] - f[up[k]]) / (grid_y[up[k + 1]] - grid_y[up[k]]);
  };
  r.gradient.assign(1, 0.0);
  if (up.size() == 1) {
    r.value = f[up[0]];
    r.support = {up[0]};
    r.barycentric = {1.0};
    return r;
  }
  std::size_t k = 0;
  while (k + 2 < up.size() && grid_y[up[k + 1]] < x) ++k;
  const double y1 = grid_y[up[k]], y2 = grid_y[up[k + 1]];
  r.gradient[0] = slope(k);
  if (x == y1) {
    r.value = f[up[k]];
    r.support = {up[k]};
    r.barycentric = {1.0};
  } else if (x == y2) {
    r.value = f[up[k + 1]];
    r.support = {up[k + 1]};
    r.barycentric = {1.0};
  } else {
    const double l1 = (y2 - x) / (y2 - y1), l2 = (x - y1) / (y2 - y1);
    r.value = l1 * f[up[k]] + l2 * f[up[k + 1]];
    r.support = {up[k], up[k + 1]};
    r.barycentric = {l1, l2};
  }
  sort_support(r);
  return r;
}

HullResult hull_nd(std::size_t dim, std::span<const double> grid_y,
                   std::span<const double> f, std::span<const double> x_in,
                   std::optional<std::vector<double>> gradient_guess,
                   const HullOptions& opt) {
  const std::size_t d = dim;
  if (d == 0 || grid_y.size() % d != 0) throw DomainError("hull_nd: bad grid shape");
  const std::size_t n = grid_y.size() / d;
  if (n == 0 || f.size() != n || x_in.size() != d)
    throw DomainError("hull_nd: size mismatch");

  using Vec = Eigen::VectorXd;
  auto pt = [&](std::size_t k) { return Eigen::Map<const Vec>(grid_y.data() + k * d, d); };
  Vec x = Eigen::Map<const Vec>(x_in.data(), d);

  double scale = 1.0 + x.cwiseAbs().maxCoeff();
  for (double v : grid_y) scale = std::max(scale, 1.0 + std::abs(v));

  HullResult r;
  Vec grad = Vec::Zero(d);
  if (gradient_guess) {
    if (gradient_guess->size() != d) throw DomainError("hull_nd: gradient guess dimension");
    grad = Eigen::Map<const Vec>(gradient_guess->data(), d);
  }
  std::vector<double> gf(n);
  for (std::size_t k = 0; k < n; ++k) gf[k] = f[k] - grad.dot(pt(k));
  std::size_t y0 = 0;
  for (std::size_t k = 1; k < n; ++k)
    if (gf[k] > gf[y0]) y0 = k;
  const double top = gf[y0];
  for (double& v : gf) v -= top;
  gf[y0] = 0.0;

  std::vector<std::size_t> support{y0};
  std::vector<char> in_support(n, 0);
  in_support[y0] = 1;
  std::map<std::vector<std::size_t>, int> seen;
  const std::size_t cap = opt.max_iters_per_point * n;

  std::vector<double> scalar(n);
  for (std::size_t iter = 0;; ++iter) {
    if (iter >= cap)
      throw HullError(HullError::Kind::kLoopGuard, "hull_nd: iteration cap exceeded");
    r.iterations = iter + 1;
    const std::size_t k = support.size() - 1;
    const Vec s0 = pt(support[0]);
    Eigen::MatrixXd a(d, k);
    for (std::size_t c = 0; c < k; ++c) a.col(c) = pt(support[c + 1]) - s0;
    Vec coef = Vec::Zero(k);
    Vec projx = s0;
    if (k > 0) {
      Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a);
      cod.setThreshold(1e-12);
      coef = cod.solve(x - s0);
      projx = s0 + a * coef;
    }
    const Vec p = x - projx;
    const double pn = p.norm();

    bool in_aff = pn <= 1e-12 * scale;
    if (!in_aff) {
      const double thr = 1e-13 * pn * scale;
      std::size_t best = n;
      double best_ratio = -std::numeric_limits<double>::infinity();
      for (std::size_t q = 0; q < n; ++q) {
        scalar[q] = p.dot(pt(q) - projx);
        if (in_support[q] || !(scalar[q] > thr)) continue;
        const double ratio = gf[q] / scalar[q];
        if (ratio > best_ratio) {
          best_ratio = ratio;
          best = q;
        }
      }
      if (best == n) {
        if (pn > opt.boundary_slack * scale) outside();
        x = projx;
        r.near_boundary = true;
        in_aff = true;
      } else {
        const double step = -gf[best] / scalar[best];
        for (std::size_t q = 0; q < n; ++q) gf[q] += step * scalar[q];
        for (std::size_t s : support) gf[s] = 0.0;
        gf[best] = 0.0;
        grad -= step * p;
        support.push_back(best);
        in_support[best] = 1;
        auto key = support;
        std::sort(key.begin(), key.end());
        if (++seen[key] > 3)
          throw HullError(HullError::Kind::kLoopGuard, "hull_nd: support cycle detected");
        continue;
      }
    }

    std::vector<double> bary(k + 1);
    bary[0] = 1.0 - coef.sum();
    for (std::size_t c = 0; c < k; ++c) bary[c + 1] = coef[c];
    std::size_t worst = 0;
    for (std::size_t c = 1; c <= k; ++c)
      if (bary[c] < bary[worst]) worst = c;
    if (bary[worst] >= opt.bary_floor) {
      r.support = support;
      r.barycentric = bary;
      for (double& v : r.barycentric) v = std::max(v, 0.0);
      r.value = 0.0;
      for (std::size_t c = 0; c <= k; ++c) r.value += r.barycentric[c] * f[support[c]];
      r.gradient.assign(grad.data(), grad.data() + d);
      sort_support(r);
      return r;
    }
    in_support[support[worst]] = 0;
    support.erase(support.begin() + static_cast<long>(worst));
  }
}

ArgConc argconc_support(std::size_t dim, std::span<const double> grid_y,
                        std::span<const double> f, std::span<const double> x) {
  const HullResult r = dim == 1 ? hull_1d(grid_y, f, x[0])
                                : hull_nd(dim, grid_y, f, x, std::nullopt);
  return {r.support, r.barycentric};
}

double hull_domination_defect(std::size_t dim, std::span<const double> grid_y,
                              std::span<const double> f, std::span<const double> x,
                              const HullResult& r) {
  const std::size_t n = f.size();
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) {
    double aff = r.value;
    for (std::size_t q = 0; q < dim; ++q) aff += r.gradient[q] * (grid_y[k * dim + q] - x[q]);
    worst = std::max(worst, f[k] - aff);
  }
  return worst;
}

}  // namespace mot
