#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

namespace testutil {

// Exhaustive oracle in 2D: best barycentric combination over all supports of
// size <= 3 that contain x.
inline double brute_hull_2d(const std::vector<double>& g, const std::vector<double>& f,
                            const std::vector<double>& x) {
  const std::size_t n = f.size();
  double best = -1e300;
  auto px = [&](std::size_t i) { return Eigen::Vector2d(g[2 * i], g[2 * i + 1]); };
  const Eigen::Vector2d X(x[0], x[1]);
  for (std::size_t a = 0; a < n; ++a) {
    if ((px(a) - X).norm() < 1e-12) best = std::max(best, f[a]);
    for (std::size_t b = a + 1; b < n; ++b) {
      const Eigen::Vector2d u = px(b) - px(a), v = X - px(a);
      const double cr = u.x() * v.y() - u.y() * v.x();
      if (std::abs(cr) < 1e-12) {
        const double t = u.dot(v) / u.squaredNorm();
        if (t >= -1e-12 && t <= 1 + 1e-12) best = std::max(best, (1 - t) * f[a] + t * f[b]);
      }
      for (std::size_t c = b + 1; c < n; ++c) {
        Eigen::Matrix3d m;
        m << 1, 1, 1, px(a).x(), px(b).x(), px(c).x(), px(a).y(), px(b).y(), px(c).y();
        if (std::abs(m.determinant()) < 1e-12) continue;
        const Eigen::Vector3d l = m.partialPivLu().solve(Eigen::Vector3d(1, X.x(), X.y()));
        if (l.minCoeff() < -1e-12) continue;
        best = std::max(best, l[0] * f[a] + l[1] * f[b] + l[2] * f[c]);
      }
    }
  }
  return best;
}

}  // namespace testutil
