#include "mot/instances.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>

#include "mot/errors.hpp"

namespace mot {

namespace {

// Antiderivative of |y|^1.5.
double pow15_integral(double y) { return std::copysign(std::pow(std::abs(y), 2.5) / 2.5, y); }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// P(exp(Z) - 1 <= t), Z ~ N(-s^2/2, s^2).
double lognormal_cdf(double t, double s) {
  if (t <= -1.0) return 0.0;
  return normal_cdf((std::log1p(t) + 0.5 * s * s) / s);
}

struct Interval {
  double lo, hi;
};

Interval lognormal_range(double s) {
  return {std::exp(-0.5 * s * s - 6.0 * s) - 1.0, std::exp(-0.5 * s * s + 6.0 * s) - 1.0};
}

std::vector<double> cell_centred(Interval dom, std::size_t n) {
  std::vector<double> g(n);
  const double h = (dom.hi - dom.lo) / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = dom.lo + (static_cast<double>(i) + 0.5) * h;
  return g;
}

std::vector<double> endpoint_grid(Interval dom, std::size_t n) {
  std::vector<double> g(n + 1);
  const double h = (dom.hi - dom.lo) / static_cast<double>(n);
  for (std::size_t i = 0; i <= n; ++i) g[i] = dom.lo + static_cast<double>(i) * h;
  g[n] = dom.hi;
  return g;
}

// Cells [g_i - h/2, g_i + h/2] clipped to the domain.
std::vector<Interval> cells(const std::vector<double>& g, Interval dom) {
  const double h = g.size() > 1 ? g[1] - g[0] : dom.hi - dom.lo;
  std::vector<Interval> c(g.size());
  for (std::size_t i = 0; i < g.size(); ++i)
    c[i] = {std::max(dom.lo, g[i] - 0.5 * h), std::min(dom.hi, g[i] + 0.5 * h)};
  return c;
}

// Cell masses of a 1D law given by its cumulative function, renormalized.
std::vector<double> masses(const std::vector<Interval>& c,
                           const std::function<double(double)>& cdf) {
  std::vector<double> w(c.size());
  double total = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    w[i] = cdf(c[i].hi) - cdf(c[i].lo);
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

MotInstance left_curtain(std::size_t n) {
  const Interval dom{-1.0, 1.0};
  const auto xs = cell_centred(dom, n);
  const auto ys = endpoint_grid(dom, n);
  std::vector<double> wx(n, 1.0 / static_cast<double>(n));
  const auto wy = masses(cells(ys, dom), pow15_integral);
  return MotInstance(DiscreteMeasure(1, xs, wx), DiscreteMeasure(1, ys, wy),
                     CostSpec::formula(CostKind::kForwardStartPower));
}

MotInstance basket(std::size_t n) {
  const Interval dom{-1.0, 1.0};
  const auto g = cell_centred(dom, n);
  const auto e = endpoint_grid(dom, n);
  const auto ce = cells(e, dom);
  std::vector<double> xs, wx, ys, wy;
  for (double a : g)
    for (double b : g) {
      xs.push_back(a);
      xs.push_back(b);
      wx.push_back(1.0 / static_cast<double>(n * n));
    }
  double total = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i)
    for (std::size_t j = 0; j < e.size(); ++j) {
      ys.push_back(e[i]);
      ys.push_back(e[j]);
      const double l1 = ce[i].hi - ce[i].lo, l2 = ce[j].hi - ce[j].lo;
      const double m = (pow15_integral(ce[i].hi) - pow15_integral(ce[i].lo)) * l2 +
                       l1 * (pow15_integral(ce[j].hi) - pow15_integral(ce[j].lo));
      wy.push_back(m);
      total += m;
    }
  for (double& v : wy) v /= total;
  return MotInstance(DiscreteMeasure(2, xs, wx), DiscreteMeasure(2, ys, wy),
                     CostSpec::formula(CostKind::kBasket2d));
}

MotInstance mixture(std::size_t n, CostKind kind) {
  constexpr double s1 = 0.1, s2 = 0.2;
  const Interval r1 = lognormal_range(s1), r2 = lognormal_range(s2);
  const Interval dx{std::min(-1.0, r1.lo), std::max(1.0, r1.hi)};
  const Interval dy{std::min(dx.lo, r2.lo), std::max(dx.hi, r2.hi)};
  auto uniform_cdf = [](double t) { return std::clamp(0.5 * (t + 1.0), 0.0, 1.0); };
  auto pow_cdf = [](double t) {
    const double c = std::clamp(t, -1.0, 1.0);
    return (pow15_integral(c) + 0.4) / 0.8;
  };
  auto leg = [](double s, Interval r) {
    const double lo = lognormal_cdf(r.lo, s), hi = lognormal_cdf(r.hi, s);
    return [=](double t) {
      return (std::clamp(lognormal_cdf(t, s), lo, hi) - lo) / (hi - lo);
    };
  };
  const auto xs = cell_centred(dx, n);
  const auto ys = endpoint_grid(dy, n);
  const auto l1 = leg(s1, r1), l2 = leg(s2, r2);
  const auto wx = masses(cells(xs, dx), [&](double t) { return 0.5 * (uniform_cdf(t) + l1(t)); });
  const auto wy = masses(cells(ys, dy), [&](double t) { return 0.5 * (pow_cdf(t) + l2(t)); });
  return MotInstance(DiscreteMeasure(1, xs, wx), DiscreteMeasure(1, ys, wy),
                     CostSpec::formula(kind));
}

}  // namespace

std::vector<std::string> experiment_names() {
  return {"left_curtain", "basket2d", "mixture_power", "mixture_distance", "mixture_sin"};
}

bool is_experiment(const std::string& name) {
  const auto names = experiment_names();
  return std::find(names.begin(), names.end(), name) != names.end();
}

MotInstance generate_instance(const std::string& name, std::size_t n) {
  if (n < 2) throw DomainError("generate_instance: grid size must be >= 2");
  if (name == "left_curtain") return left_curtain(n);
  if (name == "basket2d") return basket(n);
  if (name == "mixture_power") return mixture(n, CostKind::kForwardStartPower);
  if (name == "mixture_distance") return mixture(n, CostKind::kDistance);
  if (name == "mixture_sin") return mixture(n, CostKind::kOscillatory);
  throw DomainError("generate_instance: unknown experiment '" + name + "'");
}

MotInstance random_convex_ordered(std::mt19937_64& rng, const RandomInstanceOptions& opt) {
  if (opt.nx < 1 || opt.ny < 3) throw DomainError("random_convex_ordered: grid too small");
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  // y-grid: sorted distinct points in [-1, 1] including both ends.
  std::vector<double> ys{-1.0, 1.0};
  while (ys.size() < opt.ny) {
    const double v = -1.0 + 2.0 * unif(rng);
    if (std::all_of(ys.begin(), ys.end(), [&](double u) { return std::abs(u - v) > 1e-3; }))
      ys.push_back(v);
  }
  std::sort(ys.begin(), ys.end());
  std::vector<double> xs;
  while (xs.size() < opt.nx) {
    const double v = -0.8 + 1.6 * unif(rng);
    if (std::all_of(xs.begin(), xs.end(), [&](double u) { return std::abs(u - v) > 1e-3; }))
      xs.push_back(v);
  }
  std::vector<double> wx(opt.nx);
  double tot = 0.0;
  for (double& w : wx) tot += (w = 0.2 + unif(rng));
  for (double& w : wx) w /= tot;

  // Each kernel: random weights on Y, recentred at x by mixing with the
  // extreme point on the far side, then blended with the two-point law on
  // the ends.
  std::vector<double> wy(opt.ny, 0.0);
  const double y0 = ys.front(), y1 = ys.back();
  for (std::size_t i = 0; i < opt.nx; ++i) {
    const double x = xs[i];
    std::vector<double> k(opt.ny);
    double s = 0.0, m = 0.0;
    for (std::size_t j = 0; j < opt.ny; ++j) {
      k[j] = 0.05 + unif(rng);
      s += k[j];
    }
    for (std::size_t j = 0; j < opt.ny; ++j) {
      k[j] /= s;
      m += k[j] * ys[j];
    }
    if (m > x) {
      const double t = (x - y0) / (m - y0);
      for (double& v : k) v *= t;
      k.front() += 1.0 - t;
    } else if (m < x) {
      const double t = (y1 - x) / (y1 - m);
      for (double& v : k) v *= t;
      k.back() += 1.0 - t;
    }
    const double th = opt.spread_to_extremes;
    for (double& v : k) v *= 1.0 - th;
    k.front() += th * (y1 - x) / (y1 - y0);
    k.back() += th * (x - y0) / (y1 - y0);
    for (std::size_t j = 0; j < opt.ny; ++j) wy[j] += wx[i] * k[j];
  }
  double sy = 0.0;
  for (double v : wy) sy += v;
  for (double& v : wy) v /= sy;

  CostSpec cost;
  if (opt.cost == CostKind::kTabulated) {
    std::vector<double> mat(opt.nx * opt.ny);
    for (double& v : mat) v = -1.0 + 2.0 * unif(rng);
    cost = CostSpec::tabulated(opt.nx, opt.ny, std::move(mat));
  } else {
    cost = CostSpec::formula(opt.cost);
  }
  return MotInstance(DiscreteMeasure(1, xs, wx), DiscreteMeasure(1, ys, wy), cost);
}

MotInstance break_convex_order(const MotInstance& inst, double contraction) {
  if (!(contraction > 0.0 && contraction < 1.0))
    throw DomainError("break_convex_order: contraction must lie in (0, 1)");
  const std::size_t ny = inst.ny();
  const double mean = inst.nu.mean()[0];
  // Mix nu with the two-point law on the atoms bracketing its mean.
  std::size_t lo = 0;
  while (lo + 2 < ny && inst.nu.point(lo + 1)[0] <= mean) ++lo;
  const double ya = inst.nu.point(lo)[0], yb = inst.nu.point(lo + 1)[0];
  std::vector<double> w(ny);
  for (std::size_t j = 0; j < ny; ++j) w[j] = (1.0 - contraction) * inst.nu.weight(j);
  w[lo] += contraction * (yb - mean) / (yb - ya);
  w[lo + 1] += contraction * (mean - ya) / (yb - ya);
  MotInstance out;
  out.mu = inst.mu;
  out.nu = DiscreteMeasure(1, inst.nu.coords(), std::move(w));
  out.cost = inst.cost;
  return out;
}

}  // namespace mot
