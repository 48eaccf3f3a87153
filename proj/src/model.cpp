#include "mot/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "mot/errors.hpp"

namespace mot {

DiscreteMeasure::DiscreteMeasure(std::size_t dim, std::vector<double> coords,
                                 std::vector<double> weights)
    : dim_(dim) {
  if (dim == 0) throw std::invalid_argument("measure dimension must be >= 1");
  if (coords.size() != dim * weights.size())
    throw std::invalid_argument("coordinate count does not match dim * size");
  const std::size_t n = weights.size();
  input_order_.resize(n);
  std::iota(input_order_.begin(), input_order_.end(), std::size_t{0});
  std::stable_sort(input_order_.begin(), input_order_.end(),
                   [&](std::size_t a, std::size_t b) {
                     return std::lexicographical_compare(
                         coords.begin() + a * dim, coords.begin() + (a + 1) * dim,
                         coords.begin() + b * dim, coords.begin() + (b + 1) * dim);
                   });
  coords_.resize(coords.size());
  weights_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t src = input_order_[i];
    std::copy_n(coords.begin() + src * dim, dim, coords_.begin() + i * dim);
    weights_[i] = weights[src];
  }
}

DiscreteMeasure DiscreteMeasure::from_points(
    const std::vector<std::vector<double>>& points,
    std::vector<double> weights) {
  if (points.empty()) throw std::invalid_argument("measure has no points");
  const std::size_t dim = points.front().size();
  std::vector<double> coords;
  coords.reserve(points.size() * dim);
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].size() != dim) {
      std::ostringstream os;
      os << "dimension mismatch at point " << i;
      throw std::invalid_argument(os.str());
    }
    coords.insert(coords.end(), points[i].begin(), points[i].end());
  }
  return DiscreteMeasure(dim, std::move(coords), std::move(weights));
}

std::vector<double> DiscreteMeasure::mean() const {
  std::vector<double> m(dim_, 0.0);
  for (std::size_t k = 0; k < dim_; ++k) {
    CompensatedSum s;
    for (std::size_t i = 0; i < size(); ++i) s.add(weights_[i] * coords_[i * dim_ + k]);
    m[k] = s.value();
  }
  return m;
}

double DiscreteMeasure::total_mass() const {
  CompensatedSum s;
  for (double w : weights_) s.add(w);
  return s.value();
}

std::string_view to_string(CostKind kind) {
  switch (kind) {
    case CostKind::kForwardStartPower: return "forward_start_power";
    case CostKind::kDistance: return "distance";
    case CostKind::kOscillatory: return "oscillatory";
    case CostKind::kBasket2d: return "basket2d";
    case CostKind::kTabulated: return "tabulated";
  }
  return "unknown";
}

CostKind cost_kind_from_string(std::string_view name) {
  for (CostKind k : {CostKind::kForwardStartPower, CostKind::kDistance,
                     CostKind::kOscillatory, CostKind::kBasket2d,
                     CostKind::kTabulated}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown cost kind: " + std::string(name));
}

CostSpec CostSpec::formula(CostKind kind) {
  if (kind == CostKind::kTabulated)
    throw std::invalid_argument("tabulated cost needs a matrix");
  CostSpec c;
  c.kind = kind;
  return c;
}

CostSpec CostSpec::tabulated(std::size_t rows, std::size_t cols,
                             std::vector<double> matrix) {
  if (matrix.size() != rows * cols)
    throw std::invalid_argument("tabulated cost: matrix size != rows * cols");
  CostSpec c;
  c.kind = CostKind::kTabulated;
  c.rows = rows;
  c.cols = cols;
  c.matrix = std::move(matrix);
  return c;
}

std::size_t CostSpec::required_dim() const {
  switch (kind) {
    case CostKind::kForwardStartPower:
    case CostKind::kOscillatory:
      return 1;
    case CostKind::kBasket2d:
      return 2;
    case CostKind::kDistance:
    case CostKind::kTabulated:
      return 0;
  }
  return 0;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

double eval_cost(const CostSpec& cost, std::span<const double> x,
                 std::span<const double> y) {
  if (x.size() != y.size()) throw DomainError("eval_cost: dimension mismatch");
  const std::size_t need = cost.required_dim();
  if (need != 0 && x.size() != need)
    throw DomainError("eval_cost: cost kind " + std::string(to_string(cost.kind)) +
                      " needs dimension " + std::to_string(need));
  switch (cost.kind) {
    case CostKind::kForwardStartPower:
      return x[0] * (y[0] * y[0]);
    case CostKind::kDistance: {
      double s = 0.0;
      for (std::size_t k = 0; k < x.size(); ++k) s += (x[k] - y[k]) * (x[k] - y[k]);
      return std::sqrt(s);
    }
    case CostKind::kOscillatory:
      return std::sin(8.0 * x[0] * y[0]);
    case CostKind::kBasket2d:
      return x[0] * (y[0] * y[0] + 2.0 * y[1] * y[1]) +
             x[1] * (2.0 * y[0] * y[0] + y[1] * y[1]);
    case CostKind::kTabulated:
      throw DomainError("eval_cost: tabulated cost needs point indices");
  }
  return 0.0;
}

double eval_cost(const CostSpec& cost, std::size_t xi, std::size_t yi,
                 std::span<const double> x, std::span<const double> y) {
  if (cost.kind != CostKind::kTabulated) return eval_cost(cost, x, y);
  if (xi >= cost.rows || yi >= cost.cols) {
    std::ostringstream os;
    os << "tabulated cost index (" << xi << ", " << yi << ") out of range "
       << cost.rows << "x" << cost.cols;
    throw IndexError(os.str());
  }
  return cost.matrix[xi * cost.cols + yi];
}

MotInstance::MotInstance(DiscreteMeasure mu_in, DiscreteMeasure nu_in,
                         CostSpec cost_in)
    : mu(std::move(mu_in)), nu(std::move(nu_in)), cost(std::move(cost_in)) {
  if (cost.kind == CostKind::kTabulated && cost.rows == mu.size() &&
      cost.cols == nu.size()) {
    const auto& px = mu.input_order();
    const auto& py = nu.input_order();
    std::vector<double> sorted(cost.matrix.size());
    for (std::size_t i = 0; i < cost.rows; ++i)
      for (std::size_t j = 0; j < cost.cols; ++j)
        sorted[i * cost.cols + j] = cost.matrix[px[i] * cost.cols + py[j]];
    cost.matrix = std::move(sorted);
  }
}

DualState DualState::zeros(std::size_t nx, std::size_t ny, std::size_t dim) {
  DualState s;
  s.dim = dim;
  s.phi.assign(nx, 0.0);
  s.psi.assign(ny, 0.0);
  s.h.assign(nx * dim, 0.0);
  return s;
}

bool DualState::finite() const {
  auto ok = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double t) { return std::isfinite(t); });
  };
  return ok(phi) && ok(psi) && ok(h);
}

std::vector<Violation> validate_measure(const DiscreteMeasure& m,
                                        std::string_view name) {
  std::vector<Violation> out;
  const std::string n(name);
  if (m.size() == 0) {
    out.push_back({"nonempty", n + " has no points", std::nullopt});
    return out;
  }
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!(m.weight(i) > 0.0)) {
      out.push_back({"positive_weight",
                     n + ": nonpositive weight at index " + std::to_string(i), i});
    }
    for (double c : m.point(i)) {
      if (!std::isfinite(c)) {
        out.push_back({"finite_point",
                       n + ": non-finite coordinate at index " + std::to_string(i), i});
        break;
      }
    }
  }
  const double mass = m.total_mass();
  if (std::abs(mass - 1.0) > 1e-12) {
    std::ostringstream os;
    os.precision(17);
    os << n << ": weights sum to " << mass << ", expected 1";
    out.push_back({"unit_mass", os.str(), std::nullopt});
  }
  // Points are sorted, so duplicates are adjacent.
  for (std::size_t i = 1; i < m.size(); ++i) {
    const auto a = m.point(i - 1);
    const auto b = m.point(i);
    if (std::equal(a.begin(), a.end(), b.begin())) {
      out.push_back({"distinct_points",
                     n + ": duplicate point at index " + std::to_string(i), i});
    }
  }
  return out;
}

std::vector<Violation> validate_instance(const MotInstance& inst) {
  std::vector<Violation> out = validate_measure(inst.mu, "mu");
  auto nu_v = validate_measure(inst.nu, "nu");
  out.insert(out.end(), nu_v.begin(), nu_v.end());
  if (inst.mu.dim() != inst.nu.dim()) {
    out.push_back({"dimension_match",
                   "dimension mismatch: mu has d=" + std::to_string(inst.mu.dim()) +
                       ", nu has d=" + std::to_string(inst.nu.dim()),
                   std::nullopt});
    return out;
  }
  const std::size_t need = inst.cost.required_dim();
  if (need != 0 && need != inst.mu.dim()) {
    out.push_back({"cost_dimension",
                   "dimension mismatch: cost " + std::string(to_string(inst.cost.kind)) +
                       " needs d=" + std::to_string(need),
                   std::nullopt});
    return out;
  }
  if (inst.cost.kind == CostKind::kTabulated) {
    if (inst.cost.rows != inst.nx() || inst.cost.cols != inst.ny()) {
      out.push_back({"cost_shape",
                     "tabulated cost shape " + std::to_string(inst.cost.rows) + "x" +
                         std::to_string(inst.cost.cols) + " != |X|x|Y| " +
                         std::to_string(inst.nx()) + "x" + std::to_string(inst.ny()),
                     std::nullopt});
      return out;
    }
  }
  for (std::size_t i = 0; i < inst.nx(); ++i) {
    for (std::size_t j = 0; j < inst.ny(); ++j) {
      if (!std::isfinite(inst.cost_at(i, j))) {
        out.push_back({"finite_cost",
                       "non-finite cost at (" + std::to_string(i) + ", " +
                           std::to_string(j) + ")",
                       i});
        return out;
      }
    }
  }
  return out;
}

std::vector<Violation> validate_dual_state(const DualState& state,
                                           const MotInstance& inst) {
  std::vector<Violation> out;
  if (state.phi.size() != inst.nx() || state.psi.size() != inst.ny() ||
      state.dim != inst.dim() || state.h.size() != inst.nx() * inst.dim()) {
    out.push_back({"dual_sizes", "dual state sizes do not match the instance",
                   std::nullopt});
  }
  if (!state.finite())
    out.push_back({"dual_finite", "dual state has non-finite entries", std::nullopt});
  return out;
}

namespace {

double call_price(const DiscreteMeasure& m, double strike) {
  CompensatedSum s;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double v = m.point(i)[0] - strike;
    if (v > 0.0) s.add(m.weight(i) * v);
  }
  return s.value();
}

}  // namespace

ConvexOrderResult check_convex_order_1d(const DiscreteMeasure& mu,
                                        const DiscreteMeasure& nu, double tol) {
  if (mu.dim() != 1 || nu.dim() != 1)
    throw UnsupportedDimensionError(
        "check_convex_order_1d: only dimension 1 is supported; use the LP "
        "feasibility test in higher dimension");
  ConvexOrderResult r;
  const double m_mu = mu.mean()[0];
  const double m_nu = nu.mean()[0];
  r.mean_gap = m_mu - m_nu;
  const bool means_ok = std::abs(r.mean_gap) <= tol * (1.0 + std::abs(m_mu));

  std::vector<double> strikes;
  strikes.reserve(mu.size() + nu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) strikes.push_back(mu.point(i)[0]);
  for (std::size_t i = 0; i < nu.size(); ++i) strikes.push_back(nu.point(i)[0]);
  std::sort(strikes.begin(), strikes.end());
  strikes.erase(std::unique(strikes.begin(), strikes.end()), strikes.end());

  r.worst_violation = -std::numeric_limits<double>::infinity();
  for (double k : strikes) {
    const double v = call_price(mu, k) - call_price(nu, k);
    if (v > r.worst_violation) {
      r.worst_violation = v;
      r.worst_strike = k;
    }
  }
  r.ordered = means_ok && r.worst_violation <= tol;
  return r;
}

}  // namespace mot
