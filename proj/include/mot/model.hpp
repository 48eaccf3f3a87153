#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mot {

// Finitely supported measure on R^d. Points are kept sorted lexicographically
// and every per-point array in the library shares that ordering.
class DiscreteMeasure {
 public:
  DiscreteMeasure() = default;

  // coords is row-major (size() * dim). Sorts points; does not validate
  // weights (see validate_instance).
  DiscreteMeasure(std::size_t dim, std::vector<double> coords,
                  std::vector<double> weights);

  static DiscreteMeasure from_points(
      const std::vector<std::vector<double>>& points,
      std::vector<double> weights);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return weights_.size(); }
  std::span<const double> point(std::size_t i) const {
    return {coords_.data() + i * dim_, dim_};
  }
  double weight(std::size_t i) const { return weights_[i]; }
  const std::vector<double>& coords() const { return coords_; }
  const std::vector<double>& weights() const { return weights_; }

  // input_order()[i] is the position of sorted point i in the constructor
  // input.
  const std::vector<std::size_t>& input_order() const { return input_order_; }

  std::vector<double> mean() const;
  double total_mass() const;

 private:
  std::size_t dim_ = 0;
  std::vector<double> coords_;
  std::vector<double> weights_;
  std::vector<std::size_t> input_order_;
};

enum class CostKind {
  kForwardStartPower,  // x * y^2, d = 1
  kDistance,           // |x - y| (Euclidean), any d
  kOscillatory,        // sin(8 x y), d = 1
  kBasket2d,           // x1 (y1^2 + 2 y2^2) + x2 (2 y1^2 + y2^2), d = 2
  kTabulated,          // dense |X| x |Y| matrix
};

std::string_view to_string(CostKind kind);
CostKind cost_kind_from_string(std::string_view name);

struct CostSpec {
  CostKind kind = CostKind::kForwardStartPower;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> matrix;  // row-major, rows = x-index

  static CostSpec formula(CostKind kind);
  static CostSpec tabulated(std::size_t rows, std::size_t cols,
                            std::vector<double> matrix);

  // 0 when the kind accepts any dimension.
  std::size_t required_dim() const;
};

// Formula costs only; tabulated costs need indices.
double eval_cost(const CostSpec& cost, std::span<const double> x,
                 std::span<const double> y);
double eval_cost(const CostSpec& cost, std::size_t xi, std::size_t yi,
                 std::span<const double> x, std::span<const double> y);

// The tabulated matrix of a MotInstance is stored in sorted point order; the
// constructor permutes a matrix given in the measures' input order.
struct MotInstance {
  DiscreteMeasure mu;
  DiscreteMeasure nu;
  CostSpec cost;

  MotInstance() = default;
  MotInstance(DiscreteMeasure mu, DiscreteMeasure nu, CostSpec cost);

  std::size_t dim() const { return mu.dim(); }
  std::size_t nx() const { return mu.size(); }
  std::size_t ny() const { return nu.size(); }
  double cost_at(std::size_t xi, std::size_t yi) const {
    return eval_cost(cost, xi, yi, mu.point(xi), nu.point(yi));
  }
};

struct DualState {
  std::size_t dim = 0;
  std::vector<double> phi;  // per x
  std::vector<double> psi;  // per y
  std::vector<double> h;    // per x, dim entries each

  static DualState zeros(std::size_t nx, std::size_t ny, std::size_t dim);

  std::size_t nx() const { return phi.size(); }
  std::size_t ny() const { return psi.size(); }
  std::span<double> h_at(std::size_t i) { return {h.data() + i * dim, dim}; }
  std::span<const double> h_at(std::size_t i) const {
    return {h.data() + i * dim, dim};
  }
  bool finite() const;
};

struct Violation {
  std::string invariant;
  std::string message;
  std::optional<std::size_t> index;
};

std::vector<Violation> validate_measure(const DiscreteMeasure& m,
                                        std::string_view name);
std::vector<Violation> validate_instance(const MotInstance& inst);
std::vector<Violation> validate_dual_state(const DualState& state,
                                           const MotInstance& inst);

struct ConvexOrderResult {
  bool ordered = false;
  double worst_violation = 0.0;  // max over strikes of mu-call - nu-call
  double worst_strike = 0.0;
  double mean_gap = 0.0;
};

// Call-payoff test at every support strike plus mean equality (1D only).
ConvexOrderResult check_convex_order_1d(const DiscreteMeasure& mu,
                                        const DiscreteMeasure& nu,
                                        double tol = 1e-10);

// Sum with Neumaier compensation; used for every scalar reduction whose value
// is monitored for monotonicity.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v))
      comp_ += (sum_ - t) + v;
    else
      comp_ += (v - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

double dot(std::span<const double> a, std::span<const double> b);

}  // namespace mot
