#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "mot/model.hpp"

namespace mot::detail {

// Cost functors indexed by (x-index, y-index). Each one reproduces
// eval_cost() bit for bit so the parallel kernels and the serial reference
// agree exactly.
struct PowerCost {
  const double* xs;
  const double* y_sq;
  double operator()(std::size_t i, std::size_t j) const { return xs[i] * y_sq[j]; }
};

struct DistanceCost {
  const double* xs;
  const double* ys;
  std::size_t dim;
  double operator()(std::size_t i, std::size_t j) const {
    double s = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
      const double t = xs[i * dim + k] - ys[j * dim + k];
      s += t * t;
    }
    return std::sqrt(s);
  }
};

struct OscillatoryCost {
  const double* xs;
  const double* ys;
  double operator()(std::size_t i, std::size_t j) const {
    return std::sin(8.0 * xs[i] * ys[j]);
  }
};

struct BasketCost {
  const double* xs;
  const double* ya;
  const double* yb;
  double operator()(std::size_t i, std::size_t j) const {
    return xs[2 * i] * ya[j] + xs[2 * i + 1] * yb[j];
  }
};

struct TableCost {
  const double* table;
  std::size_t cols;
  double operator()(std::size_t i, std::size_t j) const { return table[i * cols + j]; }
};

class CostEvaluator {
 public:
  CostEvaluator() = default;
  explicit CostEvaluator(const MotInstance& inst) : inst_(&inst) {
    const auto& ys = inst.nu.coords();
    const std::size_t ny = inst.ny();
    switch (inst.cost.kind) {
      case CostKind::kForwardStartPower:
        ya_.resize(ny);
        for (std::size_t j = 0; j < ny; ++j) ya_[j] = ys[j] * ys[j];
        break;
      case CostKind::kBasket2d:
        ya_.resize(ny);
        yb_.resize(ny);
        for (std::size_t j = 0; j < ny; ++j) {
          const double a = ys[2 * j], b = ys[2 * j + 1];
          ya_[j] = a * a + 2.0 * b * b;
          yb_[j] = 2.0 * a * a + b * b;
        }
        break;
      default:
        break;
    }
  }

  template <class F>
  decltype(auto) visit(F&& f) const {
    const MotInstance& in = *inst_;
    const double* xs = in.mu.coords().data();
    const double* ys = in.nu.coords().data();
    switch (in.cost.kind) {
      case CostKind::kForwardStartPower:
        return f(PowerCost{xs, ya_.data()});
      case CostKind::kDistance:
        return f(DistanceCost{xs, ys, in.dim()});
      case CostKind::kOscillatory:
        return f(OscillatoryCost{xs, ys});
      case CostKind::kBasket2d:
        return f(BasketCost{xs, ya_.data(), yb_.data()});
      case CostKind::kTabulated:
      default:
        return f(TableCost{in.cost.matrix.data(), in.cost.cols});
    }
  }

 private:
  const MotInstance* inst_ = nullptr;
  std::vector<double> ya_;
  std::vector<double> yb_;
};

}  // namespace mot::detail
