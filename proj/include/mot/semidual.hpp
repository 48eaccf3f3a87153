#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "mot/model.hpp"

namespace mot {

enum class DominatorMode { kConcaveHull, kSup };

// phi_bar(x) = envelope of c(x, .) - psi over the whole Y grid, at x.
// warm_h (nx * dim) seeds the hull gradients in dimension >= 2.
std::vector<double> phi_bar(const MotInstance& inst, std::span<const double> psi,
                            DominatorMode mode, std::span<const double> warm_h = {});

struct SemidualIterate {
  std::vector<double> psi;
  double value = 0.0;
  // nu - sum_x mu_x sum_i lambda_i(x) delta_{y_i(x)}; a true subgradient of V.
  std::vector<double> subgradient;
  long n = 0;
  std::vector<double> hull_gradients;  // nx * dim
};

SemidualIterate semidual_value_and_subgradient(const MotInstance& inst,
                                               std::span<const double> psi,
                                               std::span<const double> warm_gradients = {});

struct SubgradientSteps {
  double c0 = 1.0;
  long n_max = 1000;
  double tol = 0.0;  // stop when |subgradient|_1 <= tol
};

struct SubgradientRecord {
  long n = 0;
  double value = 0.0;
  double subgrad_norm1 = 0.0;
  double seconds = 0.0;
};

struct SubgradientResult {
  SemidualIterate best;
  std::vector<SubgradientRecord> log;
  void write_csv(std::ostream& os) const;
};

SubgradientResult run_subgradient_descent(const MotInstance& inst,
                                          std::span<const double> psi0,
                                          const SubgradientSteps& steps);

}  // namespace mot
