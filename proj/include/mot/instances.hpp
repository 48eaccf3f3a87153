#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "mot/model.hpp"

namespace mot {

// Named experiments: left_curtain, basket2d, mixture_power, mixture_distance,
// mixture_sin. mu sits on a cell-centred grid of n points per axis over its
// domain, nu on an endpoint-inclusive grid of n + 1 points per axis over a
// domain containing mu's, with masses integrated cell by cell.
MotInstance generate_instance(const std::string& name, std::size_t n);
std::vector<std::string> experiment_names();
bool is_experiment(const std::string& name);

struct RandomInstanceOptions {
  std::size_t nx = 5;
  std::size_t ny = 7;
  CostKind cost = CostKind::kTabulated;
  double spread_to_extremes = 0.1;  // fraction of each kernel sent to the ends
};

// 1D pair in convex order by construction: nu is the y-marginal of a random
// martingale kernel with full support on the y-grid.
MotInstance random_convex_ordered(std::mt19937_64& rng, const RandomInstanceOptions& opt);

// Mixes nu with weight `contraction` in (0, 1) into the mean-preserving law on
// the two atoms around its mean. Large values leave the convex order; the
// y-grid is unchanged.
MotInstance break_convex_order(const MotInstance& inst, double contraction);

}  // namespace mot
