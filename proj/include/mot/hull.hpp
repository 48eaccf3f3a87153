#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace mot {

struct HullResult {
  double value = 0.0;
  std::vector<std::size_t> support;
  std::vector<double> barycentric;
  std::vector<double> gradient;
  // x was accepted within the boundary slack of the grid hull.
  bool near_boundary = false;
  // Some barycentric coefficient is below 1e-12.
  bool tiny_coefficient = false;
  std::size_t iterations = 0;
};

struct HullOptions {
  double boundary_slack = 1e-9;
  double bary_floor = -1e-12;
  std::size_t max_iters_per_point = 50;
};

// Concave envelope of f sampled on a 1D grid, evaluated at x. The grid need
// not be sorted; ties in y keep the larger f.
HullResult hull_1d(std::span<const double> grid_y, std::span<const double> f, double x,
                   const HullOptions& opt = {});

// Concave envelope in any dimension by the support-tilting procedure. grid_y
// is row-major (|grid| * dim). Throws HullError.
HullResult hull_nd(std::size_t dim, std::span<const double> grid_y,
                   std::span<const double> f, std::span<const double> x,
                   std::optional<std::vector<double>> gradient_guess,
                   const HullOptions& opt = {});

struct ArgConc {
  std::vector<std::size_t> support;
  std::vector<double> barycentric;
};

// Contact set of the concave envelope at x; 1D grids use hull_1d.
ArgConc argconc_support(std::size_t dim, std::span<const double> grid_y,
                        std::span<const double> f, std::span<const double> x);

// Max over grid points of f(y) - (value + gradient . (y - x)); nonpositive for
// a valid certificate.
double hull_domination_defect(std::size_t dim, std::span<const double> grid_y,
                              std::span<const double> f, std::span<const double> x,
                              const HullResult& r);

}  // namespace mot
