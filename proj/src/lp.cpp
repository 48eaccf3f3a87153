#include "mot/lp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mot/errors.hpp"

namespace mot {

namespace {

constexpr double kPivotTol = 1e-11;
constexpr double kCostTol = 1e-10;

// Dense tableau for min c.x s.t. A x = b, x >= 0, with b >= 0.
class Tableau {
 public:
  Tableau(std::size_t m, std::size_t n) : m_(m), n_(n), t_((m + 1) * (n + m + 1), 0.0) {}

  double& a(std::size_t r, std::size_t c) { return t_[r * width() + c]; }
  double& rhs(std::size_t r) { return t_[r * width() + width() - 1]; }
  std::size_t width() const { return n_ + m_ + 1; }
  std::size_t rows() const { return m_; }
  std::vector<std::size_t>& basis() { return basis_; }

  void pivot(std::size_t pr, std::size_t pc) {
    const std::size_t w = width();
    double* prow = &t_[pr * w];
    const double inv = 1.0 / prow[pc];
    for (std::size_t c = 0; c < w; ++c) prow[c] *= inv;
    prow[pc] = 1.0;
    for (std::size_t r = 0; r <= m_; ++r) {
      if (r == pr) continue;
      double* row = &t_[r * w];
      const double f = row[pc];
      if (f == 0.0) continue;
      for (std::size_t c = 0; c < w; ++c) row[c] -= f * prow[c];
      row[pc] = 0.0;
    }
    basis_[pr] = pc;
  }

  // Objective row m_ holds reduced costs; minimizes over columns < ncols.
  // Returns false on pivot limit.
  bool run(std::size_t ncols, long& pivots, long max_pivots) {
    const std::size_t w = width();
    while (true) {
      std::size_t enter = ncols;
      for (std::size_t c = 0; c < ncols; ++c) {
        if (t_[m_ * w + c] < -kCostTol) {
          enter = c;
          break;
        }
      }
      if (enter == ncols) return true;
      std::size_t leave = m_;
      double best = 0.0;
      for (std::size_t r = 0; r < m_; ++r) {
        const double v = t_[r * w + enter];
        if (v <= kPivotTol) continue;
        const double ratio = t_[r * w + w - 1] / v;
        if (leave == m_ || ratio < best - 1e-15 ||
            (std::abs(ratio - best) <= 1e-15 && basis_[r] < basis_[leave])) {
          leave = r;
          best = ratio;
        }
      }
      if (leave == m_) return true;  // unbounded direction; cannot occur here
      pivot(leave, enter);
      if (++pivots >= max_pivots) return false;
    }
  }

 private:
  std::size_t m_, n_;
  std::vector<double> t_;
  std::vector<std::size_t> basis_ = std::vector<std::size_t>(m_);
};

struct LpResult {
  LpStatus status;
  std::vector<double> x;
  long pivots = 0;
};

// Two-phase simplex on min c.x, A x = b, x >= 0 (A is m x n row-major).
LpResult simplex(std::vector<double> A, std::vector<double> b, const std::vector<double>& c,
                 std::size_t m, std::size_t n, bool phase_one_only, const LpOptions& opt) {
  for (std::size_t r = 0; r < m; ++r) {
    if (b[r] < 0.0) {
      b[r] = -b[r];
      for (std::size_t k = 0; k < n; ++k) A[r * n + k] = -A[r * n + k];
    }
  }
  Tableau tab(m, n);
  const std::size_t w = tab.width();
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t k = 0; k < n; ++k) tab.a(r, k) = A[r * n + k];
    tab.a(r, n + r) = 1.0;
    tab.rhs(r) = b[r];
    tab.basis()[r] = n + r;
  }
  // Phase one objective: minimize the sum of artificials.
  for (std::size_t k = 0; k < w; ++k) {
    double s = 0.0;
    for (std::size_t r = 0; r < m; ++r) s += tab.a(r, k);
    tab.a(m, k) = (k >= n && k < n + m) ? 0.0 : -s;
  }
  LpResult res;
  if (!tab.run(n, res.pivots, opt.max_pivots)) {
    res.status = LpStatus::kIterationLimit;
    return res;
  }
  double bscale = 1.0;
  for (double v : b) bscale = std::max(bscale, std::abs(v));
  if (-tab.rhs(m) > opt.feasibility_tol * bscale) {
    res.status = LpStatus::kInfeasible;
    return res;
  }
  // Drive remaining artificials out of the basis.
  std::vector<char> redundant(m, 0);
  for (std::size_t r = 0; r < m; ++r) {
    if (tab.basis()[r] < n) continue;
    std::size_t col = n;
    for (std::size_t k = 0; k < n; ++k) {
      if (std::abs(tab.a(r, k)) > 1e-9) {
        col = k;
        break;
      }
    }
    if (col == n)
      redundant[r] = 1;
    else
      tab.pivot(r, col);
  }
  if (!phase_one_only) {
    // Artificial columns are frozen by zeroing them in non-redundant rows.
    for (std::size_t r = 0; r < m; ++r) {
      if (redundant[r]) {
        for (std::size_t k = 0; k < w; ++k) tab.a(r, k) = 0.0;
        continue;
      }
      for (std::size_t k = n; k < n + m; ++k) tab.a(r, k) = 0.0;
    }
    for (std::size_t k = 0; k < w; ++k) tab.a(m, k) = k < n ? c[k] : 0.0;
    for (std::size_t r = 0; r < m; ++r) {
      const std::size_t bc = tab.basis()[r];
      if (redundant[r] || bc >= n) continue;
      const double f = tab.a(m, bc);
      if (f == 0.0) continue;
      for (std::size_t k = 0; k < w; ++k) tab.a(m, k) -= f * tab.a(r, k);
    }
    if (!tab.run(n, res.pivots, opt.max_pivots)) {
      res.status = LpStatus::kIterationLimit;
      return res;
    }
  }
  res.x.assign(n, 0.0);
  for (std::size_t r = 0; r < m; ++r)
    if (!redundant[r] && tab.basis()[r] < n) res.x[tab.basis()[r]] = std::max(tab.rhs(r), 0.0);
  res.status = LpStatus::kOptimal;
  return res;
}

void build_constraints(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                       std::vector<double>& A, std::vector<double>& b, std::size_t& m,
                       std::size_t& n) {
  const std::size_t nx = mu.size(), ny = nu.size(), d = mu.dim();
  n = nx * ny;
  m = nx * (1 + d) + ny - 1;
  A.assign(m * n, 0.0);
  b.assign(m, 0.0);
  std::size_t r = 0;
  for (std::size_t i = 0; i < nx; ++i, ++r) {
    for (std::size_t j = 0; j < ny; ++j) A[r * n + i * ny + j] = 1.0;
    b[r] = mu.weight(i);
  }
  for (std::size_t i = 0; i < nx; ++i) {
    const auto x = mu.point(i);
    for (std::size_t q = 0; q < d; ++q, ++r)
      for (std::size_t j = 0; j < ny; ++j) A[r * n + i * ny + j] = nu.point(j)[q] - x[q];
  }
  for (std::size_t j = 0; j + 1 < ny; ++j, ++r) {
    for (std::size_t i = 0; i < nx; ++i) A[r * n + i * ny + j] = 1.0;
    b[r] = nu.weight(j);
  }
}

void check_size(std::size_t nx, std::size_t ny, const LpOptions& opt) {
  if (nx * ny > opt.max_variables) {
    std::ostringstream os;
    os << "LP oracle refuses |X||Y| = " << nx * ny << " > " << opt.max_variables;
    throw DomainError(os.str());
  }
}

}  // namespace

std::string_view to_string(LpStatus s) {
  switch (s) {
    case LpStatus::kOptimal:
      return "optimal";
    case LpStatus::kInfeasible:
      return "infeasible";
    case LpStatus::kIterationLimit:
      return "iteration_limit";
  }
  return "unknown";
}

LpSolution solve_mot_lp(const MotInstance& inst, const LpOptions& opt) {
  check_size(inst.nx(), inst.ny(), opt);
  if (inst.mu.dim() != inst.nu.dim()) throw DomainError("LP oracle: dimension mismatch");
  std::vector<double> A, b;
  std::size_t m = 0, n = 0;
  build_constraints(inst.mu, inst.nu, A, b, m, n);
  std::vector<double> c(n);
  for (std::size_t i = 0; i < inst.nx(); ++i)
    for (std::size_t j = 0; j < inst.ny(); ++j) c[i * inst.ny() + j] = -inst.cost_at(i, j);
  const auto r = simplex(std::move(A), std::move(b), c, m, n, false, opt);
  LpSolution sol;
  sol.status = r.status;
  sol.pivots = r.pivots;
  if (r.status == LpStatus::kOptimal) {
    sol.coupling = r.x;
    CompensatedSum v;
    for (std::size_t k = 0; k < n; ++k) v.add(r.x[k] * -c[k]);
    sol.value = v.value();
  }
  return sol;
}

bool feasible_martingale(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                         const LpOptions& opt) {
  check_size(mu.size(), nu.size(), opt);
  if (mu.dim() != nu.dim()) throw DomainError("feasible_martingale: dimension mismatch");
  std::vector<double> A, b;
  std::size_t m = 0, n = 0;
  build_constraints(mu, nu, A, b, m, n);
  const auto r = simplex(std::move(A), std::move(b), std::vector<double>(n, 0.0), m, n, true, opt);
  return r.status == LpStatus::kOptimal;
}

double coupling_residual(const MotInstance& inst, const std::vector<double>& coupling) {
  const std::size_t nx = inst.nx(), ny = inst.ny(), d = inst.dim();
  double worst = 0.0;
  for (std::size_t i = 0; i < nx; ++i) {
    double s = 0.0;
    std::vector<double> mart(d, 0.0);
    const auto x = inst.mu.point(i);
    for (std::size_t j = 0; j < ny; ++j) {
      const double p = coupling[i * ny + j];
      s += p;
      for (std::size_t q = 0; q < d; ++q) mart[q] += p * (inst.nu.point(j)[q] - x[q]);
    }
    worst = std::max(worst, std::abs(s - inst.mu.weight(i)));
    for (double v : mart) worst = std::max(worst, std::abs(v));
  }
  for (std::size_t j = 0; j < ny; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < nx; ++i) s += coupling[i * ny + j];
    worst = std::max(worst, std::abs(s - inst.nu.weight(j)));
  }
  return worst;
}

}  // namespace mot
