#include "mot/semidual.hpp"

#include <chrono>
#include <cmath>
#include <exception>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "mot/detail/cost_eval.hpp"
#include "mot/errors.hpp"
#include "mot/hull.hpp"

namespace mot {

namespace {

struct RowHull {
  double value = 0.0;
  std::vector<std::size_t> support;
  std::vector<double> bary;
  std::vector<double> gradient;
};

// Envelope of c(x_i, .) - psi at x_i for every i, in parallel; errors carry the
// smallest failing x-index.
std::vector<RowHull> row_hulls(const MotInstance& inst, std::span<const double> psi,
                               DominatorMode mode, std::span<const double> warm) {
  const std::size_t nx = inst.nx(), ny = inst.ny(), d = inst.dim();
  detail::CostEvaluator ce(inst);
  std::vector<RowHull> out(nx);
  std::vector<std::exception_ptr> errs(nx);
  bool failed = false;
  const auto& ys = inst.nu.coords();
  ce.visit([&](const auto& cost) {
#pragma omp parallel
    {
      std::vector<double> f(ny);
#pragma omp for schedule(dynamic, 4)
      for (long li = 0; li < static_cast<long>(nx); ++li) {
        const std::size_t i = static_cast<std::size_t>(li);
        try {
          for (std::size_t j = 0; j < ny; ++j) f[j] = cost(i, j) - psi[j];
          RowHull& rh = out[i];
          if (mode == DominatorMode::kSup) {
            std::size_t best = 0;
            for (std::size_t j = 1; j < ny; ++j)
              if (f[j] > f[best]) best = j;
            rh.value = f[best];
            rh.support = {best};
            rh.bary = {1.0};
            rh.gradient.assign(d, 0.0);
            continue;
          }
          const auto x = inst.mu.point(i);
          HullResult r;
          if (d == 1) {
            r = hull_1d(ys, f, x[0]);
          } else {
            std::optional<std::vector<double>> guess;
            if (!warm.empty()) guess = std::vector<double>(warm.begin() + i * d, warm.begin() + (i + 1) * d);
            r = hull_nd(d, ys, f, x, guess);
          }
          rh.value = r.value;
          rh.support = std::move(r.support);
          rh.bary = std::move(r.barycentric);
          rh.gradient = std::move(r.gradient);
        } catch (const HullError& e) {
          std::ostringstream os;
          os << "x-index " << i << ": " << e.what();
#pragma omp critical(mot_semidual_err)
          {
            errs[i] = std::make_exception_ptr(InfeasibleMartingaleError(i, os.str()));
            failed = true;
          }
        }
      }
    }
  });
  if (failed)
    for (auto& e : errs)
      if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace

std::vector<double> phi_bar(const MotInstance& inst, std::span<const double> psi,
                            DominatorMode mode, std::span<const double> warm_h) {
  const auto rows = row_hulls(inst, psi, mode, warm_h);
  std::vector<double> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = rows[i].value;
  return out;
}

SemidualIterate semidual_value_and_subgradient(const MotInstance& inst,
                                               std::span<const double> psi,
                                               std::span<const double> warm_gradients) {
  const std::size_t nx = inst.nx(), ny = inst.ny(), d = inst.dim();
  const auto rows = row_hulls(inst, psi, DominatorMode::kConcaveHull, warm_gradients);
  SemidualIterate it;
  it.psi.assign(psi.begin(), psi.end());
  it.subgradient.assign(ny, 0.0);
  it.hull_gradients.assign(nx * d, 0.0);
  CompensatedSum v;
  for (std::size_t i = 0; i < nx; ++i) {
    const double mu_i = inst.mu.weight(i);
    v.add(mu_i * rows[i].value);
    for (std::size_t k = 0; k < rows[i].support.size(); ++k)
      it.subgradient[rows[i].support[k]] -= mu_i * rows[i].bary[k];
    for (std::size_t q = 0; q < d; ++q) it.hull_gradients[i * d + q] = rows[i].gradient[q];
  }
  for (std::size_t j = 0; j < ny; ++j) {
    v.add(inst.nu.weight(j) * psi[j]);
    it.subgradient[j] += inst.nu.weight(j);
  }
  it.value = v.value();
  return it;
}

void SubgradientResult::write_csv(std::ostream& os) const {
  os << "n,value,subgrad_norm1,seconds\n" << std::setprecision(17);
  for (const auto& r : log)
    os << r.n << ',' << r.value << ',' << r.subgrad_norm1 << ',' << r.seconds << '\n';
}

SubgradientResult run_subgradient_descent(const MotInstance& inst,
                                          std::span<const double> psi0,
                                          const SubgradientSteps& steps) {
  if (!(steps.c0 > 0.0)) throw DomainError("run_subgradient_descent: c0 must be > 0");
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  SubgradientResult res;
  SemidualIterate cur = semidual_value_and_subgradient(inst, psi0);
  res.best = cur;
  std::vector<double> psi = cur.psi;
  for (long n = 0;; ++n) {
    double g1 = 0.0;
    for (double g : cur.subgradient) g1 += std::abs(g);
    res.log.push_back({n, cur.value, g1,
                       std::chrono::duration<double>(clock::now() - t0).count()});
    if (cur.value < res.best.value) {
      res.best = cur;
      res.best.n = n;
    }
    if (n >= steps.n_max || g1 <= steps.tol) break;
    const double step = steps.c0 / std::sqrt(static_cast<double>(n + 1));
    for (std::size_t j = 0; j < psi.size(); ++j) psi[j] -= step * cur.subgradient[j];
    cur = semidual_value_and_subgradient(inst, psi, cur.hull_gradients);
    cur.n = n + 1;
  }
  return res;
}

}  // namespace mot
