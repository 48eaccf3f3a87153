#include "mot/repair.hpp"

#include <chrono>
#include <cmath>
#include <memory>

#include "mot/errors.hpp"

namespace mot {

namespace {

std::vector<RepairStage> run_alphas(const MotInstance& inst, std::span<const double> a,
                                    const RepairConfig& cfg, bool early_stop) {
  if (cfg.alphas.empty()) throw DomainError("repair: empty alpha schedule");
  for (std::size_t k = 0; k < cfg.alphas.size(); ++k) {
    if (!(cfg.alphas[k] > 0.0)) throw DomainError("repair: alphas must be positive");
    if (k > 0 && !(cfg.alphas[k] < cfg.alphas[k - 1]))
      throw DomainError("repair: alphas must be decreasing");
  }
  if (a.size() != inst.ny()) throw DomainError("repair: weight vector has wrong length");
  for (double v : a)
    if (!(v > 0.0)) throw DomainError("repair: weights must be positive");

  auto shared = std::make_shared<const MotInstance>(inst);
  std::vector<double> psi(inst.ny(), 0.0);
  std::vector<double> h(inst.nx() * inst.dim(), 0.0);
  std::vector<RepairStage> out;
  using clock = std::chrono::steady_clock;

  for (std::size_t k = 0; k < cfg.alphas.size(); ++k) {
    const auto t0 = clock::now();
    Penalization pen;
    pen.alpha = cfg.alphas[k];
    pen.a.assign(a.begin(), a.end());

    std::vector<double> eps_list;
    if (k == 0) {
      for (double e = cfg.eps_start; e > cfg.epsilon; e /= cfg.eps_factor) eps_list.push_back(e);
    }
    eps_list.push_back(cfg.epsilon);

    NewtonResult nr;
    for (double e : eps_list) {
      EntropicProblem prob(shared, e);
      prob.penalization = pen;
      nr = run_newton(prob, psi, cfg.newton, h);
      psi = nr.state.dual.psi;
      h = nr.state.dual.h;
    }
    RepairStage st;
    st.alpha = cfg.alphas[k];
    st.nu_alpha = nr.state.y_marg;
    st.psi = psi;
    st.newton_iters = nr.iterations;
    st.grad_error = nr.grad_error;
    st.converged = nr.converged;
    st.fstar_gap = fstar_quadratic(a, st.nu_alpha, inst.nu.weights());
    st.seconds = std::chrono::duration<double>(clock::now() - t0).count();
    out.push_back(std::move(st));
    if (early_stop && cfg.early_stop_rel_change && out.size() >= 2) {
      const double g1 = out[out.size() - 2].fstar_gap, g2 = out.back().fstar_gap;
      if (std::abs(g2 - g1) <= *cfg.early_stop_rel_change * std::max(std::abs(g1), 1e-300))
        break;
    }
  }
  return out;
}

}  // namespace

double fstar_quadratic(std::span<const double> a, std::span<const double> nu_alpha,
                       std::span<const double> nu) {
  CompensatedSum s;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double g = nu_alpha[j] - nu[j];
    s.add(0.5 * g * g / a[j]);
  }
  return s.value();
}

RepairResult repair_marginals(const MotInstance& inst, std::span<const double> a,
                              const RepairConfig& cfg) {
  RepairResult res;
  res.stages = run_alphas(inst, a, cfg, true);
  const auto& last = res.stages.back();
  std::vector<double> w = last.nu_alpha;
  // The marginal of a kernel is already nonnegative; fold rounding into the
  // total before handing it back as a measure.
  double tot = 0.0;
  for (double& v : w) {
    v = std::max(v, 0.0);
    tot += v;
  }
  for (double& v : w) v /= tot;
  res.nu_repaired = DiscreteMeasure(inst.dim(), inst.nu.coords(), std::move(w));
  res.fstar_gap = last.fstar_gap;
  res.final_alpha = last.alpha;
  if (res.stages.size() >= 2) {
    const auto& p = res.stages[res.stages.size() - 2];
    res.fstar_gap_extrapolated =
        last.fstar_gap - last.alpha * (p.fstar_gap - last.fstar_gap) / (p.alpha - last.alpha);
  }
  return res;
}

SlopeResult penalization_slope(const MotInstance& inst, std::span<const double> a,
                               const RepairConfig& cfg) {
  SlopeResult res;
  res.stages = run_alphas(inst, a, cfg, false);
  const auto& nu = inst.nu.weights();
  for (const auto& st : res.stages) {
    std::vector<double> s(nu.size());
    for (std::size_t j = 0; j < s.size(); ++j) s[j] = (st.nu_alpha[j] - nu[j]) / st.alpha;
    res.alphas.push_back(st.alpha);
    res.slopes.push_back(std::move(s));
  }
  for (std::size_t k = 1; k < res.slopes.size(); ++k) {
    double m = 0.0;
    for (std::size_t j = 0; j < nu.size(); ++j)
      m = std::max(m, std::abs(res.slopes[k][j] - res.slopes[k - 1][j]));
    res.drift.push_back(m);
  }
  if (!res.drift.empty()) res.diagnostic = res.drift.back();
  if (res.slopes.size() >= 2) {
    const std::size_t n = res.slopes.size();
    const double a1 = res.alphas[n - 2], a2 = res.alphas[n - 1];
    res.extrapolated.resize(nu.size());
    for (std::size_t j = 0; j < nu.size(); ++j)
      res.extrapolated[j] =
          res.slopes[n - 1][j] - a2 * (res.slopes[n - 2][j] - res.slopes[n - 1][j]) / (a1 - a2);
  } else {
    res.extrapolated = res.slopes.back();
  }
  return res;
}

}  // namespace mot
