#include "mot/hybrid.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "mot/errors.hpp"
#include "mot/instances.hpp"

namespace mot {

namespace {

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point t0) {
  return std::chrono::duration<double>(clock_type::now() - t0).count();
}

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t q = 0; q < a.size(); ++q) s += (a[q] - b[q]) * (a[q] - b[q]);
  return s;
}

std::vector<std::size_t> nearest_map(const DiscreteMeasure& from, const DiscreteMeasure& to) {
  std::vector<std::size_t> out(to.size());
#pragma omp parallel for schedule(static)
  for (long lk = 0; lk < static_cast<long>(to.size()); ++lk) {
    const std::size_t k = static_cast<std::size_t>(lk);
    std::size_t best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < from.size(); ++i) {
      const double dd = sq_dist(from.point(i), to.point(k));
      if (dd < bd) {
        bd = dd;
        best = i;
      }
    }
    out[k] = best;
  }
  return out;
}

void append_log(SweepLog& dst, const SweepLog& src, double t_offset) {
  const long base = dst.rows.empty() ? 0 : dst.rows.back().iter;
  for (auto r : src.rows) {
    r.iter += base;
    r.seconds += t_offset;
    dst.rows.push_back(r);
  }
}

std::size_t grid_for(const ScheduleConfig& s, double eps, std::size_t fallback) {
  std::size_t n = fallback;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& g : s.grid_schedule) {
    if (eps <= g.eps_threshold * (1.0 + 1e-12) && g.eps_threshold < best) {
      best = g.eps_threshold;
      n = g.n;
    }
  }
  return n;
}

std::vector<double> epsilon_sequence(const ScheduleConfig& s) {
  if (!(s.eps_target > 0.0) || s.eps_target > s.eps_start || !(s.eps_factor > 1.0))
    throw std::invalid_argument("ScheduleConfig: need 0 < eps_target <= eps_start, factor > 1");
  std::vector<double> out;
  double e = s.eps_start;
  while (true) {
    out.push_back(e);
    if (e <= s.eps_target) break;
    double next = std::max(e / s.eps_factor, s.eps_target);
    for (double c : s.checkpoints)
      if (c < e && c > next) next = c;
    e = next;
  }
  return out;
}

bool is_checkpoint(const ScheduleConfig& s, double e) {
  for (double c : s.checkpoints)
    if (c == e) return true;
  return false;
}

void run_phases(EntropicProblem& prob, DualState& state, const ScheduleConfig& sched,
                SolverChoice solver, double tol, StageReport& rep,
                clock_type::time_point t0) {
  auto penalized = [&](const DualState& st) {
    EntropicProblem p = prob;
    Penalization pen;
    pen.alpha = sched.alpha;
    pen.a = make_penalty_weights(sched.weights, prob.inst->nu, st.psi);
    if (sched.proximal_anchor) pen.anchor = st.psi;
    p.penalization = std::move(pen);
    return p;
  };
  auto time_left = [&]() {
    if (sched.max_seconds_per_stage <= 0.0) return 0.0;
    return std::max(1e-3, sched.max_seconds_per_stage - seconds_since(t0));
  };
  auto out_of_time = [&]() {
    return sched.max_seconds_per_stage > 0.0 && seconds_since(t0) >= sched.max_seconds_per_stage;
  };

  if (solver == SolverChoice::kBregman) {
    SinkhornStop stop{tol, sched.max_sweeps_per_stage, time_left()};
    auto r = run_sinkhorn(prob, state, stop);
    append_log(rep.log, r.log, 0.0);
    rep.sweeps += r.iterations;
    state = std::move(r.state);
    rep.converged = r.converged;
    return;
  }
  if (solver == SolverChoice::kNewton) {
    const int rounds = sched.proximal_anchor ? sched.max_cycles_per_stage : 1;
    for (int round = 0; round < rounds; ++round) {
      rep.cycles = round + 1;
      const EntropicProblem pp = penalized(state);
      NewtonConfig cfg = sched.newton;
      cfg.grad_tol = tol;
      cfg.max_seconds = time_left();
      const double t_before = seconds_since(t0);
      auto r = run_newton(pp, state.psi, cfg, state.h);
      append_log(rep.log, r.log, t_before);
      rep.newton_iters += r.iterations;
      state = r.state.dual;
      rep.converged = r.converged;
      if (!r.converged || !sched.proximal_anchor || out_of_time()) return;
      if (dual_summary(prob, state).grad_error <= tol) return;
      rep.converged = false;
    }
    return;
  }
  for (int cycle = 0; cycle < sched.max_cycles_per_stage; ++cycle) {
    rep.cycles = cycle + 1;
    double e0 = -1.0;
    long count = 0;
    auto cb = [&](const SweepRecord& rec) {
      ++count;
      if (e0 < 0.0) {
        e0 = rec.grad_error;
        return false;
      }
      const double div = e0 < sched.switch_small_error ? sched.switch_divisor_small
                                                       : sched.switch_divisor;
      return rec.grad_error <= e0 / div || count >= sched.switch_max_sweeps;
    };
    SinkhornStop stop{tol, sched.max_sweeps_per_stage, time_left()};
    auto sr = run_sinkhorn(prob, state, stop, cb);
    append_log(rep.log, sr.log, seconds_since(t0) - (sr.log.rows.empty() ? 0.0 : sr.log.rows.back().seconds));
    rep.sweeps += sr.iterations;
    state = std::move(sr.state);
    if (sr.converged) {
      rep.converged = true;
      return;
    }
    if (out_of_time() || rep.sweeps >= sched.max_sweeps_per_stage) return;

    const EntropicProblem pp = penalized(state);
    NewtonConfig cfg = sched.newton;
    cfg.grad_tol = tol;
    cfg.max_seconds = time_left();
    const double t_before = seconds_since(t0);
    auto nr = run_newton(pp, state.psi, cfg, state.h);
    append_log(rep.log, nr.log, t_before);
    rep.newton_iters += nr.iterations;
    state = nr.state.dual;
    // The penalized gradient is what Newton drives to tol; the next Bregman
    // sweep checks the unpenalized one.
    if (out_of_time()) return;
  }
}

}  // namespace

std::string_view to_string(SolverChoice s) {
  switch (s) {
    case SolverChoice::kBregman:
      return "bregman";
    case SolverChoice::kNewton:
      return "newton";
    case SolverChoice::kHybrid:
      return "hybrid";
  }
  return "hybrid";
}

SolverChoice solver_from_string(std::string_view s) {
  if (s == "bregman") return SolverChoice::kBregman;
  if (s == "newton") return SolverChoice::kNewton;
  if (s == "hybrid") return SolverChoice::kHybrid;
  throw DomainError("unknown solver '" + std::string(s) + "'");
}

std::string_view to_string(PenaltyWeights w) {
  switch (w) {
    case PenaltyWeights::kOnes:
      return "ones";
    case PenaltyWeights::kNu:
      return "nu";
    case PenaltyWeights::kNuSquared:
      return "nu2";
    case PenaltyWeights::kNuOverPsi0:
      return "nu_over_psi0";
  }
  return "nu2";
}

PenaltyWeights penalty_weights_from_string(std::string_view s) {
  if (s == "ones") return PenaltyWeights::kOnes;
  if (s == "nu") return PenaltyWeights::kNu;
  if (s == "nu2") return PenaltyWeights::kNuSquared;
  if (s == "nu_over_psi0") return PenaltyWeights::kNuOverPsi0;
  throw DomainError("unknown penalty weights '" + std::string(s) + "'");
}

std::vector<double> make_penalty_weights(PenaltyWeights w, const DiscreteMeasure& nu,
                                         std::span<const double> psi0) {
  std::vector<double> a(nu.size());
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double v = nu.weight(j);
    switch (w) {
      case PenaltyWeights::kOnes:
        a[j] = 1.0;
        break;
      case PenaltyWeights::kNu:
        a[j] = v;
        break;
      case PenaltyWeights::kNuSquared:
        a[j] = v * v;
        break;
      case PenaltyWeights::kNuOverPsi0:
        a[j] = v / std::max(psi0.empty() ? 0.0 : std::abs(psi0[j]), 1e-8);
        break;
    }
  }
  return a;
}

std::vector<GridStage> reference_grid_schedule(const std::string& experiment) {
  if (experiment == "basket2d") return {{1.0, 10}, {0.25, 20}, {1.0 / 64, 40}, {1.0 / 256, 80}};
  std::vector<GridStage> g;
  std::size_t n = 10;
  for (double e = 1.0; n < 1000; e /= 2, n *= 2) g.push_back({e, n});
  g.push_back({1.0 / 128, 1000});
  return g;
}

DualState prolong_duals(const DualState& old_state, const DiscreteMeasure& old_mu,
                        const DiscreteMeasure& old_nu, const DiscreteMeasure& new_mu,
                        const DiscreteMeasure& new_nu) {
  if (old_mu.dim() != new_mu.dim() || old_nu.dim() != new_nu.dim())
    throw DomainError("prolong_duals: dimension mismatch");
  const std::size_t d = old_state.dim;
  const auto mx = nearest_map(old_mu, new_mu);
  const auto my = nearest_map(old_nu, new_nu);
  DualState s = DualState::zeros(new_mu.size(), new_nu.size(), d);
  for (std::size_t i = 0; i < mx.size(); ++i) {
    s.phi[i] = old_state.phi[mx[i]];
    for (std::size_t q = 0; q < d; ++q) s.h[i * d + q] = old_state.h[mx[i] * d + q];
  }
  for (std::size_t j = 0; j < my.size(); ++j) s.psi[j] = old_state.psi[my[j]];
  return s;
}

ActiveSets prolong_active(const ActiveSets& old_active, const DiscreteMeasure& old_mu,
                          const DiscreteMeasure& old_nu, const DiscreteMeasure& new_mu,
                          const DiscreteMeasure& new_nu) {
  if (old_active.is_full()) return ActiveSets::full(new_mu.size(), new_nu.size());
  const std::size_t ony = old_nu.size(), nny = new_nu.size(), nnx = new_mu.size();
  const auto mx = nearest_map(old_mu, new_mu);
  const auto my = nearest_map(old_nu, new_nu);

  // Neighbourhood radius: 1.5 times the largest nearest-neighbour spacing.
  double spacing = 0.0;
  for (std::size_t j = 0; j < ony; ++j) {
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < ony; ++k)
      if (k != j) bd = std::min(bd, sq_dist(old_nu.point(j), old_nu.point(k)));
    spacing = std::max(spacing, std::sqrt(bd));
  }
  const double r2 = (1.5 * spacing) * (1.5 * spacing);
  std::vector<std::vector<ActiveSets::Index>> neigh(ony);
  for (std::size_t j = 0; j < ony; ++j)
    for (std::size_t k = 0; k < ony; ++k)
      if (sq_dist(old_nu.point(j), old_nu.point(k)) <= r2)
        neigh[j].push_back(static_cast<ActiveSets::Index>(k));

  std::vector<std::vector<ActiveSets::Index>> rows(nnx);
#pragma omp parallel
  {
    std::vector<char> mask(ony);
#pragma omp for schedule(dynamic, 16)
    for (long li = 0; li < static_cast<long>(nnx); ++li) {
      const std::size_t i = static_cast<std::size_t>(li);
      std::fill(mask.begin(), mask.end(), 0);
      for (auto j : old_active.row(mx[i]))
        for (auto k : neigh[j]) mask[k] = 1;
      for (std::size_t j = 0; j < nny; ++j)
        if (mask[my[j]]) rows[i].push_back(static_cast<ActiveSets::Index>(j));
    }
  }
  std::vector<char> covered(nny, 0);
  for (const auto& r : rows)
    for (auto j : r) covered[j] = 1;
  for (std::size_t j = 0; j < nny; ++j) {
    if (covered[j]) continue;
    std::size_t best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < nnx; ++i) {
      const double dd = sq_dist(new_mu.point(i), new_nu.point(j));
      if (dd < bd) {
        bd = dd;
        best = i;
      }
    }
    auto& r = rows[best];
    r.insert(std::upper_bound(r.begin(), r.end(), static_cast<ActiveSets::Index>(j)),
             static_cast<ActiveSets::Index>(j));
  }
  return ActiveSets::from_rows(nny, rows);
}

StageOutcome solve_stage(EntropicProblem prob, DualState state, const ScheduleConfig& sched,
                         SolverChoice solver, double tol) {
  const auto t0 = clock_type::now();
  StageReport rep;
  rep.epsilon = prob.epsilon;
  rep.tol = tol;
  for (std::size_t attempt = 0;; ++attempt) {
    const DualState saved = state;
    try {
      run_phases(prob, state, sched, solver, tol, rep, t0);
      break;
    } catch (const InfeasibleMartingaleError& e) {
      const std::size_t xi = e.x_index();
      if (prob.active.row_end(xi) - prob.active.row_begin(xi) == prob.ny()) {
        rep.error = e.what();
        state = saved;
        break;
      }
      prob.active = prob.active.with_full_row(xi);
      ++rep.restored_rows;
      state = saved;
    } catch (const IterationLimitError& e) {
      const std::size_t xi = e.index();
      if (xi >= prob.nx() ||
          prob.active.row_end(xi) - prob.active.row_begin(xi) == prob.ny()) {
        rep.error = e.what();
        state = saved;
        break;
      }
      prob.active = prob.active.with_full_row(xi);
      ++rep.restored_rows;
      state = saved;
    }
  }
  const auto sum = dual_summary(prob, state);
  rep.grad_error = sum.grad_error;
  rep.nx = prob.nx();
  rep.ny = prob.ny();
  rep.nnz = prob.active.nnz();
  rep.seconds = seconds_since(t0);
  return {std::move(prob), std::move(state), std::move(rep)};
}

double duality_gap(const MotInstance& inst, const DualState& state, double primal_value,
                   DominatorMode mode) {
  const auto pb = phi_bar(inst, state.psi, mode, state.h);
  CompensatedSum s;
  for (std::size_t i = 0; i < inst.nx(); ++i) s.add(inst.mu.weight(i) * pb[i]);
  for (std::size_t j = 0; j < inst.ny(); ++j) s.add(inst.nu.weight(j) * state.psi[j]);
  s.add(-primal_value);
  return s.value();
}

SolveReport run_hybrid(std::shared_ptr<const MotInstance> inst, const ScheduleConfig& sched,
                       SolverChoice solver, const HybridHooks& hooks) {
  const auto t0 = clock_type::now();
  const auto eps_seq = epsilon_sequence(sched);
  std::size_t grid_n = 0;
  if (!sched.generator.empty()) {
    grid_n = grid_for(sched, eps_seq.front(), 10);
    if (!inst || grid_n != 0) inst = std::make_shared<const MotInstance>(generate_instance(sched.generator, grid_n));
  }
  if (!inst) throw std::invalid_argument("run_hybrid: no instance");

  SolveReport out;
  out.solver = solver;
  EntropicProblem prob(inst, eps_seq.front());
  DualState state = DualState::zeros(inst->nx(), inst->ny(), inst->dim());

  for (std::size_t k = 0; k < eps_seq.size(); ++k) {
    const double eps = eps_seq[k];
    bool refined = false;
    if (!sched.generator.empty()) {
      const std::size_t n = grid_for(sched, eps, grid_n);
      if (n != grid_n) {
        auto fresh = std::make_shared<const MotInstance>(generate_instance(sched.generator, n));
        state = prolong_duals(state, prob.inst->mu, prob.inst->nu, fresh->mu, fresh->nu);
        ActiveSets act = prolong_active(prob.active, prob.inst->mu, prob.inst->nu, fresh->mu,
                                        fresh->nu);
        prob = EntropicProblem(fresh, eps, std::move(act));
        grid_n = n;
        refined = true;
      }
    }
    prob.epsilon = eps;
    if (hooks.stop_before && eps <= *hooks.stop_before * (1.0 + 1e-12)) {
      out.inst = prob.inst;
      out.active = prob.active;
      out.epsilon = eps;
      out.state = std::move(state);
      out.seconds = seconds_since(t0);
      return out;
    }
    const bool last = k + 1 == eps_seq.size();
    const double tol = (last || is_checkpoint(sched, eps)) ? sched.final_grad_tol
                                                           : sched.stage_grad_tol;
    const bool truncated = !prob.active.is_full();
    DualState saved = truncated ? state : DualState{};
    auto so = solve_stage(prob, std::move(state), sched, solver, tol);
    if (truncated && !so.report.converged) {
      // A truncated support may carry no exact martingale coupling.
      const double spent = so.report.seconds;
      so = solve_stage(EntropicProblem(prob.inst, eps, ActiveSets::full(prob.nx(), prob.ny())),
                       std::move(saved), sched, solver, tol);
      so.report.widened = true;
      so.report.seconds += spent;
    }
    prob = std::move(so.prob);
    state = std::move(so.state);
    so.report.stage = static_cast<int>(k);
    so.report.refined = refined;
    if (hooks.on_stage) hooks.on_stage(so.report, prob, state);
    if (!last && sched.truncate && so.report.converged && eps <= sched.truncation_eps) {
      const auto tr = truncate_kernel_full(prob, state, sched.truncation_factor);
      so.report.dropped_mass = tr.dropped_mass;
      so.report.dropped_entries = tr.dropped_entries;
      prob.active = tr.active;
    }
    out.stages.push_back(std::move(so.report));
  }

  out.inst = prob.inst;
  out.active = prob.active;
  out.epsilon = prob.epsilon;
  out.stats = kernel_stats(prob, state);
  out.x_marginal_error = out.stats.x_marginal_error(*prob.inst);
  out.y_marginal_error = out.stats.y_marginal_error(*prob.inst);
  out.martingale_error = out.stats.martingale_error();
  out.converged = !out.stages.empty() && out.stages.back().converged;
  if (hooks.compute_gaps) {
    out.gap_hull = duality_gap(*prob.inst, state, out.stats.primal_value,
                               DominatorMode::kConcaveHull);
    out.gap_sup = duality_gap(*prob.inst, state, out.stats.primal_value, DominatorMode::kSup);
  }
  out.state = std::move(state);
  out.seconds = seconds_since(t0);
  return out;
}

}  // namespace mot
