#include "mot/diagnostics.hpp"

#include <algorithm>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "mot/errors.hpp"

namespace mot {

namespace {

void write_header(std::ostream& os, std::size_t d) {
  if (d == 1) {
    os << "x,y,p\n";
    return;
  }
  for (std::size_t q = 1; q <= d; ++q) os << 'x' << q << ',';
  for (std::size_t q = 1; q <= d; ++q) os << 'y' << q << ',';
  os << "p\n";
}

}  // namespace

std::string_view to_string(DominatorMode m) {
  return m == DominatorMode::kSup ? "sup" : "concave_hull";
}

DominatorMode dominator_mode_from_string(std::string_view s) {
  if (s == "sup") return DominatorMode::kSup;
  if (s == "concave_hull" || s == "hull") return DominatorMode::kConcaveHull;
  throw DomainError("unknown gap mode '" + std::string(s) + "'");
}

std::vector<GapRow> gap_curve(std::shared_ptr<const MotInstance> inst, ScheduleConfig sched,
                              const std::vector<double>& eps_list,
                              const std::vector<DominatorMode>& modes, SolverChoice solver) {
  if (eps_list.empty()) throw DomainError("gap_curve: empty epsilon list");
  for (std::size_t k = 1; k < eps_list.size(); ++k)
    if (!(eps_list[k] < eps_list[k - 1])) throw DomainError("gap_curve: epsilons must decrease");
  sched.checkpoints = eps_list;
  sched.eps_target = eps_list.back();
  sched.eps_start = std::max(sched.eps_start, eps_list.front());
  std::vector<GapRow> rows;
  HybridHooks hooks;
  hooks.compute_gaps = false;
  hooks.on_stage = [&](const StageReport& rep, const EntropicProblem& prob, const DualState& st) {
    if (std::find(eps_list.begin(), eps_list.end(), rep.epsilon) == eps_list.end()) return;
    const auto ks = kernel_stats(prob, st);
    for (auto m : modes) {
      GapRow r;
      r.eps = rep.epsilon;
      r.mode = m;
      r.gap = duality_gap(*prob.inst, st, ks.primal_value, m);
      r.gap_over_eps = r.gap / r.eps;
      r.grad_error = rep.grad_error;
      r.converged = rep.converged;
      rows.push_back(r);
    }
  };
  run_hybrid(std::move(inst), sched, solver, hooks);
  return rows;
}

void write_gap_csv(std::ostream& os, const std::vector<GapRow>& rows) {
  os << "eps,gap,gap_over_eps,mode\n" << std::setprecision(17);
  for (const auto& r : rows)
    os << r.eps << ',' << r.gap << ',' << r.gap_over_eps << ',' << to_string(r.mode) << '\n';
}

void export_coupling(std::ostream& os, const EntropicProblem& prob, const DualState& state,
                     double threshold) {
  const auto p = kernel_values(prob, state);
  const auto& act = prob.active;
  const std::size_t d = prob.dim();
  write_header(os, d);
  os << std::setprecision(17);
  for (std::size_t i = 0; i < prob.nx(); ++i) {
    const auto x = prob.inst->mu.point(i);
    for (std::size_t pos = act.row_begin(i); pos < act.row_end(i); ++pos) {
      if (p[pos] < threshold) continue;
      const auto y = prob.inst->nu.point(act.y_at(pos));
      for (double v : x) os << v << ',';
      for (double v : y) os << v << ',';
      os << p[pos] << '\n';
    }
  }
}

std::vector<CouplingEntry> read_coupling(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw DomainError("read_coupling: empty input");
  const std::size_t cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  if (cols < 3 || cols % 2 == 0) throw DomainError("read_coupling: bad header");
  const std::size_t d = (cols - 1) / 2;
  std::vector<CouplingEntry> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> v;
    while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
    if (v.size() != cols) throw DomainError("read_coupling: ragged row");
    CouplingEntry e;
    e.x.assign(v.begin(), v.begin() + d);
    e.y.assign(v.begin() + d, v.begin() + 2 * d);
    e.p = v.back();
    out.push_back(std::move(e));
  }
  return out;
}

ConditionalSlice conditional_slice(const EntropicProblem& prob, const DualState& state,
                                   std::size_t xi) {
  if (xi >= prob.nx()) throw IndexError("conditional_slice: x-index out of range");
  const auto p = kernel_values(prob, state);
  ConditionalSlice s;
  s.x_index = xi;
  double mass = 0.0;
  for (std::size_t pos = prob.active.row_begin(xi); pos < prob.active.row_end(xi); ++pos)
    mass += p[pos];
  for (std::size_t pos = prob.active.row_begin(xi); pos < prob.active.row_end(xi); ++pos) {
    s.y_index.push_back(prob.active.y_at(pos));
    s.prob.push_back(p[pos] / mass);
  }
  return s;
}

void write_slice_csv(std::ostream& os, const MotInstance& inst, const ConditionalSlice& s) {
  const std::size_t d = inst.dim();
  if (d == 1) {
    os << "y,p\n";
  } else {
    for (std::size_t q = 1; q <= d; ++q) os << 'y' << q << ',';
    os << "p\n";
  }
  os << std::setprecision(17);
  for (std::size_t k = 0; k < s.y_index.size(); ++k) {
    for (double v : inst.nu.point(s.y_index[k])) os << v << ',';
    os << s.prob[k] << '\n';
  }
}

BenchStart prepare_bench(std::shared_ptr<const MotInstance> inst, ScheduleConfig sched,
                         double eps) {
  sched.eps_target = std::min(sched.eps_target, eps);
  sched.checkpoints.clear();
  HybridHooks hooks;
  hooks.compute_gaps = false;
  hooks.stop_before = eps;
  auto rep = run_hybrid(std::move(inst), sched, SolverChoice::kHybrid, hooks);
  return {rep.inst, rep.active, rep.state, rep.epsilon};
}

std::vector<BenchTrace> bench_solvers(const BenchStart& start, const ScheduleConfig& sched,
                                      double target, double max_seconds,
                                      const std::vector<SolverChoice>& solvers) {
  std::vector<BenchTrace> out;
  ScheduleConfig s = sched;
  s.max_seconds_per_stage = max_seconds;
  s.max_sweeps_per_stage = std::numeric_limits<long>::max() / 2;
  s.max_cycles_per_stage = 1 << 20;
  s.newton.max_outer_iters = 1 << 20;
  for (auto solver : solvers) {
    EntropicProblem prob(start.inst, start.epsilon, start.active);
    auto so = solve_stage(std::move(prob), start.state, s, solver, target);
    BenchTrace t;
    t.solver = solver;
    t.log = std::move(so.report.log);
    t.reached = so.report.converged;
    t.seconds = so.report.seconds;
    for (const auto& r : t.log.rows)
      if (r.grad_error <= target) {
        t.seconds = r.seconds;
        break;
      }
    out.push_back(std::move(t));
  }
  return out;
}

void write_bench_csv(std::ostream& os, const std::vector<BenchTrace>& traces) {
  os << "solver,iter,seconds,grad_error,dual_value\n" << std::setprecision(17);
  for (const auto& t : traces)
    for (const auto& r : t.log.rows)
      os << to_string(t.solver) << ',' << r.iter << ',' << r.seconds << ',' << r.grad_error << ','
         << r.dual_value << '\n';
}

std::size_t nearest_point(const DiscreteMeasure& m, std::span<const double> pt) {
  std::size_t best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < m.size(); ++i) {
    double s = 0.0;
    const auto p = m.point(i);
    for (std::size_t q = 0; q < p.size(); ++q) s += (p[q] - pt[q]) * (p[q] - pt[q]);
    if (s < bd) {
      bd = s;
      best = i;
    }
  }
  return best;
}

}  // namespace mot
