#include "mot/io.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "mot/errors.hpp"
#include "mot/instances.hpp"

namespace mot {

namespace {

template <class T>
void opt(const json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

std::ofstream open_out(const std::filesystem::path& p) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream os(p);
  if (!os) throw Error("cannot write " + p.string());
  return os;
}

}  // namespace

json measure_to_json(const DiscreteMeasure& m) {
  json pts = json::array();
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto p = m.point(i);
    pts.push_back(std::vector<double>(p.begin(), p.end()));
  }
  return {{"points", pts}, {"weights", m.weights()}};
}

DiscreteMeasure measure_from_json(const json& j, std::size_t dim) {
  const auto& pts = j.at("points");
  std::vector<double> coords;
  for (const auto& p : pts) {
    if (p.is_number()) {
      if (dim != 1) throw DomainError("scalar point in a measure of dimension " + std::to_string(dim));
      coords.push_back(p.get<double>());
      continue;
    }
    const auto v = p.get<std::vector<double>>();
    if (v.size() != dim) throw DomainError("point of wrong dimension in instance document");
    coords.insert(coords.end(), v.begin(), v.end());
  }
  auto w = j.at("weights").get<std::vector<double>>();
  if (w.size() * dim != coords.size()) throw DomainError("points and weights differ in length");
  return DiscreteMeasure(dim, std::move(coords), std::move(w));
}

json instance_to_json(const MotInstance& inst) {
  json cost = {{"kind", std::string(to_string(inst.cost.kind))}};
  if (inst.cost.kind == CostKind::kTabulated) {
    json rows = json::array();
    for (std::size_t i = 0; i < inst.nx(); ++i)
      rows.push_back(std::vector<double>(inst.cost.matrix.begin() + i * inst.ny(),
                                         inst.cost.matrix.begin() + (i + 1) * inst.ny()));
    cost["matrix"] = rows;
  }
  return {{"dim", inst.dim()},
          {"mu", measure_to_json(inst.mu)},
          {"nu", measure_to_json(inst.nu)},
          {"cost", cost}};
}

MotInstance instance_from_json(const json& j) {
  if (j.contains("generator"))
    return generate_instance(j.at("generator").get<std::string>(), j.value("n", std::size_t{10}));
  const std::size_t dim = j.at("dim").get<std::size_t>();
  auto mu = measure_from_json(j.at("mu"), dim);
  auto nu = measure_from_json(j.at("nu"), dim);
  const auto& c = j.at("cost");
  const CostKind kind = cost_kind_from_string(c.at("kind").get<std::string>());
  CostSpec spec;
  if (kind == CostKind::kTabulated) {
    std::vector<double> m;
    std::size_t rows = 0;
    for (const auto& r : c.at("matrix")) {
      const auto v = r.get<std::vector<double>>();
      if (v.size() != nu.size()) throw DomainError("cost matrix row of wrong length");
      m.insert(m.end(), v.begin(), v.end());
      ++rows;
    }
    spec = CostSpec::tabulated(rows, nu.size(), std::move(m));
  } else {
    spec = CostSpec::formula(kind);
  }
  return MotInstance(std::move(mu), std::move(nu), std::move(spec));
}

json read_json(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw DomainError(path.string() + ": " + e.what());
  }
}

MotInstance read_instance(const std::filesystem::path& path) {
  try {
    return instance_from_json(read_json(path));
  } catch (const json::exception& e) {
    throw DomainError(path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const json& j) {
  auto os = open_out(path);
  os << j.dump(2) << '\n';
}

void from_json(const json& j, NewtonConfig& c) {
  opt(j, "cg_max_iters", c.cg_max_iters);
  opt(j, "forcing_cap", c.forcing_cap);
  opt(j, "forcing_exponent", c.forcing_exponent);
  if (j.contains("fixed_forcing") && !j.at("fixed_forcing").is_null())
    c.fixed_forcing = j.at("fixed_forcing").get<double>();
  opt(j, "line_search", c.line_search);
  opt(j, "c1", c.wolfe.c1);
  opt(j, "c2", c.wolfe.c2);
  opt(j, "max_bisections", c.wolfe.max_bisections);
  opt(j, "grad_tol", c.grad_tol);
  opt(j, "max_outer_iters", c.max_outer_iters);
  opt(j, "max_seconds", c.max_seconds);
}

json to_json(const NewtonConfig& c) {
  json j = {{"cg_max_iters", c.cg_max_iters}, {"forcing_cap", c.forcing_cap},
            {"forcing_exponent", c.forcing_exponent}, {"line_search", c.line_search},
            {"c1", c.wolfe.c1}, {"c2", c.wolfe.c2}, {"max_bisections", c.wolfe.max_bisections},
            {"grad_tol", c.grad_tol}, {"max_outer_iters", c.max_outer_iters},
            {"max_seconds", c.max_seconds}};
  j["fixed_forcing"] = c.fixed_forcing ? json(*c.fixed_forcing) : json(nullptr);
  return j;
}

void from_json(const json& j, ScheduleConfig& c) {
  opt(j, "eps_start", c.eps_start);
  opt(j, "eps_target", c.eps_target);
  opt(j, "eps_factor", c.eps_factor);
  opt(j, "stage_grad_tol", c.stage_grad_tol);
  opt(j, "final_grad_tol", c.final_grad_tol);
  opt(j, "checkpoints", c.checkpoints);
  opt(j, "generator", c.generator);
  if (j.contains("grid_schedule")) {
    c.grid_schedule.clear();
    for (const auto& g : j.at("grid_schedule"))
      c.grid_schedule.push_back({g.at(0).get<double>(), g.at(1).get<std::size_t>()});
  }
  opt(j, "truncate", c.truncate);
  opt(j, "truncation_factor", c.truncation_factor);
  opt(j, "truncation_eps", c.truncation_eps);
  opt(j, "switch_divisor", c.switch_divisor);
  opt(j, "switch_divisor_small", c.switch_divisor_small);
  opt(j, "switch_small_error", c.switch_small_error);
  opt(j, "switch_max_sweeps", c.switch_max_sweeps);
  opt(j, "max_sweeps_per_stage", c.max_sweeps_per_stage);
  opt(j, "max_cycles_per_stage", c.max_cycles_per_stage);
  opt(j, "max_seconds_per_stage", c.max_seconds_per_stage);
  opt(j, "alpha", c.alpha);
  opt(j, "proximal_anchor", c.proximal_anchor);
  if (j.contains("weights"))
    c.weights = penalty_weights_from_string(j.at("weights").get<std::string>());
  if (j.contains("newton")) from_json(j.at("newton"), c.newton);
}

json to_json(const ScheduleConfig& c) {
  json grid = json::array();
  for (const auto& g : c.grid_schedule) grid.push_back({g.eps_threshold, g.n});
  return {{"eps_start", c.eps_start},
          {"eps_target", c.eps_target},
          {"eps_factor", c.eps_factor},
          {"stage_grad_tol", c.stage_grad_tol},
          {"final_grad_tol", c.final_grad_tol},
          {"checkpoints", c.checkpoints},
          {"generator", c.generator},
          {"grid_schedule", grid},
          {"truncate", c.truncate},
          {"truncation_factor", c.truncation_factor},
          {"truncation_eps", c.truncation_eps},
          {"switch_divisor", c.switch_divisor},
          {"switch_divisor_small", c.switch_divisor_small},
          {"switch_small_error", c.switch_small_error},
          {"switch_max_sweeps", c.switch_max_sweeps},
          {"max_sweeps_per_stage", c.max_sweeps_per_stage},
          {"max_cycles_per_stage", c.max_cycles_per_stage},
          {"max_seconds_per_stage", c.max_seconds_per_stage},
          {"alpha", c.alpha},
          {"proximal_anchor", c.proximal_anchor},
          {"weights", std::string(to_string(c.weights))},
          {"newton", to_json(c.newton)}};
}

void from_json(const json& j, RepairConfig& c) {
  opt(j, "epsilon", c.epsilon);
  opt(j, "eps_start", c.eps_start);
  opt(j, "eps_factor", c.eps_factor);
  opt(j, "alphas", c.alphas);
  if (j.contains("early_stop_rel_change")) {
    if (j.at("early_stop_rel_change").is_null())
      c.early_stop_rel_change.reset();
    else
      c.early_stop_rel_change = j.at("early_stop_rel_change").get<double>();
  }
  if (j.contains("newton")) from_json(j.at("newton"), c.newton);
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  try {
    if (j.contains("schedule")) from_json(j.at("schedule"), c.schedule);
    if (j.contains("solver")) c.solver = solver_from_string(j.at("solver").get<std::string>());
    if (j.contains("sinkhorn")) {
      const auto& s = j.at("sinkhorn");
      opt(s, "grad_tol", c.sinkhorn.grad_tol);
      opt(s, "max_iters", c.sinkhorn.max_iters);
      opt(s, "max_seconds", c.sinkhorn.max_seconds);
    }
    if (j.contains("repair")) {
      from_json(j.at("repair"), c.repair);
      opt(j.at("repair"), "weights", c.repair_weights);
    }
    if (j.contains("subgradient")) {
      const auto& s = j.at("subgradient");
      opt(s, "c0", c.subgradient.c0);
      opt(s, "n_max", c.subgradient.n_max);
      opt(s, "tol", c.subgradient.tol);
    }
    if (j.contains("hull")) {
      const auto& s = j.at("hull");
      opt(s, "boundary_slack", c.hull.boundary_slack);
      opt(s, "bary_floor", c.hull.bary_floor);
      opt(s, "max_iters_per_point", c.hull.max_iters_per_point);
    }
    if (j.contains("lp")) {
      const auto& s = j.at("lp");
      opt(s, "max_variables", c.lp.max_variables);
      opt(s, "max_pivots", c.lp.max_pivots);
      opt(s, "feasibility_tol", c.lp.feasibility_tol);
    }
    if (j.contains("bench")) {
      const auto& s = j.at("bench");
      opt(s, "eps_1d", c.bench_eps_1d);
      opt(s, "eps_2d", c.bench_eps_2d);
      opt(s, "target", c.bench_target);
      opt(s, "max_seconds", c.bench_max_seconds);
    }
    if (j.contains("gap_curve")) opt(j.at("gap_curve"), "eps", c.gap_eps);
  } catch (const json::exception& e) {
    throw DomainError(std::string("config: ") + e.what());
  }
  return c;
}

json report_to_json(const SolveReport& r) {
  json stages = json::array();
  for (const auto& s : r.stages) {
    stages.push_back({{"stage", s.stage},
                      {"epsilon", s.epsilon},
                      {"nx", s.nx},
                      {"ny", s.ny},
                      {"nnz", s.nnz},
                      {"tol", s.tol},
                      {"sweeps", s.sweeps},
                      {"newton_iters", s.newton_iters},
                      {"cycles", s.cycles},
                      {"grad_error", s.grad_error},
                      {"converged", s.converged},
                      {"seconds", s.seconds},
                      {"dropped_mass", s.dropped_mass},
                      {"dropped_entries", s.dropped_entries},
                      {"restored_rows", s.restored_rows},
                      {"widened", s.widened},
                      {"refined", s.refined},
                      {"error", s.error}});
  }
  json j = {{"solver", std::string(to_string(r.solver))},
            {"epsilon", r.epsilon},
            {"nx", r.inst ? r.inst->nx() : 0},
            {"ny", r.inst ? r.inst->ny() : 0},
            {"nnz", r.active.nnz()},
            {"dual_value", r.stats.dual_value},
            {"primal_value", r.stats.primal_value},
            {"entropy", r.stats.entropy},
            {"mass", r.stats.mass},
            {"x_marginal_error", r.x_marginal_error},
            {"y_marginal_error", r.y_marginal_error},
            {"martingale_error", r.martingale_error},
            {"converged", r.converged},
            {"seconds", r.seconds},
            {"stages", stages}};
  j["gap_hull"] = r.gap_hull ? json(*r.gap_hull) : json(nullptr);
  j["gap_sup"] = r.gap_sup ? json(*r.gap_sup) : json(nullptr);
  return j;
}

void write_report(const std::filesystem::path& dir, const SolveReport& r) {
  std::filesystem::create_directories(dir);
  for (const auto& s : r.stages) {
    auto os = open_out(dir / ("stage" + std::to_string(s.stage) + ".csv"));
    s.log.write_csv(os, true);
  }
  write_json(dir / "report.json", report_to_json(r));
}

}  // namespace mot
