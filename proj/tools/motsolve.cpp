#include <omp.h>

#include <CLI11.hpp>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include "mot/diagnostics.hpp"
#include "mot/errors.hpp"
#include "mot/hull.hpp"
#include "mot/instances.hpp"
#include "mot/io.hpp"
#include "mot/lp.hpp"
#include "mot/repair.hpp"

namespace fs = std::filesystem;
using namespace mot;

namespace {

struct Globals {
  std::string config;
  int threads = 0;
  std::uint64_t seed = 1;
  std::string out = "out";
};

struct InstanceArgs {
  std::string file;
  std::string generator;
  std::optional<std::size_t> n;

  void add(CLI::App* app) {
    app->add_option("--instance", file, "instance document");
    app->add_option("--generator", generator, "named experiment")
        ->check(CLI::IsMember(experiment_names()));
    app->add_option("-n,--grid", n, "grid size per axis for --generator");
  }
  std::shared_ptr<const MotInstance> load() const {
    if (!file.empty()) return std::make_shared<const MotInstance>(read_instance(file));
    if (!generator.empty())
      return std::make_shared<const MotInstance>(generate_instance(generator, n.value_or(10)));
    throw DomainError("need --instance or --generator");
  }
  // -n pins a single grid; otherwise the experiment's reference refinement.
  void fill_grid(ScheduleConfig& sched) const {
    if (!sched.grid_schedule.empty()) return;
    sched.grid_schedule = n ? std::vector<GridStage>{{sched.eps_start, *n}}
                            : reference_grid_schedule(sched.generator);
  }
};

std::ofstream open_file(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p);
  if (!os) throw Error("cannot write " + p.string());
  return os;
}

void check_order(const MotInstance& inst) {
  for (const auto& v : validate_instance(inst))
    throw DomainError(v.invariant + ": " + v.message);
  if (inst.dim() == 1) {
    const auto co = check_convex_order_1d(inst.mu, inst.nu);
    if (!co.ordered) {
      std::ostringstream os;
      os << "marginals are not in convex order (worst call violation " << co.worst_violation
         << " at strike " << co.worst_strike << "); run `repair` first";
      throw DomainError(os.str());
    }
  }
}

void print_report(const SolveReport& r) {
  std::cout << "solver " << to_string(r.solver) << "  eps " << r.epsilon << "  grid "
            << (r.inst ? r.inst->nx() : 0) << "x" << (r.inst ? r.inst->ny() : 0) << "  nnz "
            << r.active.nnz() << "\n";
  for (const auto& s : r.stages) {
    std::cout << "  stage " << s.stage << " eps=" << s.epsilon << " n=" << s.nx << " sweeps="
              << s.sweeps << " newton=" << s.newton_iters << " err=" << s.grad_error
              << (s.converged ? "" : " (not converged)") << " t=" << s.seconds << "s";
    if (s.dropped_entries) std::cout << " dropped=" << s.dropped_mass;
    if (s.widened) std::cout << " widened";
    if (!s.error.empty()) std::cout << " error: " << s.error;
    std::cout << "\n";
  }
  std::cout << "primal " << r.stats.primal_value << "  dual " << r.stats.dual_value << "\n"
            << "marginal errors x " << r.x_marginal_error << "  y " << r.y_marginal_error
            << "  martingale " << r.martingale_error << "\n";
  if (r.gap_hull) std::cout << "gap (hull) " << *r.gap_hull << "  gap/eps " << *r.gap_hull / r.epsilon << "\n";
  if (r.gap_sup) std::cout << "gap (sup)  " << *r.gap_sup << "\n";
  std::cout << "total " << r.seconds << "s\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Discrete martingale optimal transport solvers"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--threads", g.threads, "OpenMP threads (0 = runtime default)");
  app.add_option("--seed", g.seed, "seed for randomized commands");
  app.add_option("--out", g.out, "output directory");

  // solve
  auto* solve = app.add_subcommand("solve", "epsilon-scaled entropic solve");
  InstanceArgs solve_in;
  solve_in.add(solve);
  std::string solver_name;
  std::optional<double> eps_target;
  bool coupling = false;
  std::vector<std::vector<double>> slices;
  solve->add_option("--solver", solver_name)->check(CLI::IsMember({"bregman", "newton", "hybrid"}));
  solve->add_option("--eps", eps_target, "target epsilon");
  solve->add_flag("--coupling", coupling, "write coupling.csv");
  solve->add_option("--slice", slices, "write the conditional law at the grid point nearest to x")
      ->expected(1)
      ->allow_extra_args(false);

  // gap-curve
  auto* gap = app.add_subcommand("gap-curve", "duality gap against epsilon");
  InstanceArgs gap_in;
  gap_in.add(gap);
  std::vector<double> gap_eps;
  std::string gap_mode = "both";
  gap->add_option("--eps", gap_eps, "decreasing epsilons");
  gap->add_option("--mode", gap_mode)->check(CLI::IsMember({"concave_hull", "sup", "both"}));

  // bench
  auto* bench = app.add_subcommand("bench", "Bregman, Newton and hybrid at the hardest stage");
  InstanceArgs bench_in;
  bench_in.add(bench);
  int bench_dim = 1;
  std::optional<double> bench_eps;
  bench->add_option("--dim", bench_dim, "1 (left_curtain) or 2 (basket2d)")->check(CLI::IsMember({1, 2}));
  bench->add_option("--eps", bench_eps, "stage epsilon");

  // repair
  auto* repair = app.add_subcommand("repair", "convex-order repair of nu");
  InstanceArgs repair_in;
  repair_in.add(repair);
  std::string repair_weights;
  std::vector<double> alphas;
  repair->add_option("--weights", repair_weights)->check(CLI::IsMember({"ones", "nu", "nu2"}));
  repair->add_option("--alphas", alphas, "decreasing penalty weights");

  // hull
  auto* hull = app.add_subcommand("hull", "concave envelope of sampled values at a point");
  std::string hull_file;
  hull->add_option("--input", hull_file, "{\"dim\", \"grid\", \"f\", \"x\", \"gradient_guess\"?}")
      ->required()
      ->check(CLI::ExistingFile);

  // oracle
  auto* oracle = app.add_subcommand("oracle", "exact LP solution of the discrete problem");
  InstanceArgs oracle_in;
  oracle_in.add(oracle);
  bool feasibility_only = false;
  oracle->add_flag("--feasibility", feasibility_only, "only test for a martingale coupling");

  // generate
  auto* generate = app.add_subcommand("generate", "write an instance document");
  InstanceArgs gen_in;
  gen_in.add(generate);
  bool random = false;
  RandomInstanceOptions ropt;
  std::optional<double> contraction;
  generate->add_flag("--random", random, "random convex-ordered 1D instance");
  generate->add_option("--nx", ropt.nx);
  generate->add_option("--ny", ropt.ny);
  generate->add_option("--break", contraction, "mix nu toward its mean, in (0, 1)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (g.threads > 0) omp_set_num_threads(g.threads);
    RunConfig cfg = g.config.empty() ? RunConfig{} : run_config_from_json(read_json(g.config));
    const fs::path out = g.out;

    if (*solve) {
      auto inst = solve_in.generator.empty() ? solve_in.load() : nullptr;
      ScheduleConfig sched = cfg.schedule;
      if (!solve_in.generator.empty()) {
        sched.generator = solve_in.generator;
        solve_in.fill_grid(sched);
      } else {
        sched.generator.clear();
        check_order(*inst);
      }
      if (eps_target) sched.eps_target = *eps_target;
      const SolverChoice solver = solver_name.empty() ? cfg.solver : solver_from_string(solver_name);
      EntropicProblem* last_prob = nullptr;
      std::unique_ptr<EntropicProblem> keep;
      HybridHooks hooks;
      hooks.on_stage = [&](const StageReport&, const EntropicProblem& p, const DualState&) {
        keep = std::make_unique<EntropicProblem>(p);
        last_prob = keep.get();
      };
      const auto rep = run_hybrid(inst, sched, solver, hooks);
      write_report(out, rep);
      print_report(rep);
      if ((coupling || !slices.empty()) && last_prob) {
        if (coupling) {
          auto os = open_file(out / "coupling.csv");
          export_coupling(os, *last_prob, rep.state);
        }
        for (std::size_t k = 0; k < slices.size(); ++k) {
          const auto xi = nearest_point(rep.inst->mu, slices[k]);
          auto os = open_file(out / ("slice" + std::to_string(k) + ".csv"));
          write_slice_csv(os, *rep.inst, conditional_slice(*last_prob, rep.state, xi));
        }
      }
      std::cout << "wrote " << out.string() << "\n";
      return rep.converged ? 0 : 2;
    }

    if (*gap) {
      ScheduleConfig sched = cfg.schedule;
      std::shared_ptr<const MotInstance> inst;
      if (!gap_in.generator.empty()) {
        sched.generator = gap_in.generator;
        gap_in.fill_grid(sched);
      } else {
        inst = gap_in.load();
        sched.generator.clear();
        check_order(*inst);
      }
      auto eps = gap_eps.empty() ? cfg.gap_eps : gap_eps;
      if (eps.empty()) throw DomainError("gap-curve: give --eps or gap_curve.eps in the config");
      std::vector<DominatorMode> modes;
      if (gap_mode != "sup") modes.push_back(DominatorMode::kConcaveHull);
      if (gap_mode != "concave_hull") modes.push_back(DominatorMode::kSup);
      const auto rows = gap_curve(inst, sched, eps, modes, cfg.solver);
      auto os = open_file(out / "gap_curve.csv");
      write_gap_csv(os, rows);
      write_gap_csv(std::cout, rows);
      return 0;
    }

    if (*bench) {
      ScheduleConfig sched = cfg.schedule;
      std::shared_ptr<const MotInstance> inst;
      if (!bench_in.file.empty()) {
        inst = bench_in.load();
        sched.generator.clear();
      } else {
        sched.generator = bench_in.generator.empty() ? (bench_dim == 1 ? "left_curtain" : "basket2d")
                                                     : bench_in.generator;
        bench_in.fill_grid(sched);
      }
      const double eps = bench_eps ? *bench_eps : (bench_dim == 1 ? cfg.bench_eps_1d : cfg.bench_eps_2d);
      const auto start = prepare_bench(inst, sched, eps);
      std::cout << "stage eps " << start.epsilon << "  grid " << start.inst->nx() << "x"
                << start.inst->ny() << "  nnz " << start.active.nnz() << "\n";
      const auto traces =
          bench_solvers(start, sched, cfg.bench_target, cfg.bench_max_seconds,
                        {SolverChoice::kBregman, SolverChoice::kNewton, SolverChoice::kHybrid});
      auto os = open_file(out / "bench.csv");
      write_bench_csv(os, traces);
      for (const auto& t : traces)
        std::cout << to_string(t.solver) << ": " << (t.reached ? "reached " : "stopped at ")
                  << (t.log.rows.empty() ? 0.0 : t.log.rows.back().grad_error) << " in "
                  << t.seconds << "s\n";
      return 0;
    }

    if (*repair) {
      const auto inst = repair_in.load();
      RepairConfig rc = cfg.repair;
      if (!alphas.empty()) rc.alphas = alphas;
      const auto w = penalty_weights_from_string(repair_weights.empty() ? cfg.repair_weights
                                                                        : repair_weights);
      const auto a = make_penalty_weights(w, inst->nu, {});
      const auto res = repair_marginals(*inst, a, rc);
      MotInstance fixed = *inst;
      fixed.nu = res.nu_repaired;
      write_json(out / "repaired.json", instance_to_json(fixed));
      auto os = open_file(out / "repair.csv");
      os << "alpha,fstar_gap,newton_iters,grad_error\n" << std::setprecision(17);
      for (const auto& s : res.stages)
        os << s.alpha << ',' << s.fstar_gap << ',' << s.newton_iters << ',' << s.grad_error << '\n';
      std::cout << "final alpha " << res.final_alpha << "  f*-gap " << res.fstar_gap;
      if (res.fstar_gap_extrapolated) std::cout << "  (extrapolated " << *res.fstar_gap_extrapolated << ")";
      std::cout << "\nmartingale coupling exists: "
                << (feasible_martingale(inst->mu, res.nu_repaired, cfg.lp) ? "yes" : "no") << "\n";
      return 0;
    }

    if (*hull) {
      const auto j = read_json(hull_file);
      const std::size_t d = j.at("dim").get<std::size_t>();
      std::vector<double> grid;
      for (const auto& p : j.at("grid")) {
        if (p.is_number())
          grid.push_back(p.get<double>());
        else
          for (double v : p.get<std::vector<double>>()) grid.push_back(v);
      }
      const auto f = j.at("f").get<std::vector<double>>();
      std::vector<double> x = j.at("x").is_number() ? std::vector<double>{j.at("x").get<double>()}
                                                    : j.at("x").get<std::vector<double>>();
      HullResult r;
      if (d == 1) {
        r = hull_1d(grid, f, x[0], cfg.hull);
      } else {
        std::optional<std::vector<double>> guess;
        if (j.contains("gradient_guess")) guess = j.at("gradient_guess").get<std::vector<double>>();
        r = hull_nd(d, grid, f, x, guess, cfg.hull);
      }
      json o = {{"value", r.value},         {"support", r.support},
                {"barycentric", r.barycentric}, {"gradient", r.gradient},
                {"near_boundary", r.near_boundary}, {"tiny_coefficient", r.tiny_coefficient},
                {"iterations", r.iterations}};
      write_json(out / "hull.json", o);
      std::cout << o.dump(2) << "\n";
      return 0;
    }

    if (*oracle) {
      const auto inst = oracle_in.load();
      if (feasibility_only) {
        const bool ok = feasible_martingale(inst->mu, inst->nu, cfg.lp);
        std::cout << (ok ? "feasible" : "infeasible") << "\n";
        return ok ? 0 : 3;
      }
      const auto sol = solve_mot_lp(*inst, cfg.lp);
      json o = {{"status", std::string(to_string(sol.status))}, {"value", sol.value},
                {"pivots", sol.pivots}};
      if (sol.status == LpStatus::kOptimal) o["residual"] = coupling_residual(*inst, sol.coupling);
      write_json(out / "oracle.json", o);
      std::cout << o.dump(2) << "\n";
      return sol.status == LpStatus::kOptimal ? 0 : 3;
    }

    if (*generate) {
      MotInstance inst;
      if (random) {
        std::mt19937_64 rng(g.seed);
        inst = random_convex_ordered(rng, ropt);
      } else {
        inst = *gen_in.load();
      }
      if (contraction) inst = break_convex_order(inst, *contraction);
      const fs::path p = out / "instance.json";
      write_json(p, instance_to_json(inst));
      std::cout << "wrote " << p.string() << " (" << inst.nx() << " x " << inst.ny() << ")\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
