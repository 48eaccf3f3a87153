#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "mot/hybrid.hpp"
#include "mot/hull.hpp"
#include "mot/lp.hpp"
#include "mot/model.hpp"
#include "mot/repair.hpp"
#include "mot/semidual.hpp"
#include "mot/sinkhorn.hpp"

namespace mot {

using json = nlohmann::json;

// Instance documents:
//   {"dim": d, "mu": {"points": [[..], ..], "weights": [..]}, "nu": {..},
//    "cost": {"kind": "forward_start_power"}}
// or a tabulated cost {"kind": "tabulated", "matrix": [[..], ..]} whose rows
// follow mu's points and columns nu's points as listed. A generated instance
// may be given as {"generator": "left_curtain", "n": 100}.
json instance_to_json(const MotInstance& inst);
MotInstance instance_from_json(const json& j);
MotInstance read_instance(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const json& j);
json read_json(const std::filesystem::path& path);

json measure_to_json(const DiscreteMeasure& m);
DiscreteMeasure measure_from_json(const json& j, std::size_t dim);

// Config records. Every key is optional; missing keys keep the defaults.
struct RunConfig {
  ScheduleConfig schedule;
  SolverChoice solver = SolverChoice::kHybrid;
  SinkhornStop sinkhorn;
  RepairConfig repair;
  std::string repair_weights = "nu";
  SubgradientSteps subgradient;
  HullOptions hull;
  LpOptions lp;
  double bench_eps_1d = 4.2e-4;
  double bench_eps_2d = 7.4e-3;
  double bench_target = 1e-4;
  double bench_max_seconds = 600.0;
  std::vector<double> gap_eps;  // gap-curve checkpoints
};
void from_json(const json& j, NewtonConfig& c);
void from_json(const json& j, ScheduleConfig& c);
void from_json(const json& j, RepairConfig& c);
RunConfig run_config_from_json(const json& j);
json to_json(const NewtonConfig& c);
json to_json(const ScheduleConfig& c);

json report_to_json(const SolveReport& r);
// <dir>/stage<k>.csv and <dir>/report.json.
void write_report(const std::filesystem::path& dir, const SolveReport& r);

}  // namespace mot
