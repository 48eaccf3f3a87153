#include <doctest.h>

#include <filesystem>
#include <map>
#include <random>
#include <sstream>

#include "helpers.hpp"
#include "mot/diagnostics.hpp"
#include "mot/instances.hpp"
#include "mot/io.hpp"
#include "mot/newton.hpp"

using namespace mot;
using testutil::measure1d;
using testutil::share;

TEST_CASE("generate_instance") {
  SUBCASE("left_curtain") {
    const auto inst = generate_instance("left_curtain", 10);
    CHECK(inst.nx() == 10);
    CHECK(inst.ny() == 11);
    CHECK(inst.mu.total_mass() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(inst.nu.total_mass() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(check_convex_order_1d(inst.mu, inst.nu).ordered);
  }
  SUBCASE("basket2d") {
    const auto inst = generate_instance("basket2d", 10);
    CHECK(inst.dim() == 2);
    CHECK(inst.nx() == 100);
    CHECK(inst.ny() == 121);
    CHECK(inst.nu.total_mass() == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("every name generates") {
    for (const auto& n : experiment_names()) CHECK_NOTHROW(generate_instance(n, 6));
    CHECK_FALSE(is_experiment("nope"));
    CHECK_THROWS(generate_instance("nope", 6));
  }
}

TEST_CASE("instance json round trip") {
  std::mt19937_64 rng(3);
  for (bool tab : {true, false}) {
    const auto inst = testutil::random_pair(rng, 5, 7, tab);
    const auto back = instance_from_json(json::parse(instance_to_json(inst).dump()));
    REQUIRE(back.nx() == inst.nx());
    REQUIRE(back.ny() == inst.ny());
    for (std::size_t i = 0; i < inst.nx(); ++i) {
      CHECK(back.mu.weight(i) == inst.mu.weight(i));
      CHECK(back.mu.point(i)[0] == inst.mu.point(i)[0]);
      for (std::size_t j = 0; j < inst.ny(); ++j) CHECK(back.cost_at(i, j) == inst.cost_at(i, j));
    }
    for (std::size_t j = 0; j < inst.ny(); ++j) CHECK(back.nu.weight(j) == inst.nu.weight(j));
  }
  SUBCASE("generator document") {
    const auto a = instance_from_json(json{{"generator", "left_curtain"}, {"n", 12}});
    CHECK(a.nx() == 12);
  }
  SUBCASE("config defaults and overrides") {
    const auto c = run_config_from_json(json::parse(R"({"schedule": {"alpha": 0.5}})"));
    CHECK(c.schedule.alpha == 0.5);
    CHECK(c.schedule.eps_factor == ScheduleConfig{}.eps_factor);
    const auto again = run_config_from_json(json{{"schedule", to_json(c.schedule)}});
    CHECK(again.schedule.alpha == 0.5);
    CHECK(again.schedule.proximal_anchor == c.schedule.proximal_anchor);
  }
}

TEST_CASE("export_coupling") {
  SUBCASE("point mass at zero") {
    auto inst = share(MotInstance(measure1d({0}, {1}), measure1d({-1, 1}, {0.5, 0.5}),
                                  CostSpec::tabulated(1, 2, {0.3, -0.2})));
    EntropicProblem p(inst, 0.1);
    NewtonConfig cfg;
    cfg.grad_tol = 1e-12;
    auto r = run_newton(p, std::vector<double>(2, 0.0), cfg);
    std::stringstream ss;
    export_coupling(ss, p, r.state.dual);
    const auto rows = read_coupling(ss);
    REQUIRE(rows.size() == 2);
    for (const auto& e : rows) CHECK(e.p == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("re-import reproduces marginals") {
    std::mt19937_64 rng(8);
    auto inst = share(testutil::random_pair(rng, 8, 11));
    EntropicProblem p(inst, 0.05);
    NewtonConfig cfg;
    cfg.grad_tol = 1e-10;
    auto r = run_newton(p, std::vector<double>(11, 0.0), cfg);
    const auto ks = kernel_stats(p, r.state.dual);
    std::stringstream ss;
    export_coupling(ss, p, r.state.dual, 0.0);
    const auto rows = read_coupling(ss);
    std::map<double, double> mx, my;
    for (const auto& e : rows) {
      mx[e.x[0]] += e.p;
      my[e.y[0]] += e.p;
    }
    for (std::size_t i = 0; i < inst->nx(); ++i)
      CHECK(std::abs(mx[inst->mu.point(i)[0]] - ks.x_marginal[i]) <= 1e-9);
    for (std::size_t j = 0; j < inst->ny(); ++j)
      CHECK(std::abs(my[inst->nu.point(j)[0]] - ks.y_marginal[j]) <= 1e-9);
    SUBCASE("conditional slice is a probability") {
      const auto s = conditional_slice(p, r.state.dual, 3);
      double t = 0;
      for (double q : s.prob) t += q;
      CHECK(t == doctest::Approx(1.0).epsilon(1e-8));
    }
  }
}

TEST_CASE("gap_curve") {
  auto inst = share(generate_instance("left_curtain", 10));
  ScheduleConfig sched;
  const auto rows = gap_curve(inst, sched, {0.5, 0.1, 0.05},
                              {DominatorMode::kConcaveHull, DominatorMode::kSup});
  REQUIRE(rows.size() == 6);
  for (std::size_t k = 0; k < rows.size(); k += 2) {
    CHECK(rows[k].eps == rows[k + 1].eps);
    CHECK(rows[k].converged);
    CHECK(rows[k + 1].gap >= rows[k].gap - 1e-9);
    CHECK(rows[k].gap >= -1e-9);
  }
  std::stringstream ss;
  write_gap_csv(ss, rows);
  std::string header;
  std::getline(ss, header);
  CHECK(header == "eps,gap,gap_over_eps,mode");
  CHECK_THROWS(gap_curve(inst, sched, {0.1, 0.5}, {DominatorMode::kSup}));
}

TEST_CASE("nearest_point") {
  const auto m = DiscreteMeasure(2, {0, 0, 1, 0, 0, 1}, {0.2, 0.3, 0.5});
  const double q[] = {0.9, 0.2};
  CHECK(m.point(nearest_point(m, q))[0] == 1.0);
}
