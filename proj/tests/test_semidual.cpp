#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "mot/lp.hpp"
#include "mot/newton.hpp"
#include "mot/semidual.hpp"

using namespace mot;
using testutil::measure1d;

TEST_CASE("semidual_value_and_subgradient") {
  SUBCASE("symmetric dip") {
    MotInstance inst(measure1d({0}, {1}), measure1d({-1, 1}, {0.5, 0.5}),
                     CostSpec::tabulated(1, 2, {0, 0}));
    const std::vector<double> psi{0, 0};
    const auto it = semidual_value_and_subgradient(inst, psi);
    CHECK(std::abs(it.value) < 1e-12);
    CHECK(std::abs(it.subgradient[0]) < 1e-12);
    CHECK(std::abs(it.subgradient[1]) < 1e-12);
  }
  std::mt19937_64 rng(61);
  const auto inst = testutil::random_pair(rng, 10, 15);
  const auto lp = solve_mot_lp(inst);
  REQUIRE(lp.status == LpStatus::kOptimal);
  SUBCASE("translation invariance, bounds and weak duality") {
    std::normal_distribution<double> g(0, 0.5);
    for (int t = 0; t < 20; ++t) {
      std::vector<double> psi(15);
      for (auto& v : psi) v = g(rng);
      const auto a = semidual_value_and_subgradient(inst, psi);
      auto shifted = psi;
      for (auto& v : shifted) v += 0.37;
      const auto b = semidual_value_and_subgradient(inst, shifted);
      CHECK(std::abs(a.value - b.value) <= 1e-10);
      double sum = 0;
      for (double v : a.subgradient) {
        CHECK(std::abs(v) <= 1.0 + 1e-12);
        sum += v;
      }
      CHECK(std::abs(sum) <= 1e-10);
      CHECK(a.value >= lp.value - 1e-9);
      // subgradient inequality against a second point
      std::vector<double> q(15);
      for (auto& v : q) v = g(rng);
      const auto c = semidual_value_and_subgradient(inst, q);
      double lin = a.value;
      for (std::size_t j = 0; j < 15; ++j) lin += a.subgradient[j] * (q[j] - psi[j]);
      CHECK(c.value >= lin - 1e-9);
    }
  }
  SUBCASE("entropic psi nearly closes the gap") {
    const double eps = 1e-3;
    auto sp = testutil::share(inst);
    EntropicProblem p(sp, eps);
    NewtonConfig cfg;
    cfg.grad_tol = 1e-9;
    // warm up along a few epsilons
    std::vector<double> psi(15, 0.0), h;
    for (double e : {1.0, 0.3, 0.1, 0.03, 0.01, 3e-3, 1e-3}) {
      EntropicProblem q(sp, e);
      auto r = run_newton(q, psi, cfg, h);
      psi = r.state.psi();
      h = r.state.dual.h;
    }
    const auto it = semidual_value_and_subgradient(inst, psi);
    CHECK(it.value >= lp.value - 1e-9);
    CHECK(it.value - lp.value <= 3 * eps * std::log(150.0));
  }
}

TEST_CASE("run_subgradient_descent") {
  std::mt19937_64 rng(62);
  const auto inst = testutil::random_pair(rng, 20, 20);
  const auto lp = solve_mot_lp(inst);
  REQUIRE(lp.status == LpStatus::kOptimal);
  SUBCASE("n_max = 0") {
    const std::vector<double> psi0(20, 0.1);
    const auto r = run_subgradient_descent(inst, psi0, {1.0, 0, 0.0});
    CHECK(r.best.psi == psi0);
    CHECK(r.best.value == doctest::Approx(semidual_value_and_subgradient(inst, psi0).value));
  }
  SUBCASE("reaches the LP value to 1e-1 in 1e4 steps") {
    const auto r = run_subgradient_descent(inst, std::vector<double>(20, 0.0), {1.0, 10000, 0.0});
    CHECK(r.best.value >= lp.value - 1e-9);
    CHECK(r.best.value - lp.value <= 1e-1);
    double lowest = 1e300;
    for (const auto& rec : r.log) lowest = std::min(lowest, rec.value);
    CHECK(r.best.value == doctest::Approx(lowest).epsilon(1e-14));
  }
}
