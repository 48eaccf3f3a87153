#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "mot/instances.hpp"
#include "mot/newton.hpp"

using namespace mot;
using testutil::measure1d;
using testutil::share;

TEST_CASE("implicitation") {
  std::mt19937_64 rng(31);
  SUBCASE("warm re-implicitation needs no h iterations") {
    const auto inst = share(testutil::random_pair(rng, 5, 7));
    EntropicProblem p(inst, 0.1);
    const std::vector<double> psi{0.1, -0.2, 0.05, 0.3, 0.0, -0.1, 0.2};
    const auto a = implicitation(p, psi);
    const auto b = implicitation(p, psi, &a);
    CHECK(b.h_iters == 0);
    CHECK(b.value == doctest::Approx(a.value).epsilon(1e-14));
  }
  SUBCASE("point mass closed form") {
    auto inst = share(MotInstance(measure1d({0}, {1}), measure1d({-1, 1}, {0.5, 0.5}),
                                  CostSpec::tabulated(1, 2, {0, 0})));
    EntropicProblem p(inst, 0.5);
    const std::vector<double> psi{0.3, 0.3};
    const auto is = implicitation(p, psi);
    CHECK(std::abs(is.dual.h[0]) < 1e-12);
    CHECK(is.dual.phi[0] == doctest::Approx(0.5 * std::log(2 * std::exp(-0.3 / 0.5))));
  }
  SUBCASE("joint minimization over (phi, h) by Nelder-Mead on 2x3") {
    auto inst = share(MotInstance(measure1d({-0.2, 0.3}, {0.4, 0.6}),
                                  measure1d({-1, 0, 1}, {0.3, 0.3, 0.4}),
                                  CostSpec::tabulated(2, 3, {0.1, -0.3, 0.5, 0.2, 0.7, -0.4})));
    const double eps = 0.5;
    EntropicProblem p(inst, eps);
    const std::vector<double> psi{0.2, -0.1, 0.15};
    const auto is = implicitation(p, psi);
    auto f = [&](const std::vector<double>& z) {
      return (double)testutil::full_dual(*inst, eps, {z[0], z[1]}, psi, {z[2], z[3]});
    };
    auto z = testutil::nelder_mead(f, {0, 0, 0, 0}, 0.5, 4000);
    z = testutil::nelder_mead(f, z, 1e-3, 4000);
    CHECK(std::abs(f(z) - is.value) < 1e-9);
    CHECK(is.value <= f(z) + 1e-12);
  }
}

TEST_CASE("gradient and Hessian-vector product") {
  std::mt19937_64 rng(41);
  const auto inst = share(testutil::random_pair(rng, 5, 7));
  for (double eps : {1.0, 0.1, 0.01}) {
    CAPTURE(eps);
    EntropicProblem p(inst, eps);
    std::normal_distribution<double> g(0, 0.2);
    // Near the optimum; far from it the implied rows sit on d + 1 points and
    // the Hessian all but vanishes.
    NewtonConfig nc;
    nc.grad_tol = 1e-10;
    auto psi = run_newton(p, std::vector<double>(7, 0.0), nc).state.psi();
    for (auto& v : psi) v += eps * g(rng);
    const auto is = implicitation(p, psi);
    const auto grad = grad_tilde_v(p, is);
    auto V = [&](const std::vector<double>& q) { return implicitation(p, q).value; };
    for (std::size_t j = 0; j < 7; ++j) {
      std::vector<double> e(7, 0.0);
      e[j] = 1;
      const double d = 1e-5 * (1 + std::abs(psi[j]));
      const double fdv = testutil::fd(V, psi, e, d);
      CHECK(std::abs(fdv - grad[j]) <= 1e-5 * std::max(std::abs(grad[j]), 1e-2));
    }
    std::vector<double> dir(7);
    for (auto& v : dir) v = g(rng);
    const auto hv = hvp_tilde_v(p, is, dir);
    const double step = 1e-3 * eps;
    auto gp = psi, gm = psi;
    for (std::size_t j = 0; j < 7; ++j) {
      gp[j] += step * dir[j];
      gm[j] -= step * dir[j];
    }
    const auto g1 = grad_tilde_v(p, implicitation(p, gp)), g0 = grad_tilde_v(p, implicitation(p, gm));
    double scale = 0;
    for (double v : hv) scale = std::max(scale, std::abs(v));
    for (std::size_t j = 0; j < 7; ++j)
      CHECK(std::abs((g1[j] - g0[j]) / (2 * step) - hv[j]) <= 1e-4 * scale);
    // symmetry and PSD
    for (std::size_t a = 0; a < 7; ++a)
      for (std::size_t b = 0; b < a; ++b) {
        std::vector<double> ea(7, 0.0), eb(7, 0.0);
        ea[a] = 1;
        eb[b] = 1;
        CHECK(std::abs(hvp_tilde_v(p, is, ea)[b] - hvp_tilde_v(p, is, eb)[a]) <= 1e-10 * (1 + scale));
      }
    double q = 0;
    for (std::size_t j = 0; j < 7; ++j) q += dir[j] * hv[j];
    CHECK(q >= -1e-12);
    const auto zero = hvp_tilde_v(p, is, std::vector<double>(7, 0.0));
    for (double v : zero) CHECK(v == 0.0);
    // exact diagonal
    const auto diag = hessian_diagonal(p, is);
    for (std::size_t j = 0; j < 7; ++j) {
      std::vector<double> e(7, 0.0);
      e[j] = 1;
      CHECK(diag[j] == doctest::Approx(hvp_tilde_v(p, is, e)[j]).epsilon(1e-8));
    }
  }
  SUBCASE("penalty vanishes at psi = 0 and shows along constants") {
    EntropicProblem p(inst, 0.1);
    Penalization pen;
    pen.alpha = 1e-2;
    pen.a.assign(7, 1.0);
    EntropicProblem pp = p;
    pp.penalization = pen;
    const std::vector<double> zero(7, 0.0);
    const auto is = implicitation(pp, zero);
    const auto g0 = grad_tilde_v(p, is), g1 = grad_tilde_v(pp, is);
    for (std::size_t j = 0; j < 7; ++j) CHECK(g0[j] == g1[j]);
    NewtonConfig cfg;
    cfg.grad_tol = 1e-11;
    auto r = run_newton(p, zero, cfg);
    REQUIRE(r.converged);
    const std::vector<double> ones(7, 1.0);
    const auto h0 = hvp_tilde_v(p, r.state, ones), h1 = hvp_tilde_v(pp, r.state, ones);
    double q0 = 0, q1 = 0;
    for (std::size_t j = 0; j < 7; ++j) {
      q0 += h0[j];
      q1 += h1[j];
    }
    CHECK(q0 >= -1e-12);
    CHECK(q0 < 1e-6 * 5);
    CHECK(q1 == doctest::Approx(q0 + 7e-2).epsilon(1e-6));
  }
}

TEST_CASE("cg_solve") {
  const std::vector<double> g{1.0, -2.0, 0.5};
  const std::vector<double> ones(3, 1.0);
  SUBCASE("identity") {
    auto id = [](std::span<const double> v) { return std::vector<double>(v.begin(), v.end()); };
    const auto r = cg_solve(id, g, ones, 1e-12, 10);
    CHECK(r.iterations == 1);
    for (std::size_t k = 0; k < 3; ++k) CHECK(r.p[k] == doctest::Approx(g[k]));
  }
  SUBCASE("diagonal") {
    const std::vector<double> d{2.0, 5.0, 0.1};
    auto op = [&](std::span<const double> v) {
      std::vector<double> o(3);
      for (std::size_t k = 0; k < 3; ++k) o[k] = d[k] * v[k];
      return o;
    };
    const auto r = cg_solve(op, g, ones, 1e-12, 10);
    CHECK(r.iterations <= 3);
    for (std::size_t k = 0; k < 3; ++k) CHECK(r.p[k] == doctest::Approx(g[k] / d[k]));
  }
  SUBCASE("exit condition on the MOT operator") {
    std::mt19937_64 rng(2);
    const auto inst = share(testutil::random_pair(rng, 5, 7));
    EntropicProblem p(inst, 0.1);
    const auto is = implicitation(p, std::vector<double>(7, 0.0));
    const auto grad = grad_tilde_v(p, is);
    double gn = 0;
    for (double v : grad) gn += v * v;
    gn = std::sqrt(gn);
    const double eta = std::min(0.5, std::sqrt(gn));
    auto op = [&](std::span<const double> v) { return hvp_tilde_v(p, is, v); };
    const auto r = cg_solve(op, grad, hessian_diagonal(p, is), eta, 100);
    const auto hp = op(r.p);
    double res = 0, gp = 0;
    for (std::size_t k = 0; k < 7; ++k) {
      res += (hp[k] - grad[k]) * (hp[k] - grad[k]);
      gp += grad[k] * r.p[k];
    }
    CHECK(std::sqrt(res) <= eta * gn * (1 + 1e-9));
    CHECK(gp > 0);
  }
}

TEST_CASE("wolfe_line_search") {
  SUBCASE("quadratic") {
    // f(s) = s^2 at s = 1, d = 1 so the line is t -> (1 - t)^2.
    auto eval = [](double t) {
      LinePoint lp;
      lp.value = (1 - t) * (1 - t);
      lp.slope = 2 * (1 - t);  // f'(1 - t) * d
      return lp;
    };
    const auto r = wolfe_line_search(eval, 1.0, 2.0);
    CHECK(r.t >= 0.5);
    CHECK(r.t <= 2.0);
    CHECK(r.point.value <= 1.0 - 1e-4 * r.t * 2.0);
    CHECK(std::abs(r.point.slope) <= 0.9 * 2.0);
  }
  SUBCASE("unit step accepted at once") {
    int n = 0;
    auto eval = [&](double t) {
      ++n;
      LinePoint lp;
      lp.value = (1 - t) * (1 - t);
      lp.slope = 2 * (1 - t);
      return lp;
    };
    const auto r = wolfe_line_search(eval, 1.0, 2.0);
    CHECK(r.t == 1.0);
    CHECK(r.evals == 1);
    CHECK(n == 1);
  }
}

TEST_CASE("run_newton") {
  std::mt19937_64 rng(51);
  const auto inst = share(testutil::random_pair(rng, 5, 7));
  EntropicProblem p(inst, 0.05);
  NewtonConfig cfg;
  cfg.grad_tol = 1e-10;
  SUBCASE("restart at a converged point") {
    auto r = run_newton(p, std::vector<double>(7, 0.0), cfg);
    REQUIRE(r.converged);
    CHECK(r.log.monotonicity_violations(1e-13) == 0);
    auto r2 = run_newton(p, r.state.psi(), cfg, r.state.dual.h);
    CHECK(r2.iterations == 0);
  }
  SUBCASE("left curtain with penalty") {
    auto lc = share(generate_instance("left_curtain", 40));
    EntropicProblem q(lc, 1e-2);
    Penalization pen;
    pen.alpha = 1e-2;
    for (std::size_t j = 0; j < lc->ny(); ++j) pen.a.push_back(lc->nu.weight(j) * lc->nu.weight(j));
    q.penalization = pen;
    NewtonConfig c;
    c.grad_tol = 1e-6;
    auto r = run_newton(q, std::vector<double>(lc->ny(), 0.0), c);
    REQUIRE(r.converged);
    double bound = 0;
    for (std::size_t j = 0; j < lc->ny(); ++j) bound += pen.alpha * pen.a[j] * std::abs(r.state.psi()[j]);
    EntropicProblem plain(lc, 1e-2);
    CHECK(dual_summary(plain, r.state.dual).grad_error <= 1e-6 + bound + 1e-12);
  }
  SUBCASE("unique penalized minimizer") {
    EntropicProblem q = p;
    Penalization pen;
    pen.alpha = 1e-2;
    for (std::size_t j = 0; j < 7; ++j) pen.a.push_back(inst->nu.weight(j) * inst->nu.weight(j));
    q.penalization = pen;
    auto a = run_newton(q, std::vector<double>(7, 0.0), cfg);
    std::vector<double> start{1, -1, 0.5, 0.2, -0.3, 0.9, 0.0};
    auto b = run_newton(q, start, cfg);
    REQUIRE(a.converged);
    REQUIRE(b.converged);
    for (std::size_t j = 0; j < 7; ++j) CHECK(std::abs(a.state.psi()[j] - b.state.psi()[j]) < 1e-6);
    CHECK(a.negative_curvature_events == 0);
    CHECK(b.negative_curvature_events == 0);
  }
  SUBCASE("implied Newton matches full-space Newton") {
    auto small = share(testutil::random_pair(rng, 4, 5));
    const double eps = 0.2;
    EntropicProblem q(small, eps);
    Penalization pen;
    pen.alpha = 1e-2;
    pen.a.assign(5, 1.0);
    q.penalization = pen;
    NewtonConfig c;
    c.line_search = false;
    c.fixed_forcing = 1e-14;
    c.cg_max_iters = 100;
    c.grad_tol = 0.0;
    c.max_outer_iters = 5;
    c.record_iterates = true;
    const std::vector<double> psi0{0.1, -0.2, 0.0, 0.05, 0.1};
    auto r = run_newton(q, psi0, c);
    REQUIRE(r.psi_iterates.size() == 5);
    auto psi = psi0;
    for (int k = 0; k < 5; ++k) {
      psi = testutil::dense_newton_step(*small, eps, psi, pen.alpha, pen.a);
      for (std::size_t j = 0; j < 5; ++j) CHECK(std::abs(psi[j] - r.psi_iterates[k][j]) <= 1e-9);
    }
  }
}
