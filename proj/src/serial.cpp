#include "mot/serial.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace mot::serial {

std::vector<double> update_phi(const EntropicProblem& prob, const DualState& state) {
  std::vector<double> phi(prob.nx());
  const auto& act = prob.active;
  std::vector<double> t;
  for (std::size_t i = 0; i < prob.nx(); ++i) {
    t.clear();
    for (std::size_t pos = act.row_begin(i); pos < act.row_end(i); ++pos) {
      const std::size_t j = act.y_at(pos);
      // delta with phi removed
      t.push_back(-(delta(prob, state, i, j) - state.phi[i]) / prob.epsilon);
    }
    phi[i] = prob.epsilon * stabilized_log_mean(t, -std::log(prob.inst->mu.weight(i)));
  }
  return phi;
}

std::vector<double> update_psi(const EntropicProblem& prob, const DualState& state) {
  std::vector<double> psi(prob.ny());
  const auto& act = prob.active;
  std::vector<std::vector<double>> terms(prob.ny());
  for (std::size_t i = 0; i < prob.nx(); ++i)
    for (std::size_t pos = act.row_begin(i); pos < act.row_end(i); ++pos) {
      const std::size_t j = act.y_at(pos);
      terms[j].push_back(-(delta(prob, state, i, j) - state.psi[j]) / prob.epsilon);
    }
  for (std::size_t j = 0; j < prob.ny(); ++j)
    psi[j] = prob.epsilon * stabilized_log_mean(terms[j], -std::log(prob.inst->nu.weight(j)));
  return psi;
}

long update_phi_h(const EntropicProblem& prob, DualState& state) {
  const std::size_t d = prob.dim();
  DualState next = state;
  long iters = 0;
  for (std::size_t i = 0; i < prob.nx(); ++i) {
    const auto u = update_h(prob, state, i, state.h_at(i));
    next.phi[i] = u.phi_x;
    for (std::size_t q = 0; q < d; ++q) next.h[i * d + q] = u.h_x[q];
    iters += u.iterations;
  }
  state = std::move(next);
  return iters;
}

std::vector<double> y_marginal(const EntropicProblem& prob, const DualState& state) {
  std::vector<double> m(prob.ny(), 0.0);
  const auto& act = prob.active;
  for (std::size_t i = 0; i < prob.nx(); ++i)
    for (std::size_t pos = act.row_begin(i); pos < act.row_end(i); ++pos) {
      const std::size_t j = act.y_at(pos);
      m[j] += std::exp(-delta(prob, state, i, j) / prob.epsilon);
    }
  return m;
}

double dual_value(const EntropicProblem& prob, const DualState& state) {
  long double v = 0.0L;
  for (std::size_t i = 0; i < prob.nx(); ++i) v += prob.inst->mu.weight(i) * state.phi[i];
  for (std::size_t j = 0; j < prob.ny(); ++j) v += prob.inst->nu.weight(j) * state.psi[j];
  const auto& act = prob.active;
  for (std::size_t i = 0; i < prob.nx(); ++i)
    for (std::size_t pos = act.row_begin(i); pos < act.row_end(i); ++pos)
      v += prob.epsilon * std::exp(-delta(prob, state, i, act.y_at(pos)) / prob.epsilon);
  return static_cast<double>(v);
}

std::vector<double> hvp_tilde_v(const EntropicProblem& prob, const ImpliedState& is,
                                std::span<const double> v) {
  const std::size_t d = prob.dim(), b = d + 1;
  const auto& act = prob.active;
  std::vector<double> out(prob.ny(), 0.0);
  for (std::size_t j = 0; j < prob.ny(); ++j) out[j] = is.y_marg[j] * v[j];
  for (std::size_t i = 0; i < prob.nx(); ++i) {
    const auto x = prob.inst->mu.point(i);
    const std::size_t r = act.row_end(i) - act.row_begin(i);
    Eigen::MatrixXd bx(b, r);
    for (std::size_t k = 0; k < r; ++k) {
      const std::size_t pos = act.row_begin(i) + k;
      const auto y = prob.inst->nu.point(act.y_at(pos));
      bx(0, k) = is.p[pos];
      for (std::size_t q = 0; q < d; ++q) bx(q + 1, k) = is.p[pos] * (y[q] - x[q]);
    }
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(b, b);
    for (std::size_t k = 0; k < r; ++k) {
      const std::size_t pos = act.row_begin(i) + k;
      const auto y = prob.inst->nu.point(act.y_at(pos));
      Eigen::VectorXd u(b);
      u[0] = 1.0;
      for (std::size_t q = 0; q < d; ++q) u[q + 1] = y[q] - x[q];
      m += is.p[pos] * u * u.transpose();
    }
    Eigen::VectorXd vx(r);
    for (std::size_t k = 0; k < r; ++k) vx[k] = v[act.y_at(act.row_begin(i) + k)];
    const Eigen::VectorXd z = bx.transpose() * m.completeOrthogonalDecomposition().solve(bx * vx);
    for (std::size_t k = 0; k < r; ++k) out[act.y_at(act.row_begin(i) + k)] -= z[k];
  }
  for (double& o : out) o /= prob.epsilon;
  if (prob.penalization)
    for (std::size_t j = 0; j < prob.ny(); ++j)
      out[j] += prob.penalization->alpha * prob.penalization->a[j] * v[j];
  return out;
}

}  // namespace mot::serial
