#pragma once

#include <vector>

#include "mot/entropic.hpp"
#include "mot/newton.hpp"

// Single-threaded reference versions of the parallel kernels, written
// straight from the definitions. Used by the tests and the benchmark.
namespace mot::serial {

std::vector<double> update_phi(const EntropicProblem& prob, const DualState& state);
std::vector<double> update_psi(const EntropicProblem& prob, const DualState& state);
long update_phi_h(const EntropicProblem& prob, DualState& state);
std::vector<double> y_marginal(const EntropicProblem& prob, const DualState& state);
double dual_value(const EntropicProblem& prob, const DualState& state);
// Builds and inverts each (d+1) block from scratch.
std::vector<double> hvp_tilde_v(const EntropicProblem& prob, const ImpliedState& is,
                                std::span<const double> v);

}  // namespace mot::serial
