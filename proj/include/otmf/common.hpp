#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace otmf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Every stochastic routine takes an explicit engine; there is no global RNG.
using Rng = std::mt19937_64;

// What the network output means.
//  meanflow: average velocity over [r, t] from a point at time r.
//  cfm:      instantaneous velocity at time t (r is pinned to t).
enum class FlowMode { meanflow, cfm };

}  // namespace otmf
