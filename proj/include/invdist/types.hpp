#pragma once

#include <Eigen/Dense>

namespace invdist {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// A point of the state space E = R^d (x {0..M0-1} for switching models).
/// `regime` is 0 for models without switching.
struct State {
  Vector x;
  int regime = 0;
};

}  // namespace invdist
