#pragma once

#include <Eigen/Core>
#include <vector>

namespace prism {

/// Dense real parameter vector (model estimates, features, perturbations).
using ModelVector = Eigen::VectorXd;

/// One feature-label pair of a client's data stream.
struct Sample {
  ModelVector features;
  double target = 0.0;
};

}  // namespace prism
