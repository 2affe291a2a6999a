#pragma once

#include <Eigen/Dense>

#include <functional>

namespace uace {

// Objective returning f(x) and writing the gradient into `grad`.
using GradientObjective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

struct LbfgsOptions {
  int max_iterations = 5000;
  int history = 10;
  double gradient_tolerance = 1e-7;  // on the max-abs gradient entry
};

struct LbfgsResult {
  Eigen::VectorXd x;
  double value = 0;
  double gradient_norm = 0;  // max-abs entry at the returned point
  int iterations = 0;
  bool converged = false;
};

// Limited-memory BFGS with Armijo backtracking. Deterministic.
LbfgsResult minimize_lbfgs(const GradientObjective& f, Eigen::VectorXd x0,
                           const LbfgsOptions& options = {});

}  // namespace uace
