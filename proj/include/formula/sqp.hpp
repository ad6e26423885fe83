#pragma once

#include <Eigen/Core>

#include <functional>

namespace formula {

/// Values and Jacobians of a least-squares objective ||r(z)||^2 and of the
/// constraints c(z) <= delta.
struct SqpEvaluation {
  Eigen::VectorXd residual;
  Eigen::MatrixXd residual_jacobian;
  Eigen::VectorXd constraint;
  Eigen::MatrixXd constraint_jacobian;
};

/// Box-bounded nonlinear least squares with softened inequality constraints:
///
///   min ||r(z)||^2 + sum_i (slack_quadratic * delta_i^2 + slack_linear * delta_i)
///   s.t. c(z) <= delta, delta >= 0, lower <= z <= upper,
///
/// with one slack shared by all rows or one slack per row.
struct SqpProblem {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  double slack_quadratic = 1e3;
  double slack_linear = 0.0;
  bool shared_slack = true;
  std::function<void(const Eigen::VectorXd&, SqpEvaluation&)> evaluate;
};

struct SqpOptions {
  int max_iterations = 200;
  double tolerance = 1e-8;
  double initial_trust_radius = 1.0;
  /// Stop when five iterations improve the merit by less than this, relative.
  double stall_tolerance = 1e-6;
};

struct SqpResult {
  Eigen::VectorXd z;
  double objective = 0.0;  // ||r(z)||^2, slack term excluded
  double slack = 0.0;      // max(0, max_k c_k(z))
  bool converged = false;
  int iterations = 0;
};

/// Gauss-Newton SQP with a box trust region and a backtracking line search on the
/// exact-penalty merit. Each subproblem is a dense QP.
SqpResult solve_sqp(const SqpProblem& problem, Eigen::VectorXd z0, const SqpOptions& options = {});

}  // namespace formula
