#pragma once

#include <Eigen/Core>

namespace formula {

struct DenseQpOptions {
  int max_iterations = 60;
  double tolerance = 1e-10;
};

struct DenseQpResult {
  Eigen::VectorXd z;
  Eigen::VectorXd multipliers;
  bool converged = false;
  int iterations = 0;
};

/// Solves min 0.5 z'Hz + g'z  s.t.  A z <= b  with a Mehrotra predictor-corrector
/// interior-point method. H must be symmetric positive definite.
DenseQpResult solve_dense_qp(const Eigen::MatrixXd& H, const Eigen::VectorXd& g,
                             const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                             const DenseQpOptions& options = {});

}  // namespace formula
