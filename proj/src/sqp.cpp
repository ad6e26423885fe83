#include "formula/sqp.hpp"

#include "formula/dense_qp.hpp"
#include "formula/types.hpp"

#include <algorithm>
#include <cmath>

namespace formula {
namespace {

double max_violation(const Eigen::VectorXd& c) {
  return c.size() == 0 ? 0.0 : std::max(0.0, c.maxCoeff());
}

double slack_penalty(const SqpProblem& p, const Eigen::VectorXd& delta) {
  return p.slack_quadratic * delta.squaredNorm() + p.slack_linear * delta.sum();
}

// Smallest feasible slacks for the given constraint values.
Eigen::VectorXd slack_for(const SqpProblem& p, const Eigen::VectorXd& c) {
  if (p.shared_slack) return Eigen::VectorXd::Constant(1, max_violation(c));
  return c.cwiseMax(0.0);
}

double merit(const SqpProblem& p, const SqpEvaluation& ev) {
  return ev.residual.squaredNorm() + slack_penalty(p, slack_for(p, ev.constraint));
}

}  // namespace

SqpResult solve_sqp(const SqpProblem& problem, Eigen::VectorXd z0, const SqpOptions& options) {
  const Eigen::Index n = z0.size();
  if (problem.lower.size() != n || problem.upper.size() != n || !problem.evaluate)
    throw ConfigError("sqp: bounds and start point must share a dimension");

  Eigen::VectorXd z = z0.cwiseMax(problem.lower).cwiseMin(problem.upper);
  SqpEvaluation ev;
  problem.evaluate(z, ev);
  double phi = merit(problem, ev);
  double trust = options.initial_trust_radius;

  SqpResult result;
  const Eigen::Index mc = ev.constraint.size();
  const Eigen::Index ns = problem.shared_slack ? 1 : mc;
  const Eigen::Index nv = n + ns;
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(nv, nv);
  Eigen::VectorXd g(nv);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(mc + ns + 2 * n, nv);
  Eigen::VectorXd b(mc + ns + 2 * n);
  SqpEvaluation trial;
  constexpr int kStallWindow = 5;
  double phi_window_start = phi;

  for (int it = 0; it < options.max_iterations; ++it) {
    result.iterations = it + 1;
    if (!std::isfinite(phi)) break;

    H.topLeftCorner(n, n).noalias() = 2.0 * ev.residual_jacobian.transpose() * ev.residual_jacobian;
    H.topLeftCorner(n, n).diagonal().array() += 1e-10;
    H.bottomRightCorner(ns, ns).diagonal().setConstant(std::max(2.0 * problem.slack_quadratic, 1e-8));
    g.head(n).noalias() = 2.0 * ev.residual_jacobian.transpose() * ev.residual;
    g.tail(ns).setConstant(problem.slack_linear);

    A.setZero();
    for (Eigen::Index i = 0; i < mc; ++i) {
      A.row(i).head(n) = ev.constraint_jacobian.row(i);
      A(i, n + (problem.shared_slack ? 0 : i)) = -1.0;
      b[i] = -ev.constraint[i];
    }
    for (Eigen::Index i = 0; i < ns; ++i) {
      A(mc + i, n + i) = -1.0;
      b[mc + i] = 0.0;
    }
    const Eigen::Index box = mc + ns;
    for (Eigen::Index k = 0; k < n; ++k) {
      A(box + k, k) = 1.0;
      b[box + k] = std::min(problem.upper[k] - z[k], trust);
      A(box + n + k, k) = -1.0;
      b[box + n + k] = -std::max(problem.lower[k] - z[k], -trust);
    }

    const DenseQpResult qp = solve_dense_qp(H, g, A, b);
    const Eigen::VectorXd d = qp.z.head(n);
    const Eigen::VectorXd delta = qp.z.tail(ns).cwiseMax(0.0);
    const double model =
        (ev.residual + ev.residual_jacobian * d).squaredNorm() + slack_penalty(problem, delta);
    const double predicted = phi - model;

    if (d.lpNorm<Eigen::Infinity>() <= options.tolerance ||
        predicted <= 1e-9 * (1.0 + phi)) {
      result.converged = true;
      break;
    }

    double step = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 12; ++ls) {
      const Eigen::VectorXd candidate =
          (z + step * d).cwiseMax(problem.lower).cwiseMin(problem.upper);
      problem.evaluate(candidate, trial);
      const double phi_trial = merit(problem, trial);
      if (std::isfinite(phi_trial) && phi_trial <= phi - 1e-4 * step * predicted) {
        z = candidate;
        std::swap(ev, trial);
        phi = phi_trial;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      trust *= 0.25;
      if (trust < options.tolerance) break;
      continue;
    }
    trust = step == 1.0 ? std::min(2.0 * trust, 1e3) : std::max(step * trust, 1e-6);
    if (step * d.lpNorm<Eigen::Infinity>() <= options.tolerance) {
      result.converged = true;
      break;
    }
    // Slow crawl along a curved constraint: stop once a window of accepted steps
    // gains almost nothing.
    if ((it + 1) % kStallWindow == 0) {
      if (phi_window_start - phi <= options.stall_tolerance * (1.0 + std::abs(phi))) break;
      phi_window_start = phi;
    }
  }

  result.z = z;
  result.objective = ev.residual.squaredNorm();
  result.slack = max_violation(ev.constraint);
  return result;
}

}  // namespace formula
