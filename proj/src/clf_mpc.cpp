#include "formula/clf_mpc.hpp"

#include "formula/dynamics.hpp"
#include "formula/sqp.hpp"
#include "rollout.hpp"

#include <cmath>

namespace formula {
namespace {

Eigen::VectorXd pack(std::span<const ControlInput> seq) {
  Eigen::VectorXd u(2 * seq.size());
  for (std::size_t k = 0; k < seq.size(); ++k) {
    u[2 * k] = seq[k].a;
    u[2 * k + 1] = seq[k].omega;
  }
  return u;
}

std::vector<ControlInput> unpack(const Eigen::VectorXd& u) {
  std::vector<ControlInput> seq(u.size() / 2);
  for (std::size_t k = 0; k < seq.size(); ++k) seq[k] = {u[2 * k], u[2 * k + 1]};
  return seq;
}

void evaluate_clf(const RobotState& x0, const RobotState& xhat, const Vec4& xhat_dot,
                  const ClfMpcConfig& cfg, const Eigen::VectorXd& u, SqpEvaluation& ev) {
  const int horizon = cfg.horizon_steps;
  const double dt = cfg.dt;
  const double sqrt_dt = std::sqrt(dt);
  ev.residual = sqrt_dt * u;
  ev.residual_jacobian = sqrt_dt * Eigen::MatrixXd::Identity(2 * horizon, 2 * horizon);
  ev.constraint.resize(horizon);
  ev.constraint_jacobian.resize(horizon, 2 * horizon);

  const auto roll = detail::rollout_with_sensitivity(x0, u, dt, cfg.limits);
  const Mat42 g = actuation<double>();
  for (int k = 1; k <= horizon; ++k) {
    const RobotState& xk = roll.states[k];
    const Eigen::MatrixXd& sk = roll.jacobian[k];
    const int j = k - 1;  // input held over the interval ending at step k
    const RobotState xhat_k = RobotState::from(xhat.vec() + (k * dt) * xhat_dot);
    const FormationError e = formation_error(xk, xhat_k);
    const Vec4 rel_rate = state_derivative(xk, detail::input_at(u, j)) - xhat_dot;

    ev.constraint[k - 1] = 2.0 * e.dot(rel_rate) + cfg.beta * e.squaredNorm();
    Eigen::RowVectorXd grad = 2.0 * rel_rate.transpose() * sk;
    grad.noalias() += 2.0 * e.transpose() * drift_jacobian(xk) * sk;
    grad.segment(2 * j, 2) += 2.0 * e.transpose() * g;
    grad.noalias() += 2.0 * cfg.beta * e.transpose() * sk;
    ev.constraint_jacobian.row(k - 1) = grad;
  }
}

}  // namespace

void ClfMpcConfig::validate() const {
  if (horizon_steps < 1) throw ConfigError("clf_mpc: horizon_steps must be >= 1");
  if (!(dt > 0.0)) throw ConfigError("clf_mpc: dt must be positive");
  if (!(beta > 0.0)) throw ConfigError("clf_mpc: beta must be positive");
  if (!(slack_weight > 0.0)) throw ConfigError("clf_mpc: slack_weight must be positive");
  if (slack_linear_weight < 0.0) throw ConfigError("clf_mpc: slack_linear_weight must be >= 0");
  limits.validate();
}

double effort_cost(std::span<const ControlInput> u_seq, double dt) {
  double total = 0.0;
  for (const auto& u : u_seq) total += (u.a * u.a + u.omega * u.omega) * dt;
  return total;
}

std::vector<ControlInput> shift_sequence(std::span<const ControlInput> u_seq) {
  std::vector<ControlInput> out(u_seq.begin(), u_seq.end());
  if (out.size() > 1) {
    std::copy(out.begin() + 1, out.end(), out.begin());
  }
  return out;
}

std::vector<double> clf_constraint_values(const RobotState& x, const RobotState& xhat,
                                          const Vec4& xhat_dot, std::span<const ControlInput> u_seq,
                                          const ClfMpcConfig& cfg) {
  ClfMpcConfig local = cfg;
  local.horizon_steps = static_cast<int>(u_seq.size());
  SqpEvaluation ev;
  evaluate_clf(x, xhat, xhat_dot, local, pack(u_seq), ev);
  return {ev.constraint.data(), ev.constraint.data() + ev.constraint.size()};
}

MpcSolution solve_clf_mpc(const RobotState& x, const RobotState& xhat, const Vec4& xhat_dot,
                          const ClfMpcConfig& cfg,
                          std::optional<std::span<const ControlInput>> warm_start) {
  cfg.validate();
  if (!x.finite() || !xhat.finite() || !xhat_dot.allFinite())
    throw NumericalError("clf_mpc: non-finite state");
  const int horizon = cfg.horizon_steps;

  SqpProblem problem;
  problem.lower.resize(2 * horizon);
  problem.upper.resize(2 * horizon);
  for (int k = 0; k < horizon; ++k) {
    problem.lower[2 * k] = cfg.limits.a_min;
    problem.lower[2 * k + 1] = cfg.limits.omega_min;
    problem.upper[2 * k] = cfg.limits.a_max;
    problem.upper[2 * k + 1] = cfg.limits.omega_max;
  }
  problem.slack_quadratic = cfg.slack_weight;
  problem.slack_linear = cfg.slack_linear_weight;
  problem.shared_slack = false;
  problem.evaluate = [&](const Eigen::VectorXd& u, SqpEvaluation& ev) {
    evaluate_clf(x, xhat, xhat_dot, cfg, u, ev);
  };

  Eigen::VectorXd u0 = Eigen::VectorXd::Zero(2 * horizon);
  if (warm_start && static_cast<int>(warm_start->size()) == horizon) u0 = pack(*warm_start);

  SqpOptions options;
  options.max_iterations = cfg.max_iterations;
  options.tolerance = cfg.tolerance;
  const SqpResult res = solve_sqp(problem, u0, options);

  MpcSolution sol;
  sol.u_seq = unpack(res.z);
  for (auto& u : sol.u_seq) u = cfg.limits.clamp(u);
  sol.cost = effort_cost(sol.u_seq, cfg.dt);
  sol.clf_slack = res.slack;
  sol.feasible = res.converged;
  sol.iterations = res.iterations;
  return sol;
}

}  // namespace formula
