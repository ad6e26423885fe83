#include "formula/baselines.hpp"

#include "formula/safety_filter.hpp"
#include "formula/sqp.hpp"
#include "rollout.hpp"

#include <cmath>

namespace formula {

Vec2 apf_force(const Vec2& p, const Vec2& p_target, std::span<const Obstacle> entities,
               double r_rob, const ApfConfig& cfg) {
  Vec2 force = cfg.k_att * (p_target - p);
  for (const auto& obs : entities) {
    const Vec2 diff = p - obs.center();
    const double dist = diff.norm();
    if (dist < 1e-9) continue;
    const double rho = std::max(dist - obs.radius - r_rob, 1e-3);
    if (rho >= cfg.rho0) continue;
    force += cfg.k_rep * (1.0 / rho - 1.0 / cfg.rho0) / (rho * rho) * (diff / dist);
  }
  return force;
}

ControlInput apf_control(const RobotState& x, const RobotState& xhat,
                         std::span<const Obstacle> obstacles, std::span<const Obstacle> neighbors,
                         double r_rob, const ApfConfig& cfg, const Limits& limits, double dt) {
  std::vector<Obstacle> entities(obstacles.begin(), obstacles.end());
  entities.insert(entities.end(), neighbors.begin(), neighbors.end());
  Vec2 w = cfg.v_gain * apf_force(x.position(), xhat.position(), entities, r_rob, cfg);
  const double speed = w.norm();
  if (speed > limits.v_max) w *= limits.v_max / speed;
  return velocity_to_input(w, x, {}, limits, dt);
}

void MpcCbfConfig::validate() const {
  if (horizon_steps < 1) throw ConfigError("mpc_cbf: horizon_steps must be >= 1");
  if (!(dt > 0.0)) throw ConfigError("mpc_cbf: dt must be positive");
  if ((state_weight.array() < 0.0).any() || (input_weight.array() < 0.0).any())
    throw ConfigError("mpc_cbf: weights must be nonnegative");
  if (!(alpha > 0.0)) throw ConfigError("mpc_cbf: alpha must be positive");
  barrier.validate();
}

MpcCbfResult mpc_cbf_control(const RobotState& x, const RobotState& xhat, const Vec4& xhat_dot,
                             std::span<const Obstacle> obstacles, const MpcCbfConfig& cfg,
                             const Limits& limits,
                             std::optional<std::span<const ControlInput>> warm_start) {
  cfg.validate();
  const int horizon = cfg.horizon_steps;
  const int n_u = 2 * horizon;
  const Vec4 q = cfg.state_weight.cwiseSqrt();
  const Vec2 r = cfg.input_weight.cwiseSqrt();
  const int n_obs = static_cast<int>(obstacles.size());
  const int n_con = n_obs * std::max(0, horizon - 1);
  const double decay = 1.0 - cfg.alpha * cfg.dt;

  SqpProblem problem;
  problem.lower.resize(n_u);
  problem.upper.resize(n_u);
  for (int k = 0; k < horizon; ++k) {
    problem.lower.segment<2>(2 * k) = Vec2(limits.a_min, limits.omega_min);
    problem.upper.segment<2>(2 * k) = Vec2(limits.a_max, limits.omega_max);
  }
  problem.slack_quadratic = cfg.slack_weight;
  problem.slack_linear = cfg.slack_linear_weight;
  problem.evaluate = [&](const Eigen::VectorXd& u, SqpEvaluation& ev) {
    const auto roll = detail::rollout_with_sensitivity(x, u, cfg.dt, limits);
    ev.residual.resize(4 * horizon + n_u);
    ev.residual_jacobian = Eigen::MatrixXd::Zero(4 * horizon + n_u, n_u);
    for (int k = 1; k <= horizon; ++k) {
      const RobotState ref = RobotState::from(xhat.vec() + (k * cfg.dt) * xhat_dot);
      const FormationError e = formation_error(roll.states[k], ref);
      ev.residual.segment<4>(4 * (k - 1)) = q.cwiseProduct(e);
      ev.residual_jacobian.middleRows(4 * (k - 1), 4) = q.asDiagonal() * roll.jacobian[k];
    }
    for (int k = 0; k < horizon; ++k) {
      ev.residual.segment<2>(4 * horizon + 2 * k) = r.cwiseProduct(u.segment<2>(2 * k));
      ev.residual_jacobian.block(4 * horizon + 2 * k, 2 * k, 2, 2) = r.asDiagonal();
    }
    ev.constraint.resize(n_con);
    ev.constraint_jacobian.resize(n_con, n_u);
    int row = 0;
    for (const auto& obs : obstacles) {
      for (int k = 1; k < horizon; ++k) {
        const Vec2 pk = roll.states[k].position();
        const Vec2 pn = roll.states[k + 1].position();
        ev.constraint[row] = decay * h_analytic(pk, obs, cfg.barrier) - h_analytic(pn, obs, cfg.barrier);
        ev.constraint_jacobian.row(row) =
            decay * h_gradient(pk, obs).transpose() * roll.jacobian[k].topRows(2) -
            h_gradient(pn, obs).transpose() * roll.jacobian[k + 1].topRows(2);
        ++row;
      }
    }
  };

  Eigen::VectorXd u0 = Eigen::VectorXd::Zero(n_u);
  if (warm_start && static_cast<int>(warm_start->size()) == horizon)
    for (int k = 0; k < horizon; ++k) u0.segment<2>(2 * k) = (*warm_start)[k].vec();

  SqpOptions options;
  options.max_iterations = cfg.max_iterations;
  options.tolerance = cfg.tolerance;
  const SqpResult res = solve_sqp(problem, u0, options);

  MpcCbfResult out;
  out.u_seq.resize(horizon);
  for (int k = 0; k < horizon; ++k) out.u_seq[k] = limits.clamp(ControlInput::from(res.z.segment<2>(2 * k)));
  out.u = out.u_seq.front();
  out.cbf_slack = res.slack;
  out.converged = res.converged;
  return out;
}

SafeStepResult clf_cbf_qp_control(const RobotState& x, const RobotState& xhat,
                                  const Vec4& xhat_dot, std::span<const Obstacle> entities,
                                  const ClfMpcConfig& clf, const BarrierConfig& barrier_cfg,
                                  double sensing_radius) {
  ClfMpcConfig one_step = clf;
  one_step.horizon_steps = 1;
  return safe_formation_step(x, xhat, xhat_dot, entities, one_step, AnalyticBarrier{}, barrier_cfg,
                             sensing_radius);
}

}  // namespace formula
