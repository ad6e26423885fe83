#pragma once

#include "formula/barrier.hpp"
#include "formula/clf_mpc.hpp"
#include "formula/pipeline.hpp"
#include "formula/types.hpp"

#include <optional>
#include <span>
#include <vector>

namespace formula {

struct ApfConfig {
  double k_att = 1.0;
  double k_rep = 0.5;
  double rho0 = 1.0;  // repulsion cutoff on surface distance [m]
  double v_gain = 1.0;

  void validate() const {
    if (!(k_att > 0.0 && k_rep > 0.0 && rho0 > 0.0 && v_gain > 0.0))
      throw ConfigError("apf: gains and cutoff must be positive");
  }
};

/// Attraction to the nominal position plus Khatib repulsion from every entity whose
/// surface distance is below rho0.
Vec2 apf_force(const Vec2& p, const Vec2& p_target, std::span<const Obstacle> entities,
               double r_rob, const ApfConfig& cfg);

/// Force scaled by v_gain, capped at v_max and mapped to (a, omega).
ControlInput apf_control(const RobotState& x, const RobotState& xhat,
                         std::span<const Obstacle> obstacles, std::span<const Obstacle> neighbors,
                         double r_rob, const ApfConfig& cfg, const Limits& limits, double dt);

struct MpcCbfConfig {
  int horizon_steps = 10;
  double dt = 0.05;
  Vec4 state_weight = Vec4(10.0, 10.0, 1.0, 1.0);
  Vec2 input_weight = Vec2(1.0, 1.0);
  double alpha = 1.0;
  double slack_weight = 1e4;
  double slack_linear_weight = 1e3;
  int max_iterations = 200;
  double tolerance = 1e-8;
  BarrierConfig barrier;

  void validate() const;
};

struct MpcCbfResult {
  ControlInput u;
  std::vector<ControlInput> u_seq;
  double cbf_slack = 0.0;
  bool converged = false;
};

/// Tracking MPC with discrete CBF constraints h(p_{k+1}) >= (1 - alpha dt) h(p_k) for
/// every obstacle, at each step whose successor position depends on the inputs.
MpcCbfResult mpc_cbf_control(const RobotState& x, const RobotState& xhat, const Vec4& xhat_dot,
                             std::span<const Obstacle> obstacles, const MpcCbfConfig& cfg,
                             const Limits& limits,
                             std::optional<std::span<const ControlInput>> warm_start = std::nullopt);

/// One-step CLF nominal input projected with the analytic barrier.
SafeStepResult clf_cbf_qp_control(const RobotState& x, const RobotState& xhat,
                                  const Vec4& xhat_dot, std::span<const Obstacle> entities,
                                  const ClfMpcConfig& clf, const BarrierConfig& barrier_cfg,
                                  double sensing_radius = kDefaultSensingRadius);

}  // namespace formula
