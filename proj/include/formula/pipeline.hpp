#pragma once

#include "formula/barrier.hpp"
#include "formula/clf_mpc.hpp"
#include "formula/safety_filter.hpp"

#include <optional>
#include <span>
#include <vector>

namespace formula {

/// Nominal MPC-CLF input followed by the barrier safety projection. Used with the
/// learned barrier by the proposed controller and with the analytic barrier (and a
/// one-step horizon) by the CLF+CBF-QP baseline.
struct SafeStepResult {
  MpcSolution nominal;
  std::vector<HalfspaceConstraint> constraints;
  FilterResult filter;
};

SafeStepResult safe_formation_step(
    const RobotState& x, const RobotState& xhat, const Vec4& xhat_dot,
    std::span<const Obstacle> entities, const ClfMpcConfig& clf, const BarrierModel& barrier,
    const BarrierConfig& barrier_cfg, double sensing_radius = kDefaultSensingRadius,
    std::optional<std::span<const ControlInput>> warm_start = std::nullopt);

/// Safety intervention measured in the units of the MPC-CLF cost:
/// sum_k ||u_hat_k - u_checked||^2 dt. Equals the CLF cost when the filter stops the robot.
double intervention_cost(const MpcSolution& nominal, const ControlInput& u_checked, double dt);

}  // namespace formula
