#pragma once

// Euler rollout of an input sequence together with the state sensitivities
// dx_k/du used by the MPC Jacobians.

#include "formula/dynamics.hpp"
#include "formula/types.hpp"

#include <Eigen/Core>

#include <vector>

namespace formula::detail {

struct SensitivityRollout {
  std::vector<RobotState> states;         // x_0 .. x_N
  std::vector<Eigen::MatrixXd> jacobian;  // 4 x 2N, d x_k / d u
};

inline ControlInput input_at(const Eigen::VectorXd& u, int k) {
  return {u[2 * k], u[2 * k + 1]};
}

inline SensitivityRollout rollout_with_sensitivity(const RobotState& x0, const Eigen::VectorXd& u,
                                                   double dt, const Limits& limits) {
  const int horizon = static_cast<int>(u.size() / 2);
  SensitivityRollout out;
  out.states.reserve(horizon + 1);
  out.jacobian.reserve(horizon + 1);
  out.states.push_back(x0);
  out.jacobian.push_back(Eigen::MatrixXd::Zero(4, 2 * horizon));
  const Mat42 g = actuation<double>();
  for (int k = 0; k < horizon; ++k) {
    const RobotState& x = out.states.back();
    const ControlInput uk = input_at(u, k);
    Vec4 next = x.vec() + dt * state_derivative(x, uk);
    Eigen::MatrixXd jac = out.jacobian.back() + dt * drift_jacobian(x) * out.jacobian.back();
    jac.middleCols(2 * k, 2) += dt * g;
    if (next[3] < limits.v_min || next[3] > limits.v_max) {
      next[3] = limits.clamp_speed(next[3]);
      // One-sided derivative: earlier inputs no longer move the speed, but this step's
      // acceleration still leads back inside. A zero row here stalls the solver at v = 0.
      jac.row(3).setZero();
      jac(3, 2 * k) = dt;
    }
    out.states.push_back(RobotState::from(next));
    out.jacobian.push_back(std::move(jac));
  }
  return out;
}

}  // namespace formula::detail
