#pragma once

#include "formula/types.hpp"

#include <Eigen/Core>

namespace formula {

/// Drift field f(x) = [v cos(theta), v sin(theta), 0, 0] of the unicycle with speed state.
template <typename Scalar>
Vector4<Scalar> drift(const Vector4<Scalar>& x) {
  using std::cos;
  using std::sin;
  return {x[3] * cos(x[2]), x[3] * sin(x[2]), Scalar(0), Scalar(0)};
}

/// Input matrix g(x). Row 2 selects omega, row 3 selects a; it does not depend on x.
template <typename Scalar>
Eigen::Matrix<Scalar, 4, 2> actuation() {
  Eigen::Matrix<Scalar, 4, 2> g = Eigen::Matrix<Scalar, 4, 2>::Zero();
  g(2, 1) = Scalar(1);
  g(3, 0) = Scalar(1);
  return g;
}

inline Vec4 drift(const RobotState& x) { return drift<double>(x.vec()); }
inline Mat42 actuation(const RobotState& /*x*/) { return actuation<double>(); }

/// Full state derivative f(x) + g(x) u.
inline Vec4 state_derivative(const RobotState& x, const ControlInput& u) {
  return drift(x) + actuation(x) * u.vec();
}

/// Jacobian of the drift field with respect to the state.
Eigen::Matrix4d drift_jacobian(const RobotState& x);

/// One forward-Euler step: clamps u, integrates, clamps the resulting speed.
/// Throws NumericalError on non-finite input and ConfigError for dt <= 0.
RobotState step(const RobotState& x, const ControlInput& u, double dt, const Limits& limits);

}  // namespace formula
