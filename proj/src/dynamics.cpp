#include "formula/dynamics.hpp"

#include <cmath>

namespace formula {

Eigen::Matrix4d drift_jacobian(const RobotState& x) {
  Eigen::Matrix4d jac = Eigen::Matrix4d::Zero();
  const double c = std::cos(x.theta);
  const double s = std::sin(x.theta);
  jac(0, 2) = -x.v * s;
  jac(0, 3) = c;
  jac(1, 2) = x.v * c;
  jac(1, 3) = s;
  return jac;
}

RobotState step(const RobotState& x, const ControlInput& u, double dt, const Limits& limits) {
  if (!(dt > 0.0)) throw ConfigError("step: dt must be positive");
  if (!x.finite() || !u.finite() || !std::isfinite(dt))
    throw NumericalError("step: non-finite state or input");
  const ControlInput uc = limits.clamp(u);
  const Vec4 next = x.vec() + dt * state_derivative(x, uc);
  RobotState out = RobotState::from(next);
  out.v = limits.clamp_speed(out.v);
  return out;
}

}  // namespace formula
