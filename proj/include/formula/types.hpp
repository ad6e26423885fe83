#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace formula {

using Vec2 = Eigen::Vector2d;
using Vec4 = Eigen::Vector4d;
using Mat42 = Eigen::Matrix<double, 4, 2>;

template <typename Scalar>
using Vector4 = Eigen::Matrix<Scalar, 4, 1>;

/// Thrown for malformed configurations, shapes or files.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a numerical routine produces non-finite values.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Wraps an angle to (-pi, pi].
template <typename Scalar>
Scalar wrap_angle(Scalar angle) {
  const Scalar pi = std::numbers::pi_v<Scalar>;
  Scalar wrapped = std::remainder(angle, Scalar(2) * pi);
  if (wrapped <= -pi) wrapped += Scalar(2) * pi;
  return wrapped;
}

/// Pose and forward speed of one robot. theta is an unwrapped accumulator.
struct RobotState {
  double px = 0.0;
  double py = 0.0;
  double theta = 0.0;
  double v = 0.0;

  Vec4 vec() const { return {px, py, theta, v}; }
  Vec2 position() const { return {px, py}; }
  static RobotState from(const Vec4& x) { return {x[0], x[1], x[2], x[3]}; }
  bool finite() const {
    return std::isfinite(px) && std::isfinite(py) && std::isfinite(theta) && std::isfinite(v);
  }
  friend bool operator==(const RobotState&, const RobotState&) = default;
};

/// Longitudinal acceleration and turn rate.
struct ControlInput {
  double a = 0.0;
  double omega = 0.0;

  Vec2 vec() const { return {a, omega}; }
  static ControlInput from(const Vec2& u) { return {u[0], u[1]}; }
  bool finite() const { return std::isfinite(a) && std::isfinite(omega); }
  friend bool operator==(const ControlInput&, const ControlInput&) = default;
};

struct Limits {
  double a_min = -2.0;
  double a_max = 2.0;
  double omega_min = -2.0;
  double omega_max = 2.0;
  double v_min = 0.0;
  double v_max = 1.5;

  void validate() const {
    if (!(a_min <= a_max && omega_min <= omega_max && v_min <= v_max))
      throw ConfigError("limits: every min must not exceed its max");
  }
  ControlInput clamp(const ControlInput& u) const {
    return {std::clamp(u.a, a_min, a_max), std::clamp(u.omega, omega_min, omega_max)};
  }
  double clamp_speed(double v) const { return std::clamp(v, v_min, v_max); }
};

/// Circular obstacle. Neighbouring robots are represented the same way.
struct Obstacle {
  double cx = 0.0;
  double cy = 0.0;
  double radius = 0.0;

  Vec2 center() const { return {cx, cy}; }
  friend bool operator==(const Obstacle&, const Obstacle&) = default;
};

}  // namespace formula
