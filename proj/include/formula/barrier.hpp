#pragma once

#include "formula/types.hpp"

#include <span>

namespace formula {

struct BarrierConfig {
  double r_rob = 0.2;    // robot radius [m]
  double s = 0.3;        // safety margin [m]
  double alpha = 1.0;    // class-K slope [1/s]

  void validate() const {
    if (!(r_rob > 0.0 && s > 0.0 && alpha > 0.0))
      throw ConfigError("barrier: r_rob, s and alpha must be positive");
  }
};

/// h(p) = ||p - c||^2 - (R_rob + R_obs + s)^2.
template <typename Scalar>
Scalar h_analytic(const Eigen::Matrix<Scalar, 2, 1>& p, const Obstacle& obs,
                  const BarrierConfig& cfg) {
  const Scalar dx = p[0] - Scalar(obs.cx);
  const Scalar dy = p[1] - Scalar(obs.cy);
  const Scalar reach = Scalar(cfg.r_rob + obs.radius + cfg.s);
  return dx * dx + dy * dy - reach * reach;
}

inline double h_analytic(const Vec2& p, const Obstacle& obs, const BarrierConfig& cfg) {
  return h_analytic<double>(p, obs, cfg);
}

/// grad h(p) = 2 (p - c).
inline Vec2 h_gradient(const Vec2& p, const Obstacle& obs) { return 2.0 * (p - obs.center()); }

/// Affine velocity constraint a^T pdot >= b with a = grad h, b = -alpha h.
struct VelocityConstraint {
  Vec2 a;
  double b = 0.0;
};

VelocityConstraint velocity_constraint(const Vec2& p, const Obstacle& obs, const BarrierConfig& cfg);

/// Robot j seen by robot i: a circle of radius r_rob at p_j. Throws for i == j.
Obstacle pairwise_obstacle(int i, int j, std::span<const RobotState> states,
                           const BarrierConfig& cfg);

/// Distance between the robot's disk and the obstacle's disk.
inline double surface_distance(const Vec2& p, const Obstacle& obs, double r_rob) {
  return (p - obs.center()).norm() - obs.radius - r_rob;
}

}  // namespace formula
