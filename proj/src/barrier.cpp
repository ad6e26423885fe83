#include "formula/barrier.hpp"

#include <string>

namespace formula {

VelocityConstraint velocity_constraint(const Vec2& p, const Obstacle& obs,
                                       const BarrierConfig& cfg) {
  return {h_gradient(p, obs), -cfg.alpha * h_analytic(p, obs, cfg)};
}

Obstacle pairwise_obstacle(int i, int j, std::span<const RobotState> states,
                           const BarrierConfig& cfg) {
  const int n = static_cast<int>(states.size());
  if (i == j) throw ConfigError("pairwise_obstacle: a robot is not its own obstacle");
  if (i < 0 || j < 0 || i >= n || j >= n)
    throw ConfigError("pairwise_obstacle: index out of range (" + std::to_string(i) + ", " +
                      std::to_string(j) + ")");
  return {states[j].px, states[j].py, cfg.r_rob};
}

}  // namespace formula
