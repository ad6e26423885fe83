#include "formula/deadlock.hpp"

#include <cmath>
#include <limits>

namespace formula {

void DeadlockConfig::validate() const {
  if (!(rotation_angle > 0.0 && rotation_angle <= std::numbers::pi / 2.0))
    throw ConfigError("deadlock: rotation_angle must lie in (0, pi/2]");
  if (!(scale > 0.0)) throw ConfigError("deadlock: scale must be positive");
  if (cooldown_steps < 1) throw ConfigError("deadlock: cooldown_steps must be >= 1");
  if (deadband < 0.0) throw ConfigError("deadlock: deadband must be >= 0");
}

int sign_with_deadband(double x, double band) {
  if (std::abs(x) <= band) return 0;
  return x > 0.0 ? 1 : -1;
}

int indicator(double j_clf, double l_cbf, double v, double deadband) {
  return sign_with_deadband(std::abs(j_clf - l_cbf) + std::abs(v), deadband) -
         sign_with_deadband(j_clf, deadband);
}

RobotState perturb_nominal(const RobotState& x, const RobotState& xhat,
                           const DeadlockConfig& cfg) {
  const double c = std::cos(cfg.rotation_angle);
  const double s = std::sin(cfg.rotation_angle);
  const double dx = xhat.px - x.px;
  const double dy = xhat.py - x.py;
  RobotState out = xhat;
  out.px = x.px + cfg.scale * (c * dx - s * dy);
  out.py = x.py + cfg.scale * (s * dx + c * dy);
  return out;
}

DeadlockResolver::DeadlockResolver(int n_robots, DeadlockConfig cfg)
    : cfg_(cfg), window_start_(static_cast<std::size_t>(n_robots), std::numeric_limits<int>::min()) {
  cfg_.validate();
}

bool DeadlockResolver::active(int i, int step) const {
  const int start = window_start_.at(static_cast<std::size_t>(i));
  return start != std::numeric_limits<int>::min() && step >= start &&
         step < start + cfg_.cooldown_steps;
}

RobotState DeadlockResolver::held_nominal(int i, int step, const RobotState& x,
                                          const RobotState& xhat) const {
  if (cfg_.hold && active(i, step) && window_start_.at(static_cast<std::size_t>(i)) < step)
    return perturb_nominal(x, xhat, cfg_);
  return xhat;
}

std::vector<RobotState> DeadlockResolver::resolve(int step, double time,
                                                  std::span<const DeadlockProbe> probes,
                                                  std::span<const RobotState> states,
                                                  std::span<const RobotState> nominal) {
  const std::size_t n = window_start_.size();
  if (probes.size() != n || states.size() != n || nominal.size() != n)
    throw ConfigError("deadlock: per-robot arrays must match the robot count");
  std::vector<RobotState> out(nominal.begin(), nominal.end());
  for (std::size_t i = 0; i < n; ++i) {
    const int idx = static_cast<int>(i);
    if (active(idx, step)) {
      out[i] = held_nominal(idx, step, states[i], nominal[i]);
      continue;
    }
    if (indicator(probes[i].j_clf, probes[i].l_cbf, states[i].v, cfg_.deadband) < 0) {
      window_start_[i] = step;
      triggers_.push_back({step, time, idx});
      out[i] = perturb_nominal(states[i], nominal[i], cfg_);
    }
  }
  return out;
}

}  // namespace formula
