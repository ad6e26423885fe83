#include "formula/metrics.hpp"

#include <algorithm>
#include <limits>

namespace formula {

double min_surface_distance(const std::vector<RobotState>& robots, const Scenario& sc) {
  const double r = sc.barrier.r_rob;
  double d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < robots.size(); ++i) {
    const Vec2 p = robots[i].position();
    for (const auto& o : sc.obstacles) d = std::min(d, surface_distance(p, o, r));
    for (std::size_t j = i + 1; j < robots.size(); ++j)
      d = std::min(d, (p - robots[j].position()).norm() - 2.0 * r);
  }
  return d;
}

Metrics compute_metrics(const RolloutLog& log, const Scenario& sc) {
  if (log.steps.empty()) throw ConfigError("compute_metrics: empty log");
  Metrics m;
  m.n_steps = static_cast<int>(log.steps.size());
  int safe_rows = 0;
  int distance_rows = 0;
  double distance_sum = 0.0;
  double error_sum = 0.0;
  int error_count = 0;
  for (const auto& row : log.steps) {
    const double d = min_surface_distance(row.states, sc);
    if (d >= sc.safety_distance()) ++safe_rows;
    if (std::isfinite(d)) {
      distance_sum += std::max(d, 0.0);
      ++distance_rows;
    }
    for (int r = log.first_follower(); r < static_cast<int>(row.formation_error.size()); ++r) {
      error_sum += row.formation_error[r];
      ++error_count;
    }
  }
  m.safety_rate = static_cast<double>(safe_rows) / m.n_steps;
  m.avg_min_distance = distance_rows > 0 ? distance_sum / distance_rows
                                         : std::numeric_limits<double>::infinity();
  m.avg_formation_error = error_count > 0 ? error_sum / error_count : 0.0;
  m.completion = log.completed;
  m.wall_time = log.wall_time;
  return m;
}

}  // namespace formula
