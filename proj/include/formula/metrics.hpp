#pragma once

#include "formula/scenario.hpp"
#include "formula/simulation.hpp"

#include <vector>

namespace formula {

struct Metrics {
  double safety_rate = 1.0;          // fraction of rows with every surface distance >= s
  double avg_formation_error = 0.0;  // positional error norm over followers and rows [m]
  double avg_min_distance = 0.0;     // time average of the per-row minimum surface distance [m]
  bool completion = false;
  double wall_time = 0.0;  // [s]
  int n_steps = 0;
};

/// Smallest surface distance between any two robots or any robot and obstacle,
/// +inf when there is no pair.
double min_surface_distance(const std::vector<RobotState>& robots, const Scenario& scenario);

/// Uses the scenario's obstacles, robot radius and safety distance, so a log can be
/// re-scored against a modified scenario. Penetration counts as distance 0 in the
/// average. Throws ConfigError on an empty log.
Metrics compute_metrics(const RolloutLog& log, const Scenario& scenario);

}  // namespace formula
