#pragma once

#include "formula/barrier.hpp"
#include "formula/formation.hpp"
#include "formula/types.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace formula {

struct Workspace {
  double x_min = -5.0;
  double x_max = 5.0;
  double y_min = -2.25;
  double y_max = 2.25;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  bool contains(const Vec2& p) const {
    return p[0] >= x_min && p[0] <= x_max && p[1] >= y_min && p[1] <= y_max;
  }
};

/// Straight reference path traversed at a nominal speed.
struct PathSpec {
  Vec2 start = Vec2::Zero();
  Vec2 goal = Vec2::Zero();
  double speed = 0.5;

  double length() const { return (goal - start).norm(); }
  double heading() const { return std::atan2(goal[1] - start[1], goal[0] - start[0]); }
  /// State of a point moving along the path at `speed`, stopping at the goal.
  RobotState state_at(double t) const;
};

/// A formation task: either one physical leader plus followers bound by a formation
/// graph, or (has_leader = false) robots that each track their own virtual
/// reference path.
struct Scenario {
  std::string name;
  Workspace workspace;
  std::vector<Obstacle> obstacles;
  bool has_leader = true;
  PathSpec leader_path;
  std::vector<PathSpec> references;
  std::vector<RobotState> follower_starts;
  FormationSpec formation;
  Limits limits;
  BarrierConfig barrier;  // barrier.s is the safety distance, barrier.r_rob the robot radius
  double dt = 0.05;
  double duration = 40.0;
  std::uint64_t seed = 0;

  int n_followers() const { return static_cast<int>(follower_starts.size()); }
  int n_robots() const { return n_followers() + (has_leader ? 1 : 0); }
  double safety_distance() const { return barrier.s; }

  /// Throws ConfigError when an invariant does not hold.
  void validate() const;
};

/// Names accepted by make_scenario.
std::vector<std::string> scenario_names();

/// Built-in scenario, deterministic in `seed`. Throws ConfigError for unknown names,
/// listing the available ones.
Scenario make_scenario(const std::string& name, std::uint64_t seed);

/// Leader-follower formation with offsets given relative to the leader. Followers
/// within 1.5 m of the leader see it; followers within 1.05 m of each other are
/// neighbours.
FormationSpec formation_from_offsets(const std::vector<Vec2>& offsets);

nlohmann::json scenario_to_json(const Scenario& scenario);
Scenario scenario_from_json(const nlohmann::json& j);

/// Built-in name first, then a JSON scenario file path.
Scenario resolve_scenario(const std::string& name_or_path, std::uint64_t seed);

}  // namespace formula
