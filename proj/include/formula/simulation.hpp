#pragma once

#include "formula/baselines.hpp"
#include "formula/clf_mpc.hpp"
#include "formula/deadlock.hpp"
#include "formula/nn_cbf.hpp"
#include "formula/scenario.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace formula {

enum class ControllerKind { kProposed, kApf, kMpcCbf, kClfCbfQp };

std::string controller_name(ControllerKind kind);
/// Accepts "proposed", "apf", "mpc-cbf", "clf-cbf-qp".
ControllerKind parse_controller(const std::string& name);
std::vector<ControllerKind> all_controllers();

struct NeighborView {
  int index = 0;
  RobotState state;
  ControlInput input;  // applied on the previous tick
};

/// Everything one follower's controller is given on a tick: its own state, the
/// neighbours selected by the formation graph, the leader (or its own reference)
/// when s_i = 1, and the entities inside the sensing radius.
struct LocalView {
  int robot = 0;
  RobotState self;
  std::vector<NeighborView> neighbors;
  std::optional<NeighborView> leader;
  std::vector<Obstacle> entities;
};

struct SimOptions {
  ControllerKind controller = ControllerKind::kClfCbfQp;
  const MlpParams* model = nullptr;  // required for kProposed
  bool deadlock_resolution = true;
  ClfMpcConfig clf = closed_loop_clf();  // dt and limits are taken from the scenario
  MpcCbfConfig mpc_cbf;
  ApfConfig apf;
  DeadlockConfig deadlock = default_deadlock();
  double sensing_radius = kDefaultSensingRadius;
  double leader_slowdown_gain = 0.5;  // leader speed <= gain * distance to goal [1/s]
  double goal_tolerance = 0.1;        // leader arrival and formation settle tolerance [m]
  double settle_time = 1.0;           // formation must stay settled this long [s]
  /// Called once per follower per tick with exactly what its controller receives.
  std::function<void(const LocalView&)> observer;

  /// Warm-started solves settle within a few SQP iterations; the cap bounds tick time.
  static ClfMpcConfig closed_loop_clf() {
    ClfMpcConfig cfg;
    cfg.max_iterations = 10;
    return cfg;
  }

  static DeadlockConfig default_deadlock() {
    DeadlockConfig cfg;
    cfg.deadband = 0.02;
    cfg.hold = true;
    return cfg;
  }
};

struct StepRecord {
  double time = 0.0;
  std::vector<RobotState> states;
  std::vector<ControlInput> inputs;          // applied from this row to the next
  std::vector<ControlInput> nominal_inputs;  // before the safety filter
  std::vector<double> h_min;                 // analytic barrier over all entities
  std::vector<double> formation_error;       // positional error norm, 0 for the leader
  std::vector<double> j_clf;                 // MPC-CLF cost, 0 where not computed
  std::vector<int> deadlock;                 // 1 on trigger ticks
};

/// Robots are indexed with the leader first (when present), then followers in
/// formation order.
struct RolloutLog {
  std::string scenario_name;
  std::string scenario_hash;
  std::string controller;
  std::uint64_t seed = 0;
  double dt = 0.05;
  bool has_leader = true;
  std::vector<std::string> roles;
  std::vector<StepRecord> steps;
  std::vector<DeadlockTrigger> triggers;  // robot ids in log indexing
  int controller_failures = 0;
  bool completed = false;
  double completion_time = 0.0;
  double wall_time = 0.0;

  int n_robots() const { return static_cast<int>(roles.size()); }
  int first_follower() const { return has_leader ? 1 : 0; }
};

/// Synchronized closed-loop rollout: every controller reads the tick's states, then
/// all robots advance together. Ends at the scenario duration or once the leader
/// (or every reference) has arrived and all formation errors stayed below the goal
/// tolerance for settle_time.
RolloutLog run(const Scenario& scenario, const SimOptions& options);

}  // namespace formula
