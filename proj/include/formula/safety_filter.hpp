#pragma once

#include "formula/barrier.hpp"
#include "formula/nn_cbf.hpp"
#include "formula/types.hpp"

#include <optional>
#include <span>
#include <variant>
#include <vector>

namespace formula {

/// a^T w >= b on planar velocity w.
struct HalfspaceConstraint {
  Vec2 a = Vec2::Zero();
  double b = 0.0;
};

struct FilterResult {
  ControlInput u_checked;
  Vec2 w_star = Vec2::Zero();
  std::vector<int> active_set;
  bool feasible = true;
};

/// Source of barrier values and gradients: the analytic distance barrier or a
/// trained network (not owned).
struct AnalyticBarrier {};
struct LearnedBarrier {
  const MlpParams* params = nullptr;
};
using BarrierModel = std::variant<AnalyticBarrier, LearnedBarrier>;

struct BarrierSample {
  double h = 0.0;
  Vec2 grad = Vec2::Zero();
};

BarrierSample evaluate_barrier(const BarrierModel& model, const Vec2& p, const Obstacle& obs,
                               const BarrierConfig& cfg);

inline constexpr double kDefaultSensingRadius = 3.0;

/// One constraint per entity whose surface lies within `sensing_radius` of the robot:
/// a = grad_p h, b = -alpha h.
std::vector<HalfspaceConstraint> build_constraints(const RobotState& x,
                                                   std::span<const Obstacle> entities,
                                                   const BarrierModel& model,
                                                   const BarrierConfig& cfg,
                                                   double sensing_radius = kDefaultSensingRadius);

/// Exact minimiser of ||w - w_nom||^2 s.t. a_k^T w >= b_k and ||w|| <= v_max, by
/// enumerating active sets of size <= 2 (lines, the speed circle, and their
/// intersections). Returns nullopt when the feasible set is empty.
std::optional<Vec2> qp_solve(const Vec2& w_nom, std::span<const HalfspaceConstraint> constraints,
                             double v_max);

/// Planar velocity reached after one step of u from x (speed clamped).
Vec2 predicted_velocity(const RobotState& x, const ControlInput& u, const Limits& limits,
                        double dt);

/// Maps a desired planar velocity to (a, omega). Near-zero targets hold heading.
/// The speed along the reachable heading is capped so the constraints hold there too.
ControlInput velocity_to_input(const Vec2& w, const RobotState& x,
                               std::span<const HalfspaceConstraint> constraints,
                               const Limits& limits, double dt);

/// Projects the nominal input onto the constraint set at the velocity level and maps
/// the result back to (a, omega). Falls back to stopping when infeasible.
FilterResult project(const ControlInput& u_nominal, const RobotState& x,
                     std::span<const HalfspaceConstraint> constraints, const Limits& limits,
                     double dt);

}  // namespace formula
