#include "formula/pipeline.hpp"

namespace formula {

SafeStepResult safe_formation_step(const RobotState& x, const RobotState& xhat,
                                   const Vec4& xhat_dot, std::span<const Obstacle> entities,
                                   const ClfMpcConfig& clf, const BarrierModel& barrier,
                                   const BarrierConfig& barrier_cfg, double sensing_radius,
                                   std::optional<std::span<const ControlInput>> warm_start) {
  SafeStepResult out;
  out.nominal = solve_clf_mpc(x, xhat, xhat_dot, clf, warm_start);
  out.constraints = build_constraints(x, entities, barrier, barrier_cfg, sensing_radius);
  out.filter = project(out.nominal.u_seq.front(), x, out.constraints, clf.limits, clf.dt);
  return out;
}

double intervention_cost(const MpcSolution& nominal, const ControlInput& u_checked, double dt) {
  double total = 0.0;
  for (const auto& u : nominal.u_seq) total += (u.vec() - u_checked.vec()).squaredNorm() * dt;
  return total;
}

}  // namespace formula
