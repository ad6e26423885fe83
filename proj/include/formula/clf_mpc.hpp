#pragma once

#include "formula/formation.hpp"
#include "formula/types.hpp"

#include <optional>
#include <span>
#include <vector>

namespace formula {

struct ClfMpcConfig {
  int horizon_steps = 10;
  double dt = 0.05;
  double beta = 1.0;  // CLF decrease rate [1/s]
  Limits limits;
  double slack_weight = 1e3;         // quadratic penalty on each step's slack
  double slack_linear_weight = 1e3;  // exact-penalty term on each step's slack
  int max_iterations = 200;
  double tolerance = 1e-8;

  void validate() const;
};

struct MpcSolution {
  std::vector<ControlInput> u_seq;
  double cost = 0.0;       // sum_k ||u_k||^2 dt, slack excluded
  double clf_slack = 0.0;  // largest step slack, >= 0
  bool feasible = false;
  int iterations = 0;
};

/// Sum of ||u_k||^2 dt over a sequence.
double effort_cost(std::span<const ControlInput> u_seq, double dt);

/// The MPC-CLF objective value of a solution.
inline double clf_cost(const MpcSolution& sol) { return sol.cost; }

/// Minimum-effort input sequence under the softened CLF decrease constraint
///
///   dV/dt(e_k, u) + beta V(e_k) <= delta_k,  k = 1..N,
///
/// evaluated on the Euler rollout from x with the nominal state propagated at the
/// constant rate xhat_dot. The constraint at step k uses the input held over the
/// interval ending there, u_{k-1}, so the first input is always bound. Input boxes are
/// hard. Each step carries its own slack: a unicycle cannot satisfy the first steps
/// against a lateral error, and a shared slack would leave the later steps no
/// reason to steer.
/// `warm_start`, when given, must hold N inputs.
MpcSolution solve_clf_mpc(const RobotState& x, const RobotState& xhat, const Vec4& xhat_dot,
                          const ClfMpcConfig& cfg,
                          std::optional<std::span<const ControlInput>> warm_start = std::nullopt);

/// V-dot + beta V at each bound step k = 1..N for a given input sequence.
std::vector<double> clf_constraint_values(const RobotState& x, const RobotState& xhat,
                                          const Vec4& xhat_dot, std::span<const ControlInput> u_seq,
                                          const ClfMpcConfig& cfg);

/// Shifts a solution one step forward, repeating the last input.
std::vector<ControlInput> shift_sequence(std::span<const ControlInput> u_seq);

}  // namespace formula
