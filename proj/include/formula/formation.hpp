#pragma once

#include "formula/types.hpp"

#include <Eigen/Core>

#include <span>
#include <vector>

namespace formula {

/// Interaction topology and desired offsets for n followers.
///
/// c(i, j) = 1 when follower j is a neighbour of follower i, s(i) = 1 when follower i
/// receives the leader state. delta_neighbor[i][j] is the desired x_i - x_j and
/// delta_leader[i] the desired x_i - x_leader. Offsets are positional unless their
/// heading/speed entries are set explicitly.
struct FormationSpec {
  int n_followers = 0;
  Eigen::MatrixXi c;
  Eigen::VectorXi s;
  std::vector<std::vector<Vec4>> delta_neighbor;
  std::vector<Vec4> delta_leader;
  /// Rotate positional offsets by the leader heading.
  bool body_frame = false;

  /// n followers that each track their own reference with zero offset.
  static FormationSpec independent(int n);

  /// Throws ConfigError when an invariant does not hold.
  void validate() const;

  double weight_sum(int i) const;
};

using FormationError = Vec4;

/// Weighted combination of offset neighbour states and the offset leader state.
/// Heading is averaged on the unit circle.
RobotState nominal_state(int i, std::span<const RobotState> followers, const RobotState& leader,
                         const FormationSpec& spec);

/// x - xhat with the heading entry wrapped to (-pi, pi].
FormationError formation_error(const RobotState& x, const RobotState& xhat);

/// V(e) = e^T e.
inline double lyapunov(const FormationError& e) { return e.squaredNorm(); }

/// dV/dt = 2 e^T (f(x) + g(x) u - xhat_dot).
double lyapunov_rate(const FormationError& e, const RobotState& x, const ControlInput& u,
                     const Vec4& xhat_dot);

/// Time derivative of nominal_state given every robot's current input.
Vec4 nominal_state_rate(int i, std::span<const RobotState> followers,
                        std::span<const ControlInput> inputs, const RobotState& leader,
                        const ControlInput& leader_input, const FormationSpec& spec);

}  // namespace formula
