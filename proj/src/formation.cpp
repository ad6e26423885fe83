#include "formula/formation.hpp"

#include "formula/dynamics.hpp"

#include <cmath>
#include <string>

namespace formula {
namespace {

Vec4 oriented(const Vec4& offset, const RobotState& leader, bool body_frame) {
  if (!body_frame) return offset;
  const double c = std::cos(leader.theta);
  const double s = std::sin(leader.theta);
  Vec4 out = offset;
  out[0] = c * offset[0] - s * offset[1];
  out[1] = s * offset[0] + c * offset[1];
  return out;
}

// d/dt of the rotated positional offset when the frame turns at the leader's rate.
Vec4 oriented_rate(const Vec4& offset, const RobotState& leader, double leader_omega,
                   bool body_frame) {
  Vec4 out = Vec4::Zero();
  if (!body_frame) return out;
  const double c = std::cos(leader.theta);
  const double s = std::sin(leader.theta);
  out[0] = leader_omega * (-s * offset[0] - c * offset[1]);
  out[1] = leader_omega * (c * offset[0] - s * offset[1]);
  return out;
}

void require_index(int i, const FormationSpec& spec, std::size_t n_states) {
  if (i < 0 || i >= spec.n_followers)
    throw ConfigError("formation: follower index " + std::to_string(i) + " out of range");
  if (n_states != static_cast<std::size_t>(spec.n_followers))
    throw ConfigError("formation: state count does not match n_followers");
}

}  // namespace

FormationSpec FormationSpec::independent(int n) {
  FormationSpec spec;
  spec.n_followers = n;
  spec.c = Eigen::MatrixXi::Zero(n, n);
  spec.s = Eigen::VectorXi::Ones(n);
  spec.delta_neighbor.assign(n, std::vector<Vec4>(n, Vec4::Zero()));
  spec.delta_leader.assign(n, Vec4::Zero());
  return spec;
}

void FormationSpec::validate() const {
  const int n = n_followers;
  if (n < 1) throw ConfigError("formation: need at least one follower");
  if (c.rows() != n || c.cols() != n || s.size() != n)
    throw ConfigError("formation: adjacency/leader-flag shapes do not match n_followers");
  if (static_cast<int>(delta_neighbor.size()) != n || static_cast<int>(delta_leader.size()) != n)
    throw ConfigError("formation: offset arrays do not match n_followers");
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(delta_neighbor[i].size()) != n)
      throw ConfigError("formation: delta_neighbor row has wrong length");
    if (c(i, i) != 0) throw ConfigError("formation: c_ii must be zero");
    if (s(i) != 0 && s(i) != 1) throw ConfigError("formation: s_i must be 0 or 1");
    for (int j = 0; j < n; ++j)
      if (c(i, j) != 0 && c(i, j) != 1) throw ConfigError("formation: c_ij must be 0 or 1");
    if (weight_sum(i) <= 0.0)
      throw ConfigError("formation: follower " + std::to_string(i) +
                        " has neither neighbours nor leader access");
  }
}

double FormationSpec::weight_sum(int i) const {
  return static_cast<double>(c.row(i).sum() + s(i));
}

RobotState nominal_state(int i, std::span<const RobotState> followers, const RobotState& leader,
                         const FormationSpec& spec) {
  require_index(i, spec, followers.size());
  const double total = spec.weight_sum(i);
  if (total <= 0.0) throw ConfigError("nominal_state: zero weight sum");

  Vec4 acc = Vec4::Zero();
  double sin_sum = 0.0;
  double cos_sum = 0.0;
  auto accumulate = [&](const RobotState& source, const Vec4& offset) {
    const Vec4 target = source.vec() + oriented(offset, leader, spec.body_frame);
    acc += target;
    sin_sum += std::sin(target[2]);
    cos_sum += std::cos(target[2]);
  };
  for (int j = 0; j < spec.n_followers; ++j)
    if (spec.c(i, j) != 0) accumulate(followers[j], spec.delta_neighbor[i][j]);
  if (spec.s(i) != 0) accumulate(leader, spec.delta_leader[i]);

  RobotState out = RobotState::from(acc / total);
  out.theta = std::atan2(sin_sum, cos_sum);
  return out;
}

FormationError formation_error(const RobotState& x, const RobotState& xhat) {
  FormationError e = x.vec() - xhat.vec();
  e[2] = wrap_angle(e[2]);
  return e;
}

double lyapunov_rate(const FormationError& e, const RobotState& x, const ControlInput& u,
                     const Vec4& xhat_dot) {
  return 2.0 * e.dot(state_derivative(x, u) - xhat_dot);
}

Vec4 nominal_state_rate(int i, std::span<const RobotState> followers,
                        std::span<const ControlInput> inputs, const RobotState& leader,
                        const ControlInput& leader_input, const FormationSpec& spec) {
  require_index(i, spec, followers.size());
  if (inputs.size() != followers.size())
    throw ConfigError("nominal_state_rate: input count does not match state count");
  const double total = spec.weight_sum(i);
  if (total <= 0.0) throw ConfigError("nominal_state_rate: zero weight sum");

  Vec4 acc = Vec4::Zero();
  for (int j = 0; j < spec.n_followers; ++j) {
    if (spec.c(i, j) == 0) continue;
    acc += state_derivative(followers[j], inputs[j]) +
           oriented_rate(spec.delta_neighbor[i][j], leader, leader_input.omega, spec.body_frame);
  }
  if (spec.s(i) != 0)
    acc += state_derivative(leader, leader_input) +
           oriented_rate(spec.delta_leader[i], leader, leader_input.omega, spec.body_frame);
  return acc / total;
}

}  // namespace formula
