#include "formula/safety_filter.hpp"

#include <Eigen/LU>

#include <cmath>
#include <limits>

namespace formula {
namespace {

double feasibility_tol(const HalfspaceConstraint& c, const Vec2& w) {
  return 1e-10 * (1.0 + std::abs(c.b) + c.a.norm() * (1.0 + w.norm()));
}

bool satisfies(const HalfspaceConstraint& c, const Vec2& w) {
  return c.a.dot(w) - c.b >= -feasibility_tol(c, w);
}

bool all_satisfied(std::span<const HalfspaceConstraint> cs, const Vec2& w) {
  for (const auto& c : cs)
    if (!satisfies(c, w)) return false;
  return true;
}

}  // namespace

BarrierSample evaluate_barrier(const BarrierModel& model, const Vec2& p, const Obstacle& obs,
                               const BarrierConfig& cfg) {
  if (const auto* learned = std::get_if<LearnedBarrier>(&model)) {
    if (learned->params == nullptr) throw ConfigError("learned barrier without parameters");
    return {forward(*learned->params, p, obs), input_gradient(*learned->params, p, obs)};
  }
  return {h_analytic(p, obs, cfg), h_gradient(p, obs)};
}

std::vector<HalfspaceConstraint> build_constraints(const RobotState& x,
                                                   std::span<const Obstacle> entities,
                                                   const BarrierModel& model,
                                                   const BarrierConfig& cfg,
                                                   double sensing_radius) {
  std::vector<HalfspaceConstraint> out;
  const Vec2 p = x.position();
  for (const auto& obs : entities) {
    if (surface_distance(p, obs, cfg.r_rob) > sensing_radius) continue;
    const BarrierSample bs = evaluate_barrier(model, p, obs, cfg);
    out.push_back({bs.grad, -cfg.alpha * bs.h});
  }
  return out;
}

std::optional<Vec2> qp_solve(const Vec2& w_nom, std::span<const HalfspaceConstraint> constraints,
                             double v_max) {
  std::vector<HalfspaceConstraint> cs;
  cs.reserve(constraints.size());
  for (const auto& c : constraints) {
    if (c.a.squaredNorm() < 1e-24) {
      if (c.b > 1e-12) return std::nullopt;
      continue;
    }
    cs.push_back(c);
  }
  const double cap_tol = 1e-12 * (1.0 + v_max);

  std::optional<Vec2> best;
  double best_cost = std::numeric_limits<double>::infinity();
  auto consider = [&](const Vec2& w) {
    if (!w.allFinite() || w.norm() > v_max + cap_tol || !all_satisfied(cs, w)) return;
    const double cost = (w - w_nom).squaredNorm();
    if (cost < best_cost) {
      best_cost = cost;
      best = w;
    }
  };

  consider(w_nom);
  if (best) return best;
  const double n_nom = w_nom.norm();
  if (n_nom > 1e-15) consider(v_max * w_nom / n_nom);
  for (std::size_t k = 0; k < cs.size(); ++k) {
    const Vec2& a = cs[k].a;
    const double b = cs[k].b;
    const double aa = a.squaredNorm();
    consider(w_nom + (b - a.dot(w_nom)) / aa * a);

    const Vec2 foot = b / aa * a;
    const double rem = v_max * v_max - foot.squaredNorm();
    if (rem >= 0.0) {
      const Vec2 dir = Vec2(-a[1], a[0]) / std::sqrt(aa);
      const double t = std::sqrt(rem);
      consider(foot + t * dir);
      consider(foot - t * dir);
    }
    for (std::size_t l = k + 1; l < cs.size(); ++l) {
      Eigen::Matrix2d m;
      m.row(0) = a.transpose();
      m.row(1) = cs[l].a.transpose();
      const double det = m.determinant();
      if (std::abs(det) < 1e-14 * aa * cs[l].a.squaredNorm()) continue;
      consider(m.inverse() * Vec2(b, cs[l].b));
    }
  }
  return best;
}

Vec2 predicted_velocity(const RobotState& x, const ControlInput& u, const Limits& limits,
                        double dt) {
  const double speed = limits.clamp_speed(x.v + u.a * dt);
  const double heading = x.theta + u.omega * dt;
  return speed * Vec2(std::cos(heading), std::sin(heading));
}

ControlInput velocity_to_input(const Vec2& w, const RobotState& x,
                               std::span<const HalfspaceConstraint> constraints,
                               const Limits& limits, double dt) {
  double speed = w.norm();
  double omega = 0.0;
  if (speed < 1e-6) {
    speed = 0.0;
  } else {
    omega = std::clamp(wrap_angle(std::atan2(w[1], w[0]) - x.theta) / dt, limits.omega_min,
                       limits.omega_max);
  }
  const double heading = x.theta + omega * dt;
  const Vec2 dir(std::cos(heading), std::sin(heading));
  for (const auto& c : constraints) {
    const double along = c.a.dot(dir);
    if (along < 0.0) speed = std::min(speed, std::max(0.0, c.b / along));
  }
  speed = limits.clamp_speed(speed);
  const double a = std::clamp((speed - x.v) / dt, limits.a_min, limits.a_max);
  return {a, omega};
}

FilterResult project(const ControlInput& u_nominal, const RobotState& x,
                     std::span<const HalfspaceConstraint> constraints, const Limits& limits,
                     double dt) {
  if (!(dt > 0.0)) throw ConfigError("project: dt must be positive");
  FilterResult out;
  const ControlInput u_clamped = limits.clamp(u_nominal);
  const Vec2 w_nom = predicted_velocity(x, u_clamped, limits, dt);

  bool nominal_ok = true;
  for (const auto& c : constraints) nominal_ok = nominal_ok && c.a.dot(w_nom) >= c.b;
  if (nominal_ok) {
    out.u_checked = u_clamped;
    out.w_star = w_nom;
    return out;
  }

  const std::optional<Vec2> w = qp_solve(w_nom, constraints, limits.v_max);
  out.feasible = w.has_value();
  out.w_star = w.value_or(Vec2::Zero());
  for (std::size_t k = 0; k < constraints.size(); ++k) {
    const auto& c = constraints[k];
    if (std::abs(c.a.dot(out.w_star) - c.b) <= 1e-9 * (1.0 + std::abs(c.b) + c.a.norm()))
      out.active_set.push_back(static_cast<int>(k));
  }
  out.u_checked = velocity_to_input(out.w_star, x, constraints, limits, dt);
  return out;
}

}  // namespace formula
