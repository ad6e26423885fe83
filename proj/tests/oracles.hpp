#pragma once

// Independent reference computations shared by the unit and acceptance tests.

#include "formula/nn_cbf.hpp"
#include "formula/safety_filter.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace oracle {

using formula::HalfspaceConstraint;
using formula::Vec2;

struct GridOptimum {
  std::optional<Vec2> w;
  double cost = std::numeric_limits<double>::infinity();
};

/// Exhaustive search over a square lattice of spacing `res` covering the speed disk.
inline GridOptimum grid_qp(const Vec2& w_nom, std::span<const HalfspaceConstraint> cs,
                           double v_max, double res = 1e-3) {
  GridOptimum best;
  const int n = static_cast<int>(std::ceil(v_max / res));
  const double r2 = v_max * v_max;
  for (int i = -n; i <= n; ++i) {
    const double x = i * res;
    for (int j = -n; j <= n; ++j) {
      const double y = j * res;
      if (x * x + y * y > r2) continue;
      bool ok = true;
      for (const auto& c : cs) {
        if (c.a[0] * x + c.a[1] * y < c.b) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      const double cost = (x - w_nom[0]) * (x - w_nom[0]) + (y - w_nom[1]) * (y - w_nom[1]);
      if (cost < best.cost) {
        best.cost = cost;
        best.w = Vec2(x, y);
      }
    }
  }
  return best;
}

struct ProjectionInstance {
  Vec2 w_nom;
  std::vector<HalfspaceConstraint> cs;
  double v_max = 1.5;
};

/// Random 2-D projection problem with 1..6 constraints. Offsets are drawn so most
/// instances are feasible and the nominal is usually cut off.
inline ProjectionInstance random_projection(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  std::uniform_int_distribution<int> count(1, 6);
  ProjectionInstance inst;
  inst.w_nom = Vec2(2.0 * U(rng), 2.0 * U(rng));
  const Vec2 anchor(0.7 * U(rng), 0.7 * U(rng));
  const int m = count(rng);
  for (int k = 0; k < m; ++k) {
    const double angle = 3.14159265358979 * U(rng);
    const double mag = 0.1 + 1.5 * (U(rng) + 1.0);
    const Vec2 a = mag * Vec2(std::cos(angle), std::sin(angle));
    inst.cs.push_back({a, a.dot(anchor) - 0.5 * (U(rng) + 1.0) * mag});
  }
  return inst;
}

inline double max_violation(const Vec2& w, std::span<const HalfspaceConstraint> cs, double v_max) {
  double worst = std::max(0.0, w.norm() - v_max);
  for (const auto& c : cs) worst = std::max(worst, c.b - c.a.dot(w));
  return worst;
}

/// Scalar-loop forward pass of the barrier network.
inline double mlp_reference(const formula::MlpParams& P, const Vec2& p, const formula::Obstacle& o) {
  const double z[5] = {p[0], p[1], o.cx, o.cy, o.radius};
  auto silu = [](double t) { return t / (1.0 + std::exp(-t)); };
  std::vector<double> a1(formula::kMlpHidden), a2(formula::kMlpHidden);
  for (int i = 0; i < formula::kMlpHidden; ++i) {
    double s = P.b1[i];
    for (int k = 0; k < 5; ++k) s += P.W1(i, k) * z[k];
    a1[i] = silu(s);
  }
  for (int i = 0; i < formula::kMlpHidden; ++i) {
    double s = P.b2[i];
    for (int k = 0; k < formula::kMlpHidden; ++k) s += P.W2(i, k) * a1[k];
    a2[i] = silu(s);
  }
  double h = P.b3;
  for (int k = 0; k < formula::kMlpHidden; ++k) h += P.W3(0, k) * a2[k];
  return h;
}

/// Training loss written directly from the hinge definitions, with dh/dp by central
/// differences of the reference network.
inline double loss_reference(const formula::MlpParams& P, std::span<const formula::CbfSample> batch,
                             const formula::TrainConfig& cfg, bool with_regression) {
  double loss = 0.0;
  const double n = static_cast<double>(batch.size());
  for (const auto& s : batch) {
    const double h = mlp_reference(P, s.p, s.obs);
    switch (s.label) {
      case formula::SampleLabel::kSafe:
        loss += std::max(0.0, cfg.gamma - h);
        break;
      case formula::SampleLabel::kUnsafe:
        loss += std::max(0.0, cfg.gamma + h);
        break;
      case formula::SampleLabel::kDynamics: {
        const double e = 1e-6;
        const double hdot = (mlp_reference(P, s.p + e * s.u_ref, s.obs) -
                             mlp_reference(P, s.p - e * s.u_ref, s.obs)) /
                            (2.0 * e);
        loss += std::max(0.0, cfg.gamma - hdot - cfg.alpha * h);
        break;
      }
    }
    if (with_regression) loss += cfg.regression_weight * (h - s.h_true) * (h - s.h_true) / n;
  }
  return loss;
}

/// |a - b| relative to the larger magnitude, with `floor` guarding exact zeros.
inline double relative_error(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace oracle
