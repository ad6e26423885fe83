#include "formula/barrier.hpp"
#include "formula/dynamics.hpp"
#include "formula/safety_filter.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <random>

using namespace formula;

TEST_CASE("analytic barrier value, gradient and velocity constraint") {
  const BarrierConfig cfg;  // r_rob 0.2, s 0.3, alpha 1
  const Obstacle o{1.0, 2.0, 0.5};
  const Vec2 p(3.0, 2.0);
  CHECK(h_analytic(p, o, cfg) == doctest::Approx(4.0 - 1.0));
  CHECK(h_gradient(p, o).isApprox(Vec2(4.0, 0.0)));
  const VelocityConstraint vc = velocity_constraint(p, o, cfg);
  CHECK(vc.b == doctest::Approx(-3.0));
  CHECK(surface_distance(p, o, cfg.r_rob) == doctest::Approx(1.3));

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(-3.0, 3.0);
  for (int t = 0; t < 20; ++t) {
    const Vec2 q(U(rng), U(rng));
    const double e = 1e-6;
    const Vec2 fd((h_analytic(q + Vec2(e, 0), o, cfg) - h_analytic(q - Vec2(e, 0), o, cfg)) / (2 * e),
                  (h_analytic(q + Vec2(0, e), o, cfg) - h_analytic(q - Vec2(0, e), o, cfg)) / (2 * e));
    CHECK((fd - h_gradient(q, o)).norm() < 1e-6);
  }
}

TEST_CASE("h is zero exactly at the inflated boundary") {
  const BarrierConfig cfg;
  const Obstacle o{0.0, 0.0, 0.4};
  CHECK(std::abs(h_analytic(Vec2(0.9, 0.0), o, cfg)) < 1e-12);
  CHECK(h_analytic(Vec2(0.89, 0.0), o, cfg) < 0.0);
  CHECK(surface_distance(Vec2(0.9, 0.0), o, cfg.r_rob) == doctest::Approx(cfg.s));
}

TEST_CASE("neighbours are obstacles of radius r_rob") {
  const BarrierConfig cfg;
  const std::vector<RobotState> xs{{0, 0, 0, 0}, {1.0, -1.0, 0, 0}};
  const Obstacle o = pairwise_obstacle(0, 1, xs, cfg);
  CHECK(o == Obstacle{1.0, -1.0, cfg.r_rob});
  CHECK_THROWS_AS(pairwise_obstacle(1, 1, xs, cfg), ConfigError);
  CHECK_THROWS_AS(pairwise_obstacle(0, 2, xs, cfg), ConfigError);
  BarrierConfig bad;
  bad.s = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("qp_solve closed-form cases") {
  const std::vector<HalfspaceConstraint> none;
  CHECK(qp_solve(Vec2(0.3, 0.4), none, 1.5)->isApprox(Vec2(0.3, 0.4)));
  CHECK(qp_solve(Vec2(3.0, 4.0), none, 1.5)->isApprox(Vec2(0.9, 1.2)));

  // w_x >= 0.5 from w_nom = (0, 1): projection onto the line.
  const std::vector<HalfspaceConstraint> one{{Vec2(2.0, 0.0), 1.0}};
  CHECK(qp_solve(Vec2(0.0, 1.0), one, 1.5)->isApprox(Vec2(0.5, 1.0)));

  // line and circle together: w_x >= 1.2 from (1.2, 1.4) is clipped to the circle
  const std::vector<HalfspaceConstraint> edge{{Vec2(1.0, 0.0), 1.2}};
  const Vec2 w = *qp_solve(Vec2(1.2, 1.4), edge, 1.5);
  CHECK(w.isApprox(Vec2(1.2, 0.9)));

  // w_x >= 1 and w_x <= -1: empty
  const std::vector<HalfspaceConstraint> clash{{Vec2(1.0, 0.0), 1.0}, {Vec2(-1.0, 0.0), 1.0}};
  CHECK_FALSE(qp_solve(Vec2::Zero(), clash, 1.5).has_value());
  // beyond the speed disk: empty
  const std::vector<HalfspaceConstraint> far{{Vec2(1.0, 0.0), 2.0}};
  CHECK_FALSE(qp_solve(Vec2::Zero(), far, 1.5).has_value());
}

TEST_CASE("qp_solve agrees with a grid-search oracle") {
  std::mt19937_64 rng(11);
  int compared = 0;
  for (int t = 0; t < 40; ++t) {
    const auto inst = oracle::random_projection(rng);
    const auto got = qp_solve(inst.w_nom, inst.cs, inst.v_max);
    const auto ref = oracle::grid_qp(inst.w_nom, inst.cs, inst.v_max, 2e-3);
    if (ref.w) {
      REQUIRE(got.has_value());
      ++compared;
    }
    if (!got) continue;
    CHECK(oracle::max_violation(*got, inst.cs, inst.v_max) <= 1e-8);
    if (ref.w) CHECK((*got - inst.w_nom).squaredNorm() <= ref.cost + 1e-12);
  }
  CHECK(compared > 20);
}

TEST_CASE("project leaves a safe nominal input untouched") {
  const RobotState x{0.0, 0.0, 0.0, 0.5};
  const std::vector<HalfspaceConstraint> cs{{Vec2(-1.0, 0.0), -2.0}};
  const FilterResult r = project({0.4, 0.2}, x, cs, Limits{}, 0.05);
  CHECK(r.u_checked == ControlInput{0.4, 0.2});
  CHECK(r.active_set.empty());
  CHECK(r.feasible);
}

TEST_CASE("filtered input keeps the reachable velocity inside the constraints") {
  // From a slow start, inside every safe set (b <= 0), the predicted velocity of the
  // filtered input satisfies each half-space even when the heading cannot be reached.
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const Limits lim;
  const double dt = 0.05;
  for (int t = 0; t < 300; ++t) {
    const RobotState x{0.0, 0.0, 3.2 * U(rng), 0.05 + 0.05 * U(rng)};
    std::vector<HalfspaceConstraint> cs;
    const int m = 1 + t % 4;
    for (int k = 0; k < m; ++k) {
      const double ang = 3.2 * U(rng);
      cs.push_back({(1.0 + U(rng)) * Vec2(std::cos(ang), std::sin(ang)), -0.6 * (1.0 + U(rng))});
    }
    const ControlInput u_nom{2.0 * U(rng), 2.0 * U(rng)};
    const FilterResult r = project(u_nom, x, cs, lim, dt);
    REQUIRE(r.feasible);
    const Vec2 w = predicted_velocity(x, r.u_checked, lim, dt);
    for (const auto& c : cs) CHECK(c.a.dot(w) >= c.b - 1e-9);
    CHECK(r.u_checked.a >= lim.a_min);
    CHECK(r.u_checked.a <= lim.a_max);
    CHECK(std::abs(r.u_checked.omega) <= lim.omega_max);
  }
}

TEST_CASE("build_constraints respects the sensing radius") {
  const BarrierConfig cfg;
  const RobotState x{0.0, 0.0, 0.0, 0.0};
  const std::vector<Obstacle> obs{{1.0, 0.0, 0.3}, {10.0, 0.0, 0.3}};
  const auto cs = build_constraints(x, obs, AnalyticBarrier{}, cfg, 3.0);
  REQUIRE(cs.size() == 1);
  CHECK(cs[0].a.isApprox(Vec2(-2.0, 0.0)));
  CHECK(cs[0].b == doctest::Approx(-(1.0 - 0.64)));
  CHECK_THROWS_AS(build_constraints(x, obs, LearnedBarrier{}, cfg, 3.0), ConfigError);
}
