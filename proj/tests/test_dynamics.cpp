#include "formula/dynamics.hpp"
#include "formula/formation.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

using namespace formula;

TEST_CASE("euler step matches a hand computation") {
  const RobotState x{1.0, -2.0, std::numbers::pi / 3.0, 0.8};
  const ControlInput u{0.5, -0.4};
  const RobotState y = step(x, u, 0.05, Limits{});
  CHECK(y.px == doctest::Approx(1.0 + 0.05 * 0.8 * 0.5));
  CHECK(y.py == doctest::Approx(-2.0 + 0.05 * 0.8 * std::sqrt(3.0) / 2.0));
  CHECK(y.theta == doctest::Approx(std::numbers::pi / 3.0 - 0.02));
  CHECK(y.v == doctest::Approx(0.825));
}

TEST_CASE("step clamps inputs and speed") {
  const Limits lim;
  RobotState x{0.0, 0.0, 0.0, 1.45};
  RobotState y = step(x, {10.0, 10.0}, 0.05, lim);
  CHECK(y.v == doctest::Approx(1.5));
  CHECK(y.theta == doctest::Approx(0.1));  // omega clamped to 2

  x.v = 0.02;
  y = step(x, {-10.0, 0.0}, 0.05, lim);
  CHECK(y.v == 0.0);
}

TEST_CASE("step rejects bad arguments") {
  const RobotState x;
  CHECK_THROWS_AS(step(x, {}, 0.0, Limits{}), ConfigError);
  CHECK_THROWS_AS(step(x, {std::nan(""), 0.0}, 0.05, Limits{}), NumericalError);
  RobotState bad;
  bad.py = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(step(bad, {}, 0.05, Limits{}), NumericalError);
  Limits lim;
  lim.a_min = 3.0;
  CHECK_THROWS_AS(lim.validate(), ConfigError);
}

TEST_CASE("drift jacobian matches finite differences") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(-2.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    const RobotState x{U(rng), U(rng), U(rng), std::abs(U(rng))};
    const Eigen::Matrix4d jac = drift_jacobian(x);
    for (int c = 0; c < 4; ++c) {
      Vec4 hi = x.vec(), lo = x.vec();
      hi[c] += 1e-6;
      lo[c] -= 1e-6;
      const Vec4 fd = (drift<double>(hi) - drift<double>(lo)) / 2e-6;
      CHECK((fd - jac.col(c)).norm() < 1e-8);
    }
  }
}

TEST_CASE("wrap_angle lands in (-pi, pi]") {
  const double pi = std::numbers::pi;
  CHECK(wrap_angle(pi) == doctest::Approx(pi));
  CHECK(wrap_angle(-pi) == doctest::Approx(pi));
  CHECK(wrap_angle(3.0 * pi / 2.0) == doctest::Approx(-pi / 2.0));
  for (double a = -20.0; a < 20.0; a += 0.37) {
    const double w = wrap_angle(a);
    CHECK(w > -pi);
    CHECK(w <= pi);
    CHECK(std::remainder(a - w, 2.0 * pi) == doctest::Approx(0.0).epsilon(1e-9));
  }
}

namespace {

FormationSpec line_of_three() {
  FormationSpec spec;
  spec.n_followers = 3;
  spec.c = Eigen::MatrixXi::Zero(3, 3);
  spec.c(1, 0) = 1;
  spec.c(2, 1) = 1;
  spec.c(2, 0) = 1;
  spec.s = Eigen::VectorXi::Zero(3);
  spec.s(0) = 1;
  spec.s(2) = 1;
  spec.delta_neighbor.assign(3, std::vector<Vec4>(3, Vec4::Zero()));
  spec.delta_leader.assign(3, Vec4::Zero());
  spec.delta_leader[0] = Vec4(-1.0, 0.0, 0.0, 0.0);
  spec.delta_leader[2] = Vec4(-3.0, 0.0, 0.0, 0.0);
  spec.delta_neighbor[1][0] = Vec4(-1.0, 0.0, 0.0, 0.0);
  spec.delta_neighbor[2][1] = Vec4(-1.0, 0.0, 0.0, 0.0);
  spec.delta_neighbor[2][0] = Vec4(-2.0, 0.0, 0.0, 0.0);
  return spec;
}

}  // namespace

TEST_CASE("nominal state is the weighted mean of offset sources") {
  const FormationSpec spec = line_of_three();
  spec.validate();
  const RobotState leader{0.0, 0.0, 0.0, 1.0};
  const std::vector<RobotState> f{{-1.2, 0.1, 0.0, 1.0}, {-2.0, 0.0, 0.2, 0.5}, {-3.0, 0.3, 0.0, 1.0}};
  const RobotState n2 = nominal_state(2, f, leader, spec);
  // mean of (f1 - 1, f0 - 2, leader - 3)
  CHECK(n2.px == doctest::Approx((-3.0 - 3.2 - 3.0) / 3.0));
  CHECK(n2.py == doctest::Approx((0.0 + 0.1 + 0.0) / 3.0));
  CHECK(n2.v == doctest::Approx((0.5 + 1.0 + 1.0) / 3.0));
  CHECK(n2.theta == doctest::Approx(std::atan2(std::sin(0.2), 2.0 + std::cos(0.2))));
}

TEST_CASE("nominal heading averages on the circle") {
  FormationSpec spec = FormationSpec::independent(2);
  spec.c(0, 1) = 1;
  const RobotState leader{0.0, 0.0, std::numbers::pi - 0.1, 0.0};
  const std::vector<RobotState> f{{}, {0.0, 0.0, -std::numbers::pi + 0.1, 0.0}};
  const RobotState n0 = nominal_state(0, f, leader, spec);
  CHECK(std::abs(wrap_angle(n0.theta - std::numbers::pi)) < 1e-12);
}

TEST_CASE("a formation at rest on its offsets has zero error") {
  const FormationSpec spec = line_of_three();
  const RobotState leader{2.0, 1.0, 0.0, 0.7};
  std::vector<RobotState> f;
  for (double dx : {-1.0, -2.0, -3.0}) f.push_back({2.0 + dx, 1.0, 0.0, 0.7});
  for (int i = 0; i < 3; ++i)
    CHECK(formation_error(f[i], nominal_state(i, f, leader, spec)).norm() < 1e-12);
}

TEST_CASE("body-frame offsets rotate with the leader") {
  FormationSpec spec = FormationSpec::independent(1);
  spec.body_frame = true;
  spec.delta_leader[0] = Vec4(-1.0, 0.5, 0.0, 0.0);
  const RobotState leader{0.0, 0.0, std::numbers::pi / 2.0, 0.0};
  const RobotState n = nominal_state(0, std::vector<RobotState>{RobotState{}}, leader, spec);
  CHECK(n.px == doctest::Approx(-0.5));
  CHECK(n.py == doctest::Approx(-1.0));
}

TEST_CASE("nominal state rate matches a finite difference of nominal_state") {
  FormationSpec spec = line_of_three();
  spec.body_frame = true;
  const RobotState leader{0.0, 0.0, 0.3, 0.9};
  const ControlInput ul{0.2, 0.4};
  const std::vector<RobotState> f{{-1.0, 0.2, 0.1, 0.8}, {-2.0, -0.1, 0.4, 0.6}, {-3.1, 0.3, -0.2, 1.1}};
  const std::vector<ControlInput> uf{{0.1, -0.3}, {-0.2, 0.5}, {0.0, 0.1}};
  const double h = 1e-6;
  auto advance = [&](double t) {
    std::vector<RobotState> g;
    for (int j = 0; j < 3; ++j) g.push_back(RobotState::from(f[j].vec() + t * state_derivative(f[j], uf[j])));
    const RobotState l = RobotState::from(leader.vec() + t * state_derivative(leader, ul));
    return std::pair{g, l};
  };
  for (int i = 0; i < 3; ++i) {
    const auto [gp, lp] = advance(h);
    const auto [gm, lm] = advance(-h);
    const Vec4 fd = (nominal_state(i, gp, lp, spec).vec() - nominal_state(i, gm, lm, spec).vec()) / (2 * h);
    const Vec4 an = nominal_state_rate(i, f, uf, leader, ul, spec);
    // heading rate of the circular mean is not the mean of rates; positions and speed are exact
    CHECK((fd.head<2>() - an.head<2>()).norm() < 1e-6);
    CHECK(fd[3] == doctest::Approx(an[3]).epsilon(1e-6));
  }
}

TEST_CASE("lyapunov rate matches a finite difference along the flow") {
  const RobotState x{0.3, -0.2, 0.7, 0.9};
  const RobotState xhat{1.0, 0.5, 0.2, 0.6};
  const ControlInput u{0.4, -0.8};
  const Vec4 xhat_dot(0.5, 0.1, 0.0, 0.0);
  const double h = 1e-6;
  auto V = [&](double t) {
    const RobotState xt = RobotState::from(x.vec() + t * state_derivative(x, u));
    const RobotState ht = RobotState::from(xhat.vec() + t * xhat_dot);
    return lyapunov(formation_error(xt, ht));
  };
  CHECK(lyapunov_rate(formation_error(x, xhat), x, u, xhat_dot) ==
        doctest::Approx((V(h) - V(-h)) / (2 * h)).epsilon(1e-6));
}

TEST_CASE("formation validation rejects broken graphs") {
  FormationSpec spec = line_of_three();
  spec.c(0, 0) = 1;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = line_of_three();
  spec.s(0) = 0;  // follower 0 now has no source
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = line_of_three();
  spec.delta_leader.pop_back();
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = line_of_three();
  spec.s(1) = 2;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
}
