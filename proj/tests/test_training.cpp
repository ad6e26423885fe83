#include "formula/io.hpp"
#include "formula/training.hpp"

#include <doctest.h>

#include <random>

using namespace formula;

TEST_CASE("labels follow the analytic sign and dynamics references are admissible") {
  const BarrierConfig bar;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> U(-2.0, 2.0);
  const Obstacle o{0.0, 0.0, 0.4};
  int dynamics = 0;
  for (int k = 0; k < 2000; ++k) {
    const Vec2 p(U(rng), U(rng));
    const CbfSample s = label_sample(p, o, bar, 1.5, 0.5, rng);
    CHECK(s.h_true == doctest::Approx(h_analytic(p, o, bar)));
    if (s.h_true < 0.0) {
      CHECK(s.label == SampleLabel::kUnsafe);
      continue;
    }
    CHECK(s.label != SampleLabel::kUnsafe);
    if (s.label == SampleLabel::kDynamics) {
      ++dynamics;
      const VelocityConstraint c = velocity_constraint(p, o, bar);
      CHECK(c.a.dot(s.u_ref) >= c.b);
      CHECK(s.u_ref.norm() <= 1.5 + 1e-12);
    }
  }
  CHECK(dynamics > 500);
}

TEST_CASE("stage-1 sampling is reproducible and inside the region") {
  const Workspace region = training_region();
  const BarrierConfig bar;
  std::mt19937_64 a(7), b(7);
  const auto sa = draw_stage1_samples(500, region, ObstacleSampler{}, bar, 1.5, a);
  const auto sb = draw_stage1_samples(500, region, ObstacleSampler{}, bar, 1.5, b);
  REQUIRE(sa.size() == 500);
  int near = 0;
  for (std::size_t k = 0; k < sa.size(); ++k) {
    CHECK(sa[k].p == sb[k].p);
    CHECK(sa[k].obs == sb[k].obs);
    CHECK(region.contains(sa[k].obs.center()));
    CHECK(sa[k].obs.radius >= 0.15);
    CHECK(sa[k].obs.radius <= 0.6);
    const double gap = (sa[k].p - sa[k].obs.center()).norm() - (sa[k].obs.radius + bar.r_rob + bar.s);
    if (std::abs(gap) <= 0.3) ++near;
  }
  CHECK(near >= 200);
  for (const auto& name : scenario_names()) {
    const Workspace w = make_scenario(name, 0).workspace;
    CHECK(region.x_min <= w.x_min);
    CHECK(region.x_max >= w.x_max);
    CHECK(region.y_min <= w.y_min);
    CHECK(region.y_max >= w.y_max);
  }
}

TEST_CASE("filter loss gradient matches finite differences") {
  const BarrierConfig bar;
  MlpParams p = init_params(3);
  p.b3 = 0.2;
  FilterSample fs;
  fs.x = {0.0, 0.0, 0.0, 0.5};
  fs.w_nom = Vec2(1.0, 0.2);
  fs.entities = {{0.9, 0.1, 0.3}, {0.5, -0.9, 0.2}};
  if (filter_loss(p, fs, bar, 1.5) == 0.0) fs.w_nom = Vec2(3.0, 0.0);
  MlpParams g = unflatten(Eigen::VectorXd::Zero(MlpParams::size()));
  const double loss = filter_loss(p, fs, bar, 1.5, 1.0, &g);
  REQUIRE(loss > 0.0);
  const Eigen::VectorXd flat = flatten(p), gflat = flatten(g);
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<Eigen::Index> pick(0, flat.size() - 1);
  int close = 0;
  for (int k = 0; k < 30; ++k) {
    const Eigen::Index i = pick(rng);
    Eigen::VectorXd hi = flat, lo = flat;
    hi[i] += 1e-5;
    lo[i] -= 1e-5;
    const double fd = (filter_loss(unflatten(hi), fs, bar, 1.5) - filter_loss(unflatten(lo), fs, bar, 1.5)) / 2e-5;
    if (std::abs(fd - gflat[i]) <= 1e-4 * std::max({std::abs(fd), std::abs(gflat[i]), 1e-4})) ++close;
  }
  CHECK(close >= 28);  // the projection is piecewise smooth; a probe may straddle a kink
}

TEST_CASE("held-out set has the documented size and is seeded") {
  const auto a = held_out_set(1);
  CHECK(a.size() == 10000);
  const auto b = held_out_set(1);
  CHECK(a.front().first == b.front().first);
  CHECK(a.back().second == b.back().second);
}

TEST_CASE("short training runs are deterministic") {
  TrainConfig cfg;
  cfg.epochs_stage1 = 1;
  cfg.samples_per_epoch = 2048;
  const BarrierConfig bar;
  std::vector<double> c1, c2;
  const MlpParams a = stage1_pretrain(cfg, training_region(), ObstacleSampler{}, bar, 5, &c1);
  const MlpParams b = stage1_pretrain(cfg, training_region(), ObstacleSampler{}, bar, 5, &c2);
  CHECK(flatten(a) == flatten(b));
  CHECK(c1 == c2);
  CHECK(model_to_json(a, bar).dump() == model_to_json(b, bar).dump());
  TrainConfig bad;
  bad.batch = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
