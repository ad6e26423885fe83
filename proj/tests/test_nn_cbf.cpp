#include "formula/io.hpp"
#include "formula/nn_cbf.hpp"
#include "formula/training.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <random>

using namespace formula;

namespace {

MlpParams random_params(std::uint64_t seed) {
  MlpParams p = init_params(seed);
  std::mt19937_64 rng(seed + 99);
  std::normal_distribution<double> N(0.0, 0.1);
  for (int i = 0; i < kMlpHidden; ++i) {
    p.b1[i] = N(rng);
    p.b2[i] = N(rng);
  }
  p.b3 = N(rng);
  return p;
}

std::vector<CbfSample> random_batch(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  std::vector<CbfSample> batch(n);
  for (int b = 0; b < n; ++b) {
    auto& s = batch[b];
    s.p = Vec2(3.0 * U(rng), 2.0 * U(rng));
    s.obs = {2.0 * U(rng), 1.5 * U(rng), 0.4 + 0.2 * U(rng)};
    s.label = static_cast<SampleLabel>(b % 3);
    s.u_ref = Vec2(U(rng), U(rng));
    s.h_true = h_analytic(s.p, s.obs, BarrierConfig{});
  }
  return batch;
}

}  // namespace

TEST_CASE("forward matches a scalar reference network") {
  const MlpParams p = random_params(1);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> U(-4.0, 4.0);
  Eigen::MatrixXd inputs(5, 30);
  std::vector<double> ref;
  for (int k = 0; k < 30; ++k) {
    const Vec2 q(U(rng), U(rng));
    const Obstacle o{U(rng), U(rng), 0.5};
    inputs.col(k) = mlp_input<double>(q, o);
    ref.push_back(oracle::mlp_reference(p, q, o));
    CHECK(forward(p, q, o) == doctest::Approx(ref.back()).epsilon(1e-12));
  }
  const Eigen::VectorXd batch = forward_batch(p, inputs);
  for (int k = 0; k < 30; ++k) CHECK(batch[k] == doctest::Approx(ref[k]).epsilon(1e-12));
}

TEST_CASE("input gradient matches central differences") {
  const MlpParams p = random_params(3);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> U(-4.0, 4.0);
  for (int k = 0; k < 25; ++k) {
    const Vec2 q(U(rng), U(rng));
    const Obstacle o{U(rng), U(rng), 0.4};
    const Vec2 g = input_gradient(p, q, o);
    const double e = 1e-5;
    for (int d = 0; d < 2; ++d) {
      Vec2 hi = q, lo = q;
      hi[d] += e;
      lo[d] -= e;
      const double fd = (forward(p, hi, o) - forward(p, lo, o)) / (2 * e);
      CHECK(oracle::relative_error(g[d], fd, 1e-6) < 1e-4);
    }
  }
}

TEST_CASE("tangent pass gives value and directional derivative") {
  const MlpParams p = random_params(5);
  std::mt19937_64 rng(6);
  auto batch = random_batch(rng, 12);
  Eigen::MatrixXd in(5, 12), tan = Eigen::MatrixXd::Zero(5, 12);
  for (int b = 0; b < 12; ++b) {
    in.col(b) = mlp_input<double>(batch[b].p, batch[b].obs);
    tan.col(b).head<2>() = batch[b].u_ref;
  }
  const TangentForward f = forward_tangent(p, in, tan);
  for (int b = 0; b < 12; ++b) {
    CHECK(f.h[b] == doctest::Approx(forward(p, batch[b].p, batch[b].obs)));
    CHECK(f.h_dot[b] == doctest::Approx(input_gradient(p, batch[b].p, batch[b].obs).dot(batch[b].u_ref)));
  }
}

TEST_CASE("loss matches the hinge definitions and its gradient the finite differences") {
  const MlpParams p = random_params(7);
  std::mt19937_64 rng(8);
  const auto batch = random_batch(rng, 24);
  TrainConfig cfg;
  for (bool reg : {false, true}) {
    const LossGradient lg = param_gradient(p, batch, cfg, reg);
    CHECK(lg.loss == doctest::Approx(oracle::loss_reference(p, batch, cfg, reg)).epsilon(1e-6));
    const Eigen::VectorXd flat = flatten(p);
    const Eigen::VectorXd g = flatten(lg.grad);
    std::uniform_int_distribution<Eigen::Index> pick(0, flat.size() - 1);
    for (int k = 0; k < 30; ++k) {
      const Eigen::Index i = pick(rng);
      Eigen::VectorXd hi = flat, lo = flat;
      hi[i] += 1e-5;
      lo[i] -= 1e-5;
      const double fd = (param_gradient(unflatten(hi), batch, cfg, reg).loss -
                         param_gradient(unflatten(lo), batch, cfg, reg).loss) / 2e-5;
      CHECK(oracle::relative_error(g[i], fd, 1e-6) < 1e-4);
    }
  }
  CHECK_THROWS_AS(param_gradient(p, std::span<const CbfSample>{}, cfg, false), ConfigError);
}

TEST_CASE("flatten round trip and seeded init") {
  const MlpParams p = random_params(9);
  const Eigen::VectorXd flat = flatten(p);
  CHECK(flat.size() == MlpParams::size());
  CHECK(flatten(unflatten(flat)) == flat);
  CHECK(flatten(init_params(4)) == flatten(init_params(4)));
  CHECK(flatten(init_params(4)) != flatten(init_params(5)));
  const MlpParams z = init_params(4);
  CHECK(z.b1.isZero());
  const double bound = std::sqrt(6.0 / (5 + 64));
  CHECK(z.W1.cwiseAbs().maxCoeff() <= bound);
}

TEST_CASE("first Adam step moves every parameter by lr against its gradient sign") {
  MlpParams p = random_params(10);
  const Eigen::VectorXd before = flatten(p);
  Eigen::VectorXd gflat = Eigen::VectorXd::LinSpaced(before.size(), -1.0, 1.0);
  gflat[gflat.size() / 2] = 0.3;  // avoid an exact zero
  AdamState st;
  TrainConfig cfg;
  adam_step(p, unflatten(gflat), st, 1, cfg);
  const Eigen::VectorXd delta = flatten(p) - before;
  for (Eigen::Index i = 0; i < delta.size(); i += 37)
    CHECK(delta[i] == doctest::Approx(-cfg.lr * gflat[i] / (std::abs(gflat[i]) + cfg.adam_eps)).epsilon(1e-6));
  CHECK(st.m.size() == before.size());
}

TEST_CASE("model files round trip and reject bad content") {
  const MlpParams p = random_params(11);
  BarrierConfig bar;
  bar.s = 0.25;
  const auto path = (std::filesystem::temp_directory_path() / "formula_model_test.json").string();
  save_model(path, p, bar);
  BarrierConfig back;
  const MlpParams q = load_model(path, &back);
  CHECK(flatten(q) == flatten(p));
  CHECK(back.s == 0.25);
  std::remove(path.c_str());

  nlohmann::json j = model_to_json(p, bar);
  j["format"] = "something-else";
  CHECK_THROWS_AS(model_from_json(j), ConfigError);
  j = model_to_json(p, bar);
  j["W1"].erase(0);
  CHECK_THROWS_AS(model_from_json(j), ConfigError);
  j = model_to_json(p, bar);
  j.erase("b3");
  CHECK_THROWS_AS(model_from_json(j), ConfigError);
  CHECK_THROWS(load_model("/nonexistent/dir/model.json"));
}
