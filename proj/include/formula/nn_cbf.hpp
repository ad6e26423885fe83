#pragma once

#include "formula/types.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <span>

namespace formula {

inline constexpr int kMlpInputs = 5;
inline constexpr int kMlpHidden = 64;

/// Weights of the 5 -> 64 -> 64 -> 1 barrier network (SiLU hidden layers, linear head).
template <typename Scalar>
struct MlpParamsT {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Matrix W1 = Matrix::Zero(kMlpHidden, kMlpInputs);
  Vector b1 = Vector::Zero(kMlpHidden);
  Matrix W2 = Matrix::Zero(kMlpHidden, kMlpHidden);
  Vector b2 = Vector::Zero(kMlpHidden);
  Matrix W3 = Matrix::Zero(1, kMlpHidden);
  Scalar b3 = Scalar(0);

  static constexpr Eigen::Index size() {
    return kMlpHidden * kMlpInputs + kMlpHidden + kMlpHidden * kMlpHidden + kMlpHidden +
           kMlpHidden + 1;
  }

  bool has_valid_shapes() const {
    return W1.rows() == kMlpHidden && W1.cols() == kMlpInputs && b1.size() == kMlpHidden &&
           W2.rows() == kMlpHidden && W2.cols() == kMlpHidden && b2.size() == kMlpHidden &&
           W3.rows() == 1 && W3.cols() == kMlpHidden;
  }

  template <typename Other>
  MlpParamsT<Other> cast() const {
    MlpParamsT<Other> out;
    out.W1 = W1.template cast<Other>();
    out.b1 = b1.template cast<Other>();
    out.W2 = W2.template cast<Other>();
    out.b2 = b2.template cast<Other>();
    out.W3 = W3.template cast<Other>();
    out.b3 = static_cast<Other>(b3);
    return out;
  }
};

using MlpParams = MlpParamsT<double>;

template <typename Scalar>
Scalar silu(Scalar t) {
  using std::exp;
  return t / (Scalar(1) + exp(-t));
}

/// Network input z = [p; cx; cy; r].
template <typename Scalar>
Eigen::Matrix<Scalar, kMlpInputs, 1> mlp_input(const Eigen::Matrix<Scalar, 2, 1>& p,
                                               const Obstacle& obs) {
  return {p[0], p[1], Scalar(obs.cx), Scalar(obs.cy), Scalar(obs.radius)};
}

/// h = W3 silu(W2 silu(W1 z + b1) + b2) + b3.
template <typename Scalar>
Scalar forward(const MlpParamsT<Scalar>& params, const Eigen::Matrix<Scalar, 2, 1>& p,
               const Obstacle& obs) {
  const auto z = mlp_input<Scalar>(p, obs);
  const auto a1 = (params.W1 * z + params.b1).unaryExpr([](Scalar t) { return silu(t); }).eval();
  const auto a2 = (params.W2 * a1 + params.b2).unaryExpr([](Scalar t) { return silu(t); }).eval();
  return (params.W3 * a2)(0, 0) + params.b3;
}

inline double forward(const MlpParams& params, const Vec2& p, const Obstacle& obs) {
  return forward<double>(params, p, obs);
}

/// Exact dh/dp by reverse mode.
Vec2 input_gradient(const MlpParams& params, const Vec2& p, const Obstacle& obs);

/// Value and directional derivative dh/dp * dir for a batch of inputs in one pass.
struct TangentForward {
  Eigen::MatrixXd z1, a1, z1_dot, a1_dot;
  Eigen::MatrixXd z2, a2, z2_dot, a2_dot;
  Eigen::VectorXd h, h_dot;
};

/// inputs: 5 x B, tangents: 5 x B (only the position rows are normally nonzero).
TangentForward forward_tangent(const MlpParams& params, const Eigen::MatrixXd& inputs,
                               const Eigen::MatrixXd& tangents);

/// Accumulates into `grad` the parameter gradient of sum_b (dL/dh_b h_b + dL/dhdot_b hdot_b).
void backward_tangent(const MlpParams& params, const TangentForward& fwd,
                      const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& tangents,
                      const Eigen::VectorXd& dl_dh, const Eigen::VectorXd& dl_dhdot,
                      MlpParams& grad);

enum class SampleLabel { kSafe, kUnsafe, kDynamics };

/// One training point. h_true feeds the regression term; u_ref the dynamics term.
struct CbfSample {
  Vec2 p = Vec2::Zero();
  Obstacle obs;
  SampleLabel label = SampleLabel::kSafe;
  Vec2 u_ref = Vec2::Zero();
  double h_true = 0.0;
};

struct TrainConfig {
  double gamma = 1e-3;
  double sigma = 1e-2;
  double lr = 1e-3;
  int batch = 512;
  double alpha = 1.0;
  int epochs_stage1 = 200;
  int epochs_stage2 = 20;
  double regression_weight = 1.0;
  int samples_per_epoch = 51200;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

struct LossGradient {
  double loss = 0.0;
  MlpParams grad;
};

/// Hinge CBF loss (safe, unsafe and dynamics terms, summed) plus, when
/// `with_regression` is set, regression_weight * mean((h - h_true)^2); with gradient.
/// Throws ConfigError on an empty batch.
LossGradient param_gradient(const MlpParams& params, std::span<const CbfSample> batch,
                            const TrainConfig& cfg, bool with_regression);

Eigen::VectorXd flatten(const MlpParams& params);
MlpParams unflatten(const Eigen::VectorXd& flat);

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  int t = 0;
};

/// One Adam update at step t (>= 1). Moments are created on first use.
void adam_step(MlpParams& params, const MlpParams& grad, AdamState& state, int t,
               const TrainConfig& cfg);

/// Xavier-uniform weights, zero biases.
MlpParams init_params(std::uint64_t seed);

/// Batched forward pass over 5 x B inputs.
Eigen::VectorXd forward_batch(const MlpParams& params, const Eigen::MatrixXd& inputs);

}  // namespace formula
