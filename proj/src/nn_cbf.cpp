#include "formula/nn_cbf.hpp"

#include <cmath>
#include <string>
#include <random>

namespace formula {
namespace {

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

Eigen::MatrixXd silu_m(const Eigen::MatrixXd& z) {
  return z.unaryExpr([](double t) { return t * sigmoid(t); });
}

Eigen::MatrixXd silu_d1(const Eigen::MatrixXd& z) {
  return z.unaryExpr([](double t) {
    const double s = sigmoid(t);
    return s + t * s * (1.0 - s);
  });
}

Eigen::MatrixXd silu_d2(const Eigen::MatrixXd& z) {
  return z.unaryExpr([](double t) {
    const double s = sigmoid(t);
    return s * (1.0 - s) * (2.0 + t * (1.0 - 2.0 * s));
  });
}

}  // namespace

void TrainConfig::validate() const {
  if (!(gamma > 0.0)) throw ConfigError("train: gamma must be positive");
  if (!(sigma >= 0.0)) throw ConfigError("train: sigma must be nonnegative");
  if (!(lr > 0.0)) throw ConfigError("train: lr must be positive");
  if (batch < 1) throw ConfigError("train: batch must be >= 1");
  if (epochs_stage1 < 0 || epochs_stage2 < 0) throw ConfigError("train: negative epoch count");
  if (samples_per_epoch < 1) throw ConfigError("train: samples_per_epoch must be >= 1");
}

Vec2 input_gradient(const MlpParams& params, const Vec2& p, const Obstacle& obs) {
  const Eigen::Matrix<double, kMlpInputs, 1> z = mlp_input<double>(p, obs);
  const Eigen::VectorXd z1 = params.W1 * z + params.b1;
  const Eigen::VectorXd a1 = silu_m(z1);
  const Eigen::VectorXd z2 = params.W2 * a1 + params.b2;
  const Eigen::VectorXd dz2 = silu_d1(z2).cwiseProduct(params.W3.transpose());
  const Eigen::VectorXd dz1 = silu_d1(z1).cwiseProduct(params.W2.transpose() * dz2);
  const Eigen::VectorXd dz = params.W1.transpose() * dz1;
  return dz.head<2>();
}

TangentForward forward_tangent(const MlpParams& params, const Eigen::MatrixXd& inputs,
                               const Eigen::MatrixXd& tangents) {
  TangentForward f;
  f.z1 = (params.W1 * inputs).colwise() + params.b1;
  f.z1_dot = params.W1 * tangents;
  f.a1 = silu_m(f.z1);
  f.a1_dot = silu_d1(f.z1).cwiseProduct(f.z1_dot);
  f.z2 = (params.W2 * f.a1).colwise() + params.b2;
  f.z2_dot = params.W2 * f.a1_dot;
  f.a2 = silu_m(f.z2);
  f.a2_dot = silu_d1(f.z2).cwiseProduct(f.z2_dot);
  f.h = (params.W3 * f.a2).transpose().array() + params.b3;
  f.h_dot = (params.W3 * f.a2_dot).transpose();
  return f;
}

void backward_tangent(const MlpParams& params, const TangentForward& f,
                      const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& tangents,
                      const Eigen::VectorXd& dl_dh, const Eigen::VectorXd& dl_dhdot,
                      MlpParams& grad) {
  grad.W3.noalias() += (f.a2 * dl_dh).transpose() + (f.a2_dot * dl_dhdot).transpose();
  grad.b3 += dl_dh.sum();

  const Eigen::MatrixXd da2 = params.W3.transpose() * dl_dh.transpose();
  const Eigen::MatrixXd da2_dot = params.W3.transpose() * dl_dhdot.transpose();
  const Eigen::MatrixXd s2 = silu_d1(f.z2);
  const Eigen::MatrixXd dz2_dot = s2.cwiseProduct(da2_dot);
  const Eigen::MatrixXd dz2 =
      s2.cwiseProduct(da2) + silu_d2(f.z2).cwiseProduct(f.z2_dot).cwiseProduct(da2_dot);
  grad.W2.noalias() += dz2 * f.a1.transpose() + dz2_dot * f.a1_dot.transpose();
  grad.b2 += dz2.rowwise().sum();

  const Eigen::MatrixXd da1 = params.W2.transpose() * dz2;
  const Eigen::MatrixXd da1_dot = params.W2.transpose() * dz2_dot;
  const Eigen::MatrixXd s1 = silu_d1(f.z1);
  const Eigen::MatrixXd dz1_dot = s1.cwiseProduct(da1_dot);
  const Eigen::MatrixXd dz1 =
      s1.cwiseProduct(da1) + silu_d2(f.z1).cwiseProduct(f.z1_dot).cwiseProduct(da1_dot);
  grad.W1.noalias() += dz1 * inputs.transpose() + dz1_dot * tangents.transpose();
  grad.b1 += dz1.rowwise().sum();
}

LossGradient param_gradient(const MlpParams& params, std::span<const CbfSample> batch,
                            const TrainConfig& cfg, bool with_regression) {
  if (batch.empty()) throw ConfigError("param_gradient: empty batch");
  const Eigen::Index n = static_cast<Eigen::Index>(batch.size());
  Eigen::MatrixXd inputs(kMlpInputs, n);
  Eigen::MatrixXd tangents = Eigen::MatrixXd::Zero(kMlpInputs, n);
  for (Eigen::Index b = 0; b < n; ++b) {
    const CbfSample& s = batch[b];
    inputs.col(b) = mlp_input<double>(s.p, s.obs);
    if (s.label == SampleLabel::kDynamics) tangents.col(b).head<2>() = s.u_ref;
  }
  const TangentForward f = forward_tangent(params, inputs, tangents);

  LossGradient out;
  Eigen::VectorXd dl_dh = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd dl_dhdot = Eigen::VectorXd::Zero(n);
  for (Eigen::Index b = 0; b < n; ++b) {
    const double h = f.h[b];
    switch (batch[b].label) {
      case SampleLabel::kSafe:
        if (cfg.gamma - h > 0.0) {
          out.loss += cfg.gamma - h;
          dl_dh[b] -= 1.0;
        }
        break;
      case SampleLabel::kUnsafe:
        if (cfg.gamma + h > 0.0) {
          out.loss += cfg.gamma + h;
          dl_dh[b] += 1.0;
        }
        break;
      case SampleLabel::kDynamics: {
        const double slack = cfg.gamma - f.h_dot[b] - cfg.alpha * h;
        if (slack > 0.0) {
          out.loss += slack;
          dl_dh[b] -= cfg.alpha;
          dl_dhdot[b] -= 1.0;
        }
        break;
      }
    }
    if (with_regression) {
      const double r = h - batch[b].h_true;
      out.loss += cfg.regression_weight * r * r / static_cast<double>(n);
      dl_dh[b] += 2.0 * cfg.regression_weight * r / static_cast<double>(n);
    }
  }
  backward_tangent(params, f, inputs, tangents, dl_dh, dl_dhdot, out.grad);
  return out;
}

Eigen::VectorXd flatten(const MlpParams& p) {
  Eigen::VectorXd flat(MlpParams::size());
  Eigen::Index at = 0;
  auto put = [&](const auto& block) {
    flat.segment(at, block.size()) = Eigen::Map<const Eigen::VectorXd>(block.data(), block.size());
    at += block.size();
  };
  put(p.W1);
  put(p.b1);
  put(p.W2);
  put(p.b2);
  put(p.W3);
  flat[at] = p.b3;
  return flat;
}

MlpParams unflatten(const Eigen::VectorXd& flat) {
  if (flat.size() != MlpParams::size())
    throw ConfigError("unflatten: expected " + std::to_string(MlpParams::size()) + " values, got " +
                      std::to_string(flat.size()));
  MlpParams p;
  Eigen::Index at = 0;
  auto take = [&](auto& block) {
    Eigen::Map<Eigen::VectorXd>(block.data(), block.size()) = flat.segment(at, block.size());
    at += block.size();
  };
  take(p.W1);
  take(p.b1);
  take(p.W2);
  take(p.b2);
  take(p.W3);
  p.b3 = flat[at];
  return p;
}

void adam_step(MlpParams& params, const MlpParams& grad, AdamState& state, int t,
               const TrainConfig& cfg) {
  if (t < 1) throw ConfigError("adam_step: step count must be >= 1");
  const Eigen::Index n = MlpParams::size();
  if (state.m.size() != n) state.m = Eigen::VectorXd::Zero(n);
  if (state.v.size() != n) state.v = Eigen::VectorXd::Zero(n);
  const Eigen::VectorXd g = flatten(grad);
  state.m = cfg.adam_beta1 * state.m + (1.0 - cfg.adam_beta1) * g;
  state.v = cfg.adam_beta2 * state.v + (1.0 - cfg.adam_beta2) * g.cwiseAbs2();
  state.t = t;
  const double c1 = 1.0 - std::pow(cfg.adam_beta1, t);
  const double c2 = 1.0 - std::pow(cfg.adam_beta2, t);
  const Eigen::ArrayXd m_hat = state.m.array() / c1;
  const Eigen::ArrayXd v_hat = state.v.array() / c2;
  const Eigen::VectorXd update = (cfg.lr * m_hat / (v_hat.sqrt() + cfg.adam_eps)).matrix();
  params = unflatten(flatten(params) - update);
}

MlpParams init_params(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  MlpParams p;
  auto fill = [&](Eigen::MatrixXd& w) {
    const double bound = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = dist(rng);
  };
  fill(p.W1);
  fill(p.W2);
  fill(p.W3);
  return p;
}

Eigen::VectorXd forward_batch(const MlpParams& params, const Eigen::MatrixXd& inputs) {
  const Eigen::MatrixXd a1 = silu_m((params.W1 * inputs).colwise() + params.b1);
  const Eigen::MatrixXd a2 = silu_m((params.W2 * a1).colwise() + params.b2);
  return (params.W3 * a2).transpose().array() + params.b3;
}

}  // namespace formula
