#include "formula/training.hpp"

#include "formula/metrics.hpp"
#include "formula/safety_filter.hpp"
#include "formula/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace formula {
namespace {

constexpr double kShell = 0.3;
constexpr double kNearBoundary = 1.0;
constexpr double kPerturbStd = 0.3;
constexpr int kPerturbCopies = 2;
constexpr std::size_t kMaxHarvestPoints = 40000;
constexpr std::size_t kMaxFilterSamples = 4000;
constexpr int kFilterBatch = 32;
constexpr double kFdStep = 1e-6;

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

template <typename T>
void shuffle_truncate(std::vector<T>& v, std::size_t cap, std::mt19937_64& rng) {
  // Fisher-Yates with our own draws so the order does not depend on the library.
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
  if (v.size() > cap) v.resize(cap);
}

std::optional<double> projection_cost(const Vec2& w_nom,
                                      const std::vector<HalfspaceConstraint>& cons, double v_max) {
  const auto w = qp_solve(w_nom, cons, v_max);
  if (!w) return std::nullopt;
  return (*w - w_nom).squaredNorm();
}

}  // namespace

Workspace training_region() { return {-8.0, 8.0, -5.0, 5.0}; }

CbfSample label_sample(const Vec2& p, const Obstacle& obs, const BarrierConfig& barrier,
                       double v_max, double dynamics_fraction, std::mt19937_64& rng) {
  CbfSample s;
  s.p = p;
  s.obs = obs;
  s.h_true = h_analytic(p, obs, barrier);
  if (s.h_true < 0.0) {
    s.label = SampleLabel::kUnsafe;
    return s;
  }
  s.label = SampleLabel::kSafe;
  if (uniform(rng, 0.0, 1.0) < dynamics_fraction) {
    s.label = SampleLabel::kDynamics;
    // Uniform in the disk, conditioned on the analytic velocity constraint. The zero
    // velocity is always admissible at h >= 0, so the fallback never breaks it.
    const auto c = velocity_constraint(p, obs, barrier);
    s.u_ref = Vec2::Zero();
    for (int attempt = 0; attempt < 64; ++attempt) {
      const double radius = v_max * std::sqrt(uniform(rng, 0.0, 1.0));
      const double angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      const Vec2 w(radius * std::cos(angle), radius * std::sin(angle));
      if (c.a.dot(w) >= c.b) {
        s.u_ref = w;
        break;
      }
    }
  }
  return s;
}

std::vector<CbfSample> draw_stage1_samples(int count, const Workspace& region,
                                           const ObstacleSampler& sampler,
                                           const BarrierConfig& barrier, double v_max,
                                           std::mt19937_64& rng) {
  std::vector<CbfSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const Obstacle obs{uniform(rng, region.x_min, region.x_max),
                       uniform(rng, region.y_min, region.y_max),
                       uniform(rng, sampler.r_min, sampler.r_max)};
    const double inflated = obs.radius + barrier.r_rob + barrier.s;
    const double mode = uniform(rng, 0.0, 1.0);
    Vec2 p;
    if (mode < 0.5) {
      const double d = inflated + uniform(rng, -kShell, kShell);
      const double a = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      p = obs.center() + d * Vec2(std::cos(a), std::sin(a));
    } else if (mode < 0.7) {
      p = {uniform(rng, region.x_min, region.x_max), uniform(rng, region.y_min, region.y_max)};
    } else {
      const double reach = inflated + kDefaultSensingRadius;
      const double d = reach * std::sqrt(uniform(rng, 0.0, 1.0));
      const double a = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      p = obs.center() + d * Vec2(std::cos(a), std::sin(a));
    }
    out.push_back(label_sample(p, obs, barrier, v_max, 0.5, rng));
  }
  return out;
}

MlpParams stage1_pretrain(const TrainConfig& cfg, const Workspace& region,
                          const ObstacleSampler& sampler, const BarrierConfig& barrier,
                          std::uint64_t seed, std::vector<double>* loss_curve,
                          AdamState* optimizer) {
  cfg.validate();
  barrier.validate();
  std::mt19937_64 rng(seed);
  MlpParams params = init_params(seed);
  AdamState adam;
  const double v_max = Limits{}.v_max;
  const int steps = std::max(1, cfg.samples_per_epoch / cfg.batch);
  for (int epoch = 0; epoch < cfg.epochs_stage1; ++epoch) {
    double total = 0.0;
    for (int s = 0; s < steps; ++s) {
      const auto batch = draw_stage1_samples(cfg.batch, region, sampler, barrier, v_max, rng);
      const LossGradient lg = param_gradient(params, batch, cfg, true);
      if (!std::isfinite(lg.loss)) throw NumericalError("stage 1: non-finite loss");
      adam_step(params, lg.grad, adam, ++adam.t, cfg);
      total += lg.loss;
    }
    if (loss_curve) loss_curve->push_back(total / (static_cast<double>(steps) * cfg.batch));
  }
  if (optimizer) *optimizer = std::move(adam);
  return params;
}

double filter_loss(const MlpParams& params, const FilterSample& sample,
                   const BarrierConfig& barrier, double v_max, double weight, MlpParams* grad) {
  const auto m = static_cast<Eigen::Index>(sample.entities.size());
  if (m == 0) return 0.0;
  Eigen::MatrixXd inputs(kMlpInputs, m);
  std::vector<HalfspaceConstraint> cons(static_cast<std::size_t>(m));
  const Vec2 p = sample.x.position();
  for (Eigen::Index k = 0; k < m; ++k) {
    const Obstacle& o = sample.entities[static_cast<std::size_t>(k)];
    inputs.col(k) = mlp_input<double>(p, o);
    cons[static_cast<std::size_t>(k)] = {input_gradient(params, p, o),
                                         -barrier.alpha * forward(params, p, o)};
  }
  const auto base = projection_cost(sample.w_nom, cons, v_max);
  if (!base) return 0.0;
  if (grad == nullptr || *base == 0.0) return *base;

  Eigen::MatrixXd tangents = Eigen::MatrixXd::Zero(kMlpInputs, m);
  Eigen::VectorXd dl_dh = Eigen::VectorXd::Zero(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    auto& c = cons[static_cast<std::size_t>(k)];
    auto central = [&](double& field) {
      const double keep = field;
      field = keep + kFdStep;
      const auto up = projection_cost(sample.w_nom, cons, v_max);
      field = keep - kFdStep;
      const auto down = projection_cost(sample.w_nom, cons, v_max);
      field = keep;
      return (up && down) ? (*up - *down) / (2.0 * kFdStep) : 0.0;
    };
    tangents(0, k) = weight * central(c.a[0]);
    tangents(1, k) = weight * central(c.a[1]);
    dl_dh[k] = -barrier.alpha * weight * central(c.b);
  }
  const TangentForward f = forward_tangent(params, inputs, tangents);
  backward_tangent(params, f, inputs, tangents, dl_dh, Eigen::VectorXd::Ones(m), *grad);
  return *base;
}

HarvestSet harvest(const std::vector<Scenario>& scenarios, const BarrierConfig& barrier,
                   double v_max, double max_duration, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, kPerturbStd);
  HarvestSet set;
  for (const auto& base : scenarios) {
    Scenario sc = base;
    sc.duration = std::min(sc.duration, max_duration);
    SimOptions opt;
    opt.controller = ControllerKind::kClfCbfQp;
    const RolloutLog log = run(sc, opt);
    for (const auto& row : log.steps) {
      for (int r = 0; r < log.n_robots(); ++r) {
        const RobotState& x = row.states[r];
        const Vec2 p = x.position();
        std::vector<Obstacle> sensed;
        std::vector<Obstacle> near;
        auto consider = [&](const Obstacle& o) {
          const double d = surface_distance(p, o, barrier.r_rob);
          if (d <= kDefaultSensingRadius) sensed.push_back(o);
          if (d < kNearBoundary) near.push_back(o);
        };
        for (const auto& o : sc.obstacles) consider(o);
        for (int j = 0; j < log.n_robots(); ++j)
          if (j != r) consider({row.states[j].px, row.states[j].py, barrier.r_rob});
        if (near.empty()) continue;
        for (const auto& o : near) {
          set.points.push_back(label_sample(p, o, barrier, v_max, 0.5, rng));
          for (int c = 0; c < kPerturbCopies; ++c) {
            const Vec2 q = p + Vec2(noise(rng), noise(rng));
            set.points.push_back(label_sample(q, o, barrier, v_max, 0.5, rng));
          }
        }
        set.filter.push_back(
            {x, predicted_velocity(x, row.nominal_inputs[r], sc.limits, sc.dt), sensed});
      }
    }
  }
  shuffle_truncate(set.points, kMaxHarvestPoints, rng);
  shuffle_truncate(set.filter, kMaxFilterSamples, rng);
  return set;
}

double harvest_loss(const MlpParams& params, const HarvestSet& set, const TrainConfig& cfg,
                    const BarrierConfig& barrier, double v_max) {
  double hinge = 0.0;
  const std::size_t chunk = 2048;
  for (std::size_t i = 0; i < set.points.size(); i += chunk) {
    const std::size_t len = std::min(chunk, set.points.size() - i);
    hinge += param_gradient(params, std::span(set.points).subspan(i, len), cfg, false).loss;
  }
  double filter = 0.0;
  for (const auto& s : set.filter) filter += filter_loss(params, s, barrier, v_max);
  const double mean_hinge = set.points.empty() ? 0.0 : hinge / static_cast<double>(set.points.size());
  const double mean_filter = set.filter.empty() ? 0.0 : filter / static_cast<double>(set.filter.size());
  return mean_hinge + cfg.sigma * mean_filter;
}

MlpParams stage2_finetune(const MlpParams& initial, const TrainConfig& cfg,
                          const std::vector<Scenario>& scenarios, const BarrierConfig& barrier,
                          std::uint64_t seed, Stage2Report* report, AdamState* optimizer) {
  cfg.validate();
  MlpParams params = initial;
  if (cfg.epochs_stage2 == 0) return params;
  const double v_max = Limits{}.v_max;
  const HarvestSet set = harvest(scenarios, barrier, v_max, 20.0, seed);
  if (report) {
    report->harvested_points = static_cast<int>(set.points.size());
    report->harvested_filter_samples = static_cast<int>(set.filter.size());
    report->harvest_loss_start = harvest_loss(params, set, cfg, barrier, v_max);
  }

  std::mt19937_64 rng(seed + 1);
  AdamState local;
  AdamState& adam = optimizer ? *optimizer : local;
  const int steps = std::max(1, cfg.samples_per_epoch / cfg.batch);
  const int from_harvest = set.points.empty() ? 0 : cfg.batch / 2;
  const Workspace region = training_region();
  for (int epoch = 0; epoch < cfg.epochs_stage2; ++epoch) {
    double total = 0.0;
    for (int s = 0; s < steps; ++s) {
      auto batch = draw_stage1_samples(cfg.batch - from_harvest, region, ObstacleSampler{},
                                       barrier, v_max, rng);
      for (int b = 0; b < from_harvest; ++b)
        batch.push_back(set.points[static_cast<std::size_t>(rng() % set.points.size())]);
      LossGradient lg = param_gradient(params, batch, cfg, true);
      double lu = 0.0;
      for (int b = 0; b < kFilterBatch && !set.filter.empty(); ++b) {
        const auto& fs = set.filter[static_cast<std::size_t>(rng() % set.filter.size())];
        lu += filter_loss(params, fs, barrier, v_max, cfg.sigma, &lg.grad);
      }
      lg.loss += cfg.sigma * lu;
      if (!std::isfinite(lg.loss)) throw NumericalError("stage 2: non-finite loss");
      adam_step(params, lg.grad, adam, ++adam.t, cfg);
      total += lg.loss;
    }
    if (report) report->loss_curve.push_back(total / (static_cast<double>(steps) * cfg.batch));
  }
  if (report) report->harvest_loss_end = harvest_loss(params, set, cfg, barrier, v_max);
  return params;
}

std::vector<std::pair<Vec2, Obstacle>> held_out_set(std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  const Workspace ws;
  const ObstacleSampler sampler;
  const int grid = 25;
  std::vector<std::pair<Vec2, Obstacle>> out;
  out.reserve(16 * grid * grid);
  for (int o = 0; o < 16; ++o) {
    const Obstacle obs{uniform(rng, ws.x_min, ws.x_max), uniform(rng, ws.y_min, ws.y_max),
                       uniform(rng, sampler.r_min, sampler.r_max)};
    for (int i = 0; i < grid; ++i)
      for (int j = 0; j < grid; ++j)
        out.emplace_back(Vec2(ws.x_min + (i + 0.5) * ws.width() / grid,
                              ws.y_min + (j + 0.5) * ws.height() / grid),
                         obs);
  }
  return out;
}

FidelityReport evaluate_fidelity(const MlpParams& params, const BarrierConfig& barrier,
                                 std::uint64_t seed) {
  const auto set = held_out_set(seed);
  FidelityReport rep;
  rep.n = static_cast<int>(set.size());
  Eigen::MatrixXd inputs(kMlpInputs, rep.n);
  Eigen::VectorXd truth(rep.n);
  for (int i = 0; i < rep.n; ++i) {
    inputs.col(i) = mlp_input<double>(set[i].first, set[i].second);
    truth[i] = h_analytic(set[i].first, set[i].second, barrier);
  }
  const Eigen::VectorXd h = forward_batch(params, inputs);
  int agree = 0;
  for (int i = 0; i < rep.n; ++i)
    if ((h[i] >= 0.0) == (truth[i] >= 0.0)) ++agree;
  rep.sign_agreement = static_cast<double>(agree) / rep.n;
  rep.mse = (h - truth).squaredNorm() / rep.n;
  rep.variance = (truth.array() - truth.mean()).square().mean();
  return rep;
}

double translation_agreement(const MlpParams& params, const Vec2& shift, std::uint64_t seed) {
  const auto set = held_out_set(seed);
  const auto n = static_cast<Eigen::Index>(set.size());
  Eigen::MatrixXd a(kMlpInputs, n);
  Eigen::MatrixXd b(kMlpInputs, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& [p, o] = set[static_cast<std::size_t>(i)];
    a.col(i) = mlp_input<double>(p, o);
    b.col(i) = mlp_input<double>(Vec2(p + shift), Obstacle{o.cx + shift[0], o.cy + shift[1], o.radius});
  }
  const Eigen::VectorXd ha = forward_batch(params, a);
  const Eigen::VectorXd hb = forward_batch(params, b);
  int agree = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    if ((ha[i] >= 0.0) == (hb[i] >= 0.0)) ++agree;
  return static_cast<double>(agree) / static_cast<double>(n);
}

}  // namespace formula
