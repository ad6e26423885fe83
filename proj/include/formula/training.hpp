#pragma once

#include "formula/barrier.hpp"
#include "formula/nn_cbf.hpp"
#include "formula/scenario.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace formula {

/// Region covering every built-in scenario, used for stage-1 sampling.
Workspace training_region();

/// Obstacle radii drawn uniformly; the range covers neighbour robots (r_rob) too.
struct ObstacleSampler {
  double r_min = 0.15;
  double r_max = 0.6;
};

/// Labelled point for (p, obs): safe/unsafe by the analytic sign, or, with
/// probability `dynamics_fraction` for safe points, a dynamics sample whose u_ref is
/// uniform in the v_max disk projected onto the analytic velocity constraint.
CbfSample label_sample(const Vec2& p, const Obstacle& obs, const BarrierConfig& barrier,
                       double v_max, double dynamics_fraction, std::mt19937_64& rng);

/// Half near the inflated boundary (within 0.3 m), a fifth uniform over the region,
/// the rest within sensing range of the obstacle.
std::vector<CbfSample> draw_stage1_samples(int count, const Workspace& region,
                                           const ObstacleSampler& sampler,
                                           const BarrierConfig& barrier, double v_max,
                                           std::mt19937_64& rng);

/// Stage 1: imitation of the analytic barrier with the hinge terms plus regression.
/// Appends the mean per-sample loss of each epoch to `loss_curve` when given, and
/// hands back the optimizer moments through `optimizer` so stage 2 can continue them.
MlpParams stage1_pretrain(const TrainConfig& cfg, const Workspace& region,
                          const ObstacleSampler& sampler, const BarrierConfig& barrier,
                          std::uint64_t seed, std::vector<double>* loss_curve = nullptr,
                          AdamState* optimizer = nullptr);

/// A harvested robot-tick: state, nominal planar velocity and sensed entities.
struct FilterSample {
  RobotState x;
  Vec2 w_nom = Vec2::Zero();
  std::vector<Obstacle> entities;
};

/// ||w* - w_nom||^2 through the velocity projection with learned constraints. When
/// `grad` is given, adds the parameter gradient times `weight` (constraint
/// sensitivities by central differences, then exact backprop through the network).
double filter_loss(const MlpParams& params, const FilterSample& sample,
                   const BarrierConfig& barrier, double v_max, double weight = 1.0,
                   MlpParams* grad = nullptr);

struct HarvestSet {
  std::vector<CbfSample> points;
  std::vector<FilterSample> filter;
};

/// Runs the CLF+CBF-QP baseline on every scenario (capped at `max_duration`) and
/// collects near-boundary points, Gaussian perturbations of them, and filter samples.
HarvestSet harvest(const std::vector<Scenario>& scenarios, const BarrierConfig& barrier,
                   double v_max, double max_duration, std::uint64_t seed);

/// Mean hinge loss over the harvested points plus sigma times the mean filter loss.
double harvest_loss(const MlpParams& params, const HarvestSet& set, const TrainConfig& cfg,
                    const BarrierConfig& barrier, double v_max);

struct Stage2Report {
  std::vector<double> loss_curve;
  double harvest_loss_start = 0.0;
  double harvest_loss_end = 0.0;
  int harvested_points = 0;
  int harvested_filter_samples = 0;
};

/// Stage 2: continues training with the stage-1 loss on harvested points (half of
/// every batch) and fresh stage-1 samples (other half), plus sigma * filter loss.
/// Pass the stage-1 `optimizer` to continue its moments instead of restarting Adam.
MlpParams stage2_finetune(const MlpParams& params, const TrainConfig& cfg,
                          const std::vector<Scenario>& scenarios, const BarrierConfig& barrier,
                          std::uint64_t seed, Stage2Report* report = nullptr,
                          AdamState* optimizer = nullptr);

struct FidelityReport {
  double sign_agreement = 0.0;  // fraction in [0, 1]
  double mse = 0.0;
  double variance = 0.0;  // of h_true
  int n = 0;
};

/// Held-out set: 16 seeded obstacles, each against a 25 x 25 grid over the default
/// 10 m x 4.5 m workspace (10^4 points).
std::vector<std::pair<Vec2, Obstacle>> held_out_set(std::uint64_t seed);

FidelityReport evaluate_fidelity(const MlpParams& params, const BarrierConfig& barrier,
                                 std::uint64_t seed);

/// Fraction of held-out points where sign(h(p, o)) == sign(h(p + shift, o + shift)).
double translation_agreement(const MlpParams& params, const Vec2& shift, std::uint64_t seed);

}  // namespace formula
