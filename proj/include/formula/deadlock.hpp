#pragma once

#include "formula/types.hpp"

#include <span>
#include <vector>

namespace formula {

struct DeadlockConfig {
  double rotation_angle = std::numbers::pi / 4.0;  // radians, in (0, pi/2]
  double scale = 1.0;
  int cooldown_steps = 20;
  /// Magnitudes at or below this count as zero inside the indicator's sign terms.
  double deadband = 0.0;
  /// Keep applying T to the current nominal state for the whole cooldown window
  /// instead of only on the trigger tick.
  bool hold = false;

  void validate() const;
};

/// sign with a symmetric dead band: 0 for |x| <= band.
int sign_with_deadband(double x, double band);

/// E = sign(|J - L| + |v|) - sign(J). A deadlock is declared when E < 0.
int indicator(double j_clf, double l_cbf, double v, double deadband = 0.0);

/// x~ = T (xhat - x) + x with T = blockdiag(scale R(angle), I2).
RobotState perturb_nominal(const RobotState& x, const RobotState& xhat, const DeadlockConfig& cfg);

struct DeadlockTrigger {
  int step = 0;
  double time = 0.0;
  int robot = 0;
};

/// Per-robot inputs to one resolver call.
struct DeadlockProbe {
  double j_clf = 0.0;
  double l_cbf = 0.0;
};

/// Event-triggered resolver. A robot whose indicator is negative and that is not in
/// a cooldown window gets its nominal state replaced and starts a cooldown of
/// cooldown_steps ticks; every other robot passes through unchanged, except that
/// with `hold` a robot inside its window keeps receiving the perturbed state.
class DeadlockResolver {
 public:
  explicit DeadlockResolver(int n_robots, DeadlockConfig cfg = {});

  /// Returns the (possibly perturbed) nominal states and records new triggers.
  std::vector<RobotState> resolve(int step, double time, std::span<const DeadlockProbe> probes,
                                  std::span<const RobotState> states,
                                  std::span<const RobotState> nominal);

  /// True while robot i is inside a cooldown window at `step`.
  bool active(int i, int step) const;

  /// Nominal state robot i should track at `step` before this step's indicator is
  /// evaluated: perturbed while a held window opened on an earlier step is running.
  RobotState held_nominal(int i, int step, const RobotState& x, const RobotState& xhat) const;

  const std::vector<DeadlockTrigger>& triggers() const { return triggers_; }
  const DeadlockConfig& config() const { return cfg_; }

 private:
  DeadlockConfig cfg_;
  std::vector<int> window_start_;
  std::vector<DeadlockTrigger> triggers_;
};

}  // namespace formula
