#pragma once

#include "formula/barrier.hpp"
#include "formula/metrics.hpp"
#include "formula/nn_cbf.hpp"
#include "formula/scenario.hpp"
#include "formula/simulation.hpp"

#include <json.hpp>

#include <string>
#include <string_view>
#include <vector>

namespace formula {

/// Git blob hash: hex SHA-1 of "blob <size>\0" followed by the content.
std::string content_hash(std::string_view content);

/// Throws std::runtime_error when the file cannot be written completely.
void write_text_file(const std::string& path, std::string_view content);
std::string read_text_file(const std::string& path);

/// Shortest decimal that round-trips to the same double.
std::string format_double(double x);

/// Column order of rollout CSV files.
inline constexpr const char* kRolloutCsvHeader =
    "step,time,robot,role,px,py,theta,v,a,omega,a_nominal,omega_nominal,h_min,"
    "formation_error,j_clf,deadlock";

/// One row per step per robot.
std::string rollout_to_csv(const RolloutLog& log);
/// Restores rows and roles; header fields (scenario, controller, seed) come from the sidecar.
RolloutLog rollout_from_csv(const std::string& csv);

nlohmann::json metrics_to_json(const Metrics& metrics);

/// Scenario, run configuration, metrics, trigger log and the CSV content hash.
nlohmann::json rollout_sidecar(const RolloutLog& log, const Scenario& scenario,
                               const SimOptions& options, const Metrics& metrics,
                               const std::string& csv_hash, const std::string& model_path);

/// Workspace, obstacles, trajectories (leader red), start and goal markers.
std::string trajectory_svg(const RolloutLog& log, const Scenario& scenario);

struct ComparisonRow {
  int followers = 0;
  std::string controller;
  int runs = 0;
  int failed = 0;
  double safety_mean = 0.0;
  double safety_std = 0.0;
  double error_mean = 0.0;
  double error_std = 0.0;
  double distance_mean = 0.0;
  double distance_std = 0.0;
  double completion_rate = 0.0;
};

inline constexpr const char* kComparisonCsvHeader =
    "followers,controller,runs,failed,safety_rate_mean,safety_rate_std,"
    "avg_formation_error_mean,avg_formation_error_std,avg_min_distance_mean,"
    "avg_min_distance_std,completion_rate";

std::string comparison_to_csv(const std::vector<ComparisonRow>& rows);
/// Grouped bars of mean safety rate per team size with one-std whiskers.
std::string comparison_svg(const std::vector<ComparisonRow>& rows);

/// Model file: JSON with format tag, layer shapes, activation, the barrier
/// configuration it was trained for, and row-major weights.
nlohmann::json model_to_json(const MlpParams& params, const BarrierConfig& barrier);
/// Throws ConfigError on a wrong format tag, version or shape.
MlpParams model_from_json(const nlohmann::json& j, BarrierConfig* barrier = nullptr);
void save_model(const std::string& path, const MlpParams& params, const BarrierConfig& barrier);
MlpParams load_model(const std::string& path, BarrierConfig* barrier = nullptr);

}  // namespace formula
