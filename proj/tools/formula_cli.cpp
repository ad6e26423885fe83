// formula: train the barrier network, run rollouts, evaluate and compare controllers.

#include "formula/io.hpp"
#include "formula/metrics.hpp"
#include "formula/scenario.hpp"
#include "formula/simulation.hpp"
#include "formula/training.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace formula;

namespace {

struct Options {
  std::string scenario = "triangle-2f";
  std::string controller = "proposed";
  std::uint64_t seed = 0;
  std::string model;
  std::string out;
  std::string log;
  std::vector<int> followers = {2, 4, 8};
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  int epochs_stage1 = TrainConfig{}.epochs_stage1;
  int epochs_stage2 = TrainConfig{}.epochs_stage2;
  bool no_resolver = false;
};

std::string output_dir(const Options& o) {
  if (!o.out.empty()) return o.out;
  if (const char* env = std::getenv("FORMULA_OUT"); env != nullptr && *env != '\0') return env;
  return "formula_out";
}

fs::path prepare(const Options& o) {
  const fs::path dir = output_dir(o);
  fs::create_directories(dir);
  return dir;
}

std::optional<MlpParams> load_if_needed(const Options& o, ControllerKind kind) {
  if (kind != ControllerKind::kProposed) return std::nullopt;
  if (o.model.empty()) throw ConfigError("the proposed controller needs --model <file>");
  if (!fs::exists(o.model)) throw ConfigError("model file not found: " + o.model);
  return load_model(o.model);
}

SimOptions sim_options(ControllerKind kind, const std::optional<MlpParams>& model, bool resolver) {
  SimOptions opt;
  opt.controller = kind;
  opt.model = model ? &*model : nullptr;
  opt.deadlock_resolution = resolver;
  return opt;
}

std::string clutter_scenario(int followers) {
  switch (followers) {
    case 2: return "triangle-2f";
    case 4: return "clutter-4f";
    case 8: return "clutter-8f";
    default: throw ConfigError("--followers accepts 2, 4 or 8");
  }
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

int cmd_train(const Options& o) {
  const fs::path dir = prepare(o);
  TrainConfig cfg;
  cfg.epochs_stage1 = o.epochs_stage1;
  cfg.epochs_stage2 = o.epochs_stage2;
  cfg.validate();
  const BarrierConfig barrier;

  std::vector<double> curve1;
  AdamState adam;
  std::cerr << "stage 1: " << cfg.epochs_stage1 << " epochs\n";
  const MlpParams stage1 =
      stage1_pretrain(cfg, training_region(), ObstacleSampler{}, barrier, o.seed, &curve1, &adam);
  const FidelityReport fid1 = evaluate_fidelity(stage1, barrier, o.seed + 1);

  std::vector<Scenario> scenarios;
  for (const char* name : {"triangle-2f", "clutter-4f", "clutter-8f", "intersection-4"})
    scenarios.push_back(make_scenario(name, o.seed + 100));
  Stage2Report rep2;
  std::cerr << "stage 2: " << cfg.epochs_stage2 << " epochs\n";
  const MlpParams final_params = stage2_finetune(stage1, cfg, scenarios, barrier, o.seed, &rep2, &adam);
  const FidelityReport fid2 = evaluate_fidelity(final_params, barrier, o.seed + 1);

  const std::string model_path = (dir / "model.json").string();
  save_model(model_path, final_params, barrier);
  save_model((dir / "model_stage1.json").string(), stage1, barrier);

  std::string curves = "stage,epoch,loss\n";
  for (std::size_t e = 0; e < curve1.size(); ++e)
    curves += "1," + std::to_string(e) + ',' + format_double(curve1[e]) + '\n';
  for (std::size_t e = 0; e < rep2.loss_curve.size(); ++e)
    curves += "2," + std::to_string(e) + ',' + format_double(rep2.loss_curve[e]) + '\n';
  write_text_file((dir / "train_losses.csv").string(), curves);

  auto fid_json = [](const FidelityReport& f) {
    return nlohmann::json{{"sign_agreement", f.sign_agreement},
                          {"mse", f.mse},
                          {"h_true_variance", f.variance},
                          {"n", f.n}};
  };
  nlohmann::json report;
  report["config"] = {{"seed", o.seed},
                      {"epochs_stage1", cfg.epochs_stage1},
                      {"epochs_stage2", cfg.epochs_stage2},
                      {"gamma", cfg.gamma},
                      {"sigma", cfg.sigma},
                      {"lr", cfg.lr},
                      {"batch", cfg.batch},
                      {"alpha", cfg.alpha},
                      {"regression_weight", cfg.regression_weight},
                      {"samples_per_epoch", cfg.samples_per_epoch}};
  report["held_out_stage1"] = fid_json(fid1);
  report["held_out_stage2"] = fid_json(fid2);
  report["harvest"] = {{"points", rep2.harvested_points},
                       {"filter_samples", rep2.harvested_filter_samples},
                       {"loss_start", rep2.harvest_loss_start},
                       {"loss_end", rep2.harvest_loss_end}};
  report["model"] = model_path;
  report["model_hash"] = content_hash(read_text_file(model_path));
  write_text_file((dir / "train_report.json").string(), report.dump(2) + "\n");
  std::cout << report.dump(2) << "\n";
  return 0;
}

int cmd_rollout(const Options& o) {
  const ControllerKind kind = parse_controller(o.controller);
  const Scenario sc = resolve_scenario(o.scenario, o.seed);
  const auto model = load_if_needed(o, kind);
  const fs::path dir = prepare(o);
  const SimOptions opt = sim_options(kind, model, !o.no_resolver);
  const RolloutLog log = run(sc, opt);
  const Metrics metrics = compute_metrics(log, sc);

  const std::string stem = "rollout_" + sc.name + "_" + o.controller + "_" + std::to_string(o.seed);
  const std::string csv = rollout_to_csv(log);
  write_text_file((dir / (stem + ".csv")).string(), csv);
  const auto sidecar = rollout_sidecar(log, sc, opt, metrics, content_hash(csv), o.model);
  write_text_file((dir / (stem + ".json")).string(), sidecar.dump(2) + "\n");
  write_text_file((dir / (stem + ".svg")).string(), trajectory_svg(log, sc));
  std::cout << metrics_to_json(metrics).dump(2) << "\n";
  return 0;
}

int cmd_evaluate(const Options& o) {
  const ControllerKind kind = parse_controller(o.controller);
  const auto model = load_if_needed(o, kind);
  const fs::path dir = prepare(o);
  nlohmann::json runs = nlohmann::json::array();
  std::vector<double> safety, error, distance;
  for (const auto seed : o.seeds) {
    const Scenario sc = resolve_scenario(o.scenario, seed);
    const RolloutLog log = run(sc, sim_options(kind, model, !o.no_resolver));
    const Metrics m = compute_metrics(log, sc);
    safety.push_back(m.safety_rate);
    error.push_back(m.avg_formation_error);
    distance.push_back(m.avg_min_distance);
    nlohmann::json entry = metrics_to_json(m);
    entry["seed"] = seed;
    entry["deadlock_trigger_count"] = log.triggers.size();
    runs.push_back(entry);
  }
  nlohmann::json out;
  out["scenario"] = o.scenario;
  out["controller"] = o.controller;
  out["model"] = o.model;
  out["runs"] = runs;
  out["summary"] = {{"safety_rate_mean", mean_of(safety)},
                    {"safety_rate_std", std_of(safety)},
                    {"avg_formation_error_mean", mean_of(error)},
                    {"avg_formation_error_std", std_of(error)},
                    {"avg_min_distance_mean", mean_of(distance)},
                    {"avg_min_distance_std", std_of(distance)}};
  write_text_file((dir / ("evaluate_" + o.scenario + "_" + o.controller + ".json")).string(),
                  out.dump(2) + "\n");
  std::cout << out["summary"].dump(2) << "\n";
  return 0;
}

int cmd_compare(const Options& o) {
  if (o.model.empty()) throw ConfigError("compare needs --model <file>");
  const auto model = load_if_needed(o, ControllerKind::kProposed);
  const fs::path dir = prepare(o);
  std::vector<ComparisonRow> rows;
  for (const int n : o.followers) {
    const std::string name = clutter_scenario(n);
    for (const auto kind : all_controllers()) {
      ComparisonRow row;
      row.followers = n;
      row.controller = controller_name(kind);
      std::vector<double> safety, error, distance;
      int completed = 0;
      for (const auto seed : o.seeds) {
        try {
          const Scenario sc = make_scenario(name, seed);
          const RolloutLog log = run(sc, sim_options(kind, model, true));
          const Metrics m = compute_metrics(log, sc);
          safety.push_back(m.safety_rate);
          error.push_back(m.avg_formation_error);
          distance.push_back(m.avg_min_distance);
          completed += m.completion ? 1 : 0;
        } catch (const std::exception& e) {
          ++row.failed;
          std::cerr << "run failed (" << name << ", " << row.controller << ", seed " << seed
                    << "): " << e.what() << "\n";
        }
      }
      row.runs = static_cast<int>(safety.size());
      row.safety_mean = mean_of(safety);
      row.safety_std = std_of(safety);
      row.error_mean = mean_of(error);
      row.error_std = std_of(error);
      row.distance_mean = mean_of(distance);
      row.distance_std = std_of(distance);
      row.completion_rate = row.runs > 0 ? static_cast<double>(completed) / row.runs : 0.0;
      std::cerr << n << " followers, " << row.controller << ": safety " << row.safety_mean
                << ", error " << row.error_mean << ", min distance " << row.distance_mean << "\n";
      rows.push_back(row);
    }
  }
  const std::string csv = comparison_to_csv(rows);
  write_text_file((dir / "compare.csv").string(), csv);
  write_text_file((dir / "compare.svg").string(), comparison_svg(rows));
  nlohmann::json meta;
  meta["model"] = o.model;
  meta["followers"] = o.followers;
  meta["seeds"] = o.seeds;
  meta["csv_hash"] = content_hash(csv);
  write_text_file((dir / "compare.json").string(), meta.dump(2) + "\n");
  std::cout << csv;
  return 0;
}

int cmd_plot(const Options& o) {
  if (o.log.empty()) throw ConfigError("plot needs --log <rollout.csv>");
  const fs::path csv_path = o.log;
  fs::path sidecar = csv_path;
  sidecar.replace_extension(".json");
  if (!fs::exists(sidecar)) throw ConfigError("sidecar not found: " + sidecar.string());
  const RolloutLog log = rollout_from_csv(read_text_file(csv_path.string()));
  const Scenario sc =
      scenario_from_json(nlohmann::json::parse(read_text_file(sidecar.string())).at("scenario"));
  const fs::path dir = prepare(o);
  fs::path svg = dir / csv_path.filename();
  svg.replace_extension(".svg");
  write_text_file(svg.string(), trajectory_svg(log, sc));
  std::cout << svg.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Formation control with learned barrier functions"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out", o.out, "Output directory (default $FORMULA_OUT or ./formula_out)");
  };
  auto add_sim = [&](CLI::App* sub) {
    sub->add_option("--scenario", o.scenario, "Built-in scenario name or JSON scenario file");
    sub->add_option("--controller", o.controller, "proposed | apf | mpc-cbf | clf-cbf-qp")
        ->check(CLI::IsMember({"proposed", "apf", "mpc-cbf", "clf-cbf-qp"}));
    sub->add_option("--model", o.model, "Barrier model file (proposed controller)");
    sub->add_flag("--no-deadlock-resolution", o.no_resolver, "Disable the deadlock resolver");
  };

  auto* train = app.add_subcommand("train", "Two-stage barrier training");
  add_common(train);
  train->add_option("--seed", o.seed, "Random seed");
  train->add_option("--epochs-stage1", o.epochs_stage1, "Stage-1 epochs")->check(CLI::NonNegativeNumber);
  train->add_option("--epochs-stage2", o.epochs_stage2, "Stage-2 epochs")->check(CLI::NonNegativeNumber);

  auto* rollout = app.add_subcommand("rollout", "Single closed-loop rollout");
  add_common(rollout);
  add_sim(rollout);
  rollout->add_option("--seed", o.seed, "Scenario seed");

  auto* evaluate = app.add_subcommand("evaluate", "Metrics over several seeds");
  add_common(evaluate);
  add_sim(evaluate);
  evaluate->add_option("--seeds", o.seeds, "Scenario seeds")->delimiter(',');

  auto* compare = app.add_subcommand("compare", "All controllers over team sizes and seeds");
  add_common(compare);
  compare->add_option("--model", o.model, "Barrier model file")->required();
  compare->add_option("--followers", o.followers, "Team sizes (2, 4, 8)")->delimiter(',');
  compare->add_option("--seeds", o.seeds, "Scenario seeds")->delimiter(',');

  auto* plot = app.add_subcommand("plot", "Trajectory SVG from a rollout CSV and its sidecar");
  add_common(plot);
  plot->add_option("--log", o.log, "Rollout CSV")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(o);
    if (rollout->parsed()) return cmd_rollout(o);
    if (evaluate->parsed()) return cmd_evaluate(o);
    if (compare->parsed()) return cmd_compare(o);
    if (plot->parsed()) return cmd_plot(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
