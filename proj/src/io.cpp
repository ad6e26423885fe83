#include "formula/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace formula {
namespace {

constexpr const char* kModelFormat = "formula-nn-cbf";
constexpr int kModelVersion = 1;

const std::array<const char*, 8> kFollowerColors = {"#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e",
                                                    "#17becf", "#8c564b", "#e377c2", "#7f7f7f"};
constexpr const char* kLeaderColor = "#d62728";

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd json_matrix(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols,
                            const char* name) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
    throw ConfigError(std::string("model: ") + name + " has the wrong number of rows");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[r];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw ConfigError(std::string("model: ") + name + " has the wrong number of columns");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[c].get<double>();
  }
  return m;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& s) {
  double x = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    throw ConfigError("csv: cannot parse number '" + s + "'");
  }
  return x;
}

std::string svg_num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", x);
  return buf;
}

}  // namespace

std::string content_hash(std::string_view content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr) throw std::runtime_error("content_hash: cannot allocate digest context");
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, digest.data(), &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw std::runtime_error("content_hash: digest failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

void write_text_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  out.close();
  if (!out) throw std::runtime_error("failed writing " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

std::string rollout_to_csv(const RolloutLog& log) {
  std::string out = kRolloutCsvHeader;
  out += '\n';
  for (std::size_t k = 0; k < log.steps.size(); ++k) {
    const auto& row = log.steps[k];
    for (int r = 0; r < log.n_robots(); ++r) {
      const auto& x = row.states[r];
      const auto& u = row.inputs[r];
      const auto& un = row.nominal_inputs[r];
      out += std::to_string(k) + ',' + format_double(row.time) + ',' + std::to_string(r) + ',' +
             log.roles[r] + ',' + format_double(x.px) + ',' + format_double(x.py) + ',' +
             format_double(x.theta) + ',' + format_double(x.v) + ',' + format_double(u.a) + ',' +
             format_double(u.omega) + ',' + format_double(un.a) + ',' + format_double(un.omega) +
             ',' + format_double(row.h_min[r]) + ',' + format_double(row.formation_error[r]) + ',' +
             format_double(row.j_clf[r]) + ',' + std::to_string(row.deadlock[r]) + '\n';
    }
  }
  return out;
}

RolloutLog rollout_from_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line != kRolloutCsvHeader)
    throw ConfigError("csv: unexpected header");
  RolloutLog log;
  std::map<int, std::string> roles;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 16) throw ConfigError("csv: expected 16 columns");
    const auto k = static_cast<std::size_t>(std::stoul(f[0]));
    const int r = std::stoi(f[2]);
    if (k >= log.steps.size()) log.steps.resize(k + 1);
    auto& row = log.steps[k];
    row.time = parse_double(f[1]);
    const auto need = static_cast<std::size_t>(r + 1);
    if (row.states.size() < need) {
      row.states.resize(need);
      row.inputs.resize(need);
      row.nominal_inputs.resize(need);
      row.h_min.resize(need);
      row.formation_error.resize(need);
      row.j_clf.resize(need);
      row.deadlock.resize(need);
    }
    roles[r] = f[3];
    row.states[r] = {parse_double(f[4]), parse_double(f[5]), parse_double(f[6]), parse_double(f[7])};
    row.inputs[r] = {parse_double(f[8]), parse_double(f[9])};
    row.nominal_inputs[r] = {parse_double(f[10]), parse_double(f[11])};
    row.h_min[r] = parse_double(f[12]);
    row.formation_error[r] = parse_double(f[13]);
    row.j_clf[r] = parse_double(f[14]);
    row.deadlock[r] = std::stoi(f[15]);
  }
  if (log.steps.empty()) throw ConfigError("csv: no rows");
  for (const auto& [r, role] : roles) log.roles.push_back(role);
  log.has_leader = !log.roles.empty() && log.roles.front() == "leader";
  if (log.steps.size() > 1) log.dt = log.steps[1].time - log.steps[0].time;
  for (std::size_t k = 0; k < log.steps.size(); ++k) {
    if (log.steps[k].states.size() != log.roles.size())
      throw ConfigError("csv: step " + std::to_string(k) + " is missing robots");
    for (int r = 0; r < log.n_robots(); ++r)
      if (log.steps[k].deadlock[r] != 0)
        log.triggers.push_back({static_cast<int>(k), log.steps[k].time, r});
  }
  return log;
}

nlohmann::json metrics_to_json(const Metrics& m) {
  return {{"safety_rate", m.safety_rate},
          {"avg_formation_error", m.avg_formation_error},
          {"avg_min_distance", m.avg_min_distance},
          {"completion", m.completion},
          {"wall_time", m.wall_time},
          {"n_steps", m.n_steps}};
}

nlohmann::json rollout_sidecar(const RolloutLog& log, const Scenario& scenario,
                               const SimOptions& opt, const Metrics& metrics,
                               const std::string& csv_hash, const std::string& model_path) {
  nlohmann::json j;
  j["scenario"] = scenario_to_json(scenario);
  j["scenario_hash"] = log.scenario_hash;
  j["controller"] = log.controller;
  j["seed"] = log.seed;
  j["config"] = {
      {"model", model_path},
      {"deadlock_resolution", opt.deadlock_resolution},
      {"sensing_radius", opt.sensing_radius},
      {"clf", {{"horizon_steps", opt.clf.horizon_steps},
               {"beta", opt.clf.beta},
               {"slack_weight", opt.clf.slack_weight},
               {"slack_linear_weight", opt.clf.slack_linear_weight},
               {"max_iterations", opt.clf.max_iterations}}},
      {"mpc_cbf", {{"horizon_steps", opt.mpc_cbf.horizon_steps},
                   {"alpha", opt.mpc_cbf.alpha},
                   {"slack_weight", opt.mpc_cbf.slack_weight}}},
      {"apf", {{"k_att", opt.apf.k_att}, {"k_rep", opt.apf.k_rep}, {"rho0", opt.apf.rho0}}},
      {"deadlock", {{"rotation_angle", opt.deadlock.rotation_angle},
                    {"scale", opt.deadlock.scale},
                    {"cooldown_steps", opt.deadlock.cooldown_steps},
                    {"deadband", opt.deadlock.deadband},
                    {"hold", opt.deadlock.hold}}}};
  j["metrics"] = metrics_to_json(metrics);
  j["completion_time"] = log.completion_time;
  j["controller_failures"] = log.controller_failures;
  j["deadlock_trigger_count"] = log.triggers.size();
  nlohmann::json triggers = nlohmann::json::array();
  for (const auto& t : log.triggers) triggers.push_back({{"step", t.step}, {"time", t.time}, {"robot", t.robot}});
  j["deadlock_triggers"] = triggers;
  j["csv_hash"] = csv_hash;
  return j;
}

std::string trajectory_svg(const RolloutLog& log, const Scenario& sc) {
  const auto& ws = sc.workspace;
  const double scale = 100.0;
  auto X = [&](double x) { return svg_num((x - ws.x_min) * scale); };
  auto Y = [&](double y) { return svg_num((ws.y_max - y) * scale); };
  const std::string w = svg_num(ws.width() * scale);
  const std::string h = svg_num(ws.height() * scale);

  std::ostringstream s;
  s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << w << ' ' << h
    << "\" width=\"" << w << "\" height=\"" << h << "\">\n"
    << "<rect x=\"0\" y=\"0\" width=\"" << w << "\" height=\"" << h
    << "\" fill=\"white\" stroke=\"black\" stroke-width=\"2\"/>\n";
  for (const auto& o : sc.obstacles) {
    s << "<circle cx=\"" << X(o.cx) << "\" cy=\"" << Y(o.cy) << "\" r=\"" << svg_num(o.radius * scale)
      << "\" fill=\"#888888\"/>\n";
    s << "<circle cx=\"" << X(o.cx) << "\" cy=\"" << Y(o.cy) << "\" r=\""
      << svg_num((o.radius + sc.barrier.r_rob + sc.barrier.s) * scale)
      << "\" fill=\"none\" stroke=\"#bbbbbb\" stroke-dasharray=\"4 4\"/>\n";
  }
  std::vector<Vec2> goals;
  if (sc.has_leader) goals.push_back(sc.leader_path.goal);
  for (const auto& r : sc.references) goals.push_back(r.goal);
  for (const auto& g : goals)
    s << "<rect x=\"" << svg_num((g[0] - ws.x_min) * scale - 6) << "\" y=\""
      << svg_num((ws.y_max - g[1]) * scale - 6)
      << "\" width=\"12\" height=\"12\" fill=\"none\" stroke=\"black\" stroke-width=\"2\"/>\n";

  int follower_idx = 0;
  for (int r = 0; r < log.n_robots(); ++r) {
    const bool leader = log.roles[r] == "leader";
    const char* color = leader ? kLeaderColor : kFollowerColors[follower_idx++ % kFollowerColors.size()];
    s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << (leader ? 3 : 2)
      << "\" points=\"";
    for (std::size_t k = 0; k < log.steps.size(); ++k) {
      const auto& x = log.steps[k].states[r];
      s << (k ? " " : "") << X(x.px) << ',' << Y(x.py);
    }
    s << "\"/>\n";
    const auto& x0 = log.steps.front().states[r];
    const auto& xf = log.steps.back().states[r];
    s << "<circle cx=\"" << X(x0.px) << "\" cy=\"" << Y(x0.py) << "\" r=\"6\" fill=\"" << color
      << "\"/>\n";
    s << "<circle cx=\"" << X(xf.px) << "\" cy=\"" << Y(xf.py) << "\" r=\""
      << svg_num(sc.barrier.r_rob * scale) << "\" fill=\"none\" stroke=\"" << color << "\"/>\n";
  }
  s << "</svg>\n";
  return s.str();
}

std::string comparison_to_csv(const std::vector<ComparisonRow>& rows) {
  std::string out = kComparisonCsvHeader;
  out += '\n';
  for (const auto& r : rows)
    out += std::to_string(r.followers) + ',' + r.controller + ',' + std::to_string(r.runs) + ',' +
           std::to_string(r.failed) + ',' + format_double(r.safety_mean) + ',' +
           format_double(r.safety_std) + ',' + format_double(r.error_mean) + ',' +
           format_double(r.error_std) + ',' + format_double(r.distance_mean) + ',' +
           format_double(r.distance_std) + ',' + format_double(r.completion_rate) + '\n';
  return out;
}

std::string comparison_svg(const std::vector<ComparisonRow>& rows) {
  std::vector<int> sizes;
  std::vector<std::string> controllers;
  for (const auto& r : rows) {
    if (std::find(sizes.begin(), sizes.end(), r.followers) == sizes.end()) sizes.push_back(r.followers);
    if (std::find(controllers.begin(), controllers.end(), r.controller) == controllers.end())
      controllers.push_back(r.controller);
  }
  const double bar = 30.0;
  const double group = bar * static_cast<double>(controllers.size()) + 40.0;
  const double plot_h = 300.0;
  const double left = 50.0;
  const double width = left + group * static_cast<double>(std::max<std::size_t>(sizes.size(), 1)) + 160.0;
  const double height = plot_h + 80.0;
  const std::array<const char*, 4> colors = {kLeaderColor, "#1f77b4", "#2ca02c", "#7f7f7f"};

  std::ostringstream s;
  s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << svg_num(width) << ' '
    << svg_num(height) << "\" width=\"" << svg_num(width) << "\" height=\"" << svg_num(height)
    << "\">\n<rect x=\"0\" y=\"0\" width=\"" << svg_num(width) << "\" height=\"" << svg_num(height)
    << "\" fill=\"white\"/>\n";
  const double base = 20.0 + plot_h;
  s << "<line x1=\"" << left << "\" y1=\"" << base << "\" x2=\"" << svg_num(width - 150.0)
    << "\" y2=\"" << base << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << left << "\" y1=\"20\" x2=\"" << left << "\" y2=\"" << base
    << "\" stroke=\"black\"/>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double y = base - plot_h * tick / 4.0;
    s << "<text x=\"" << left - 8 << "\" y=\"" << svg_num(y + 4)
      << "\" font-size=\"11\" text-anchor=\"end\">" << svg_num(tick / 4.0) << "</text>\n";
  }
  for (std::size_t g = 0; g < sizes.size(); ++g) {
    const double gx = left + 20.0 + group * static_cast<double>(g);
    for (std::size_t c = 0; c < controllers.size(); ++c) {
      const auto it = std::find_if(rows.begin(), rows.end(), [&](const ComparisonRow& r) {
        return r.followers == sizes[g] && r.controller == controllers[c];
      });
      if (it == rows.end()) continue;
      const double x = gx + bar * static_cast<double>(c);
      const double mean = std::clamp(it->safety_mean, 0.0, 1.0);
      const double top = base - plot_h * mean;
      s << "<rect x=\"" << svg_num(x) << "\" y=\"" << svg_num(top) << "\" width=\"" << bar - 4
        << "\" height=\"" << svg_num(base - top) << "\" fill=\"" << colors[c % colors.size()]
        << "\"/>\n";
      const double lo = base - plot_h * std::clamp(it->safety_mean - it->safety_std, 0.0, 1.0);
      const double hi = base - plot_h * std::clamp(it->safety_mean + it->safety_std, 0.0, 1.0);
      const double cx = x + (bar - 4) / 2.0;
      s << "<line x1=\"" << svg_num(cx) << "\" y1=\"" << svg_num(lo) << "\" x2=\"" << svg_num(cx)
        << "\" y2=\"" << svg_num(hi) << "\" stroke=\"black\"/>\n";
    }
    s << "<text x=\"" << svg_num(gx + bar * controllers.size() / 2.0) << "\" y=\"" << base + 20
      << "\" font-size=\"12\" text-anchor=\"middle\">" << sizes[g] << " followers</text>\n";
  }
  for (std::size_t c = 0; c < controllers.size(); ++c) {
    const double y = 30.0 + 20.0 * static_cast<double>(c);
    s << "<rect x=\"" << svg_num(width - 140.0) << "\" y=\"" << svg_num(y - 10) << "\" width=\"12\" height=\"12\" fill=\""
      << colors[c % colors.size()] << "\"/>\n<text x=\"" << svg_num(width - 122.0) << "\" y=\"" << svg_num(y)
      << "\" font-size=\"12\">" << controllers[c] << "</text>\n";
  }
  s << "<text x=\"" << left << "\" y=\"14\" font-size=\"12\">safety rate</text>\n</svg>\n";
  return s.str();
}

nlohmann::json model_to_json(const MlpParams& p, const BarrierConfig& barrier) {
  if (!p.has_valid_shapes()) throw ConfigError("model: invalid parameter shapes");
  nlohmann::json j;
  j["format"] = kModelFormat;
  j["version"] = kModelVersion;
  j["inputs"] = kMlpInputs;
  j["hidden"] = {kMlpHidden, kMlpHidden};
  j["activation"] = "silu";
  j["barrier"] = {{"r_rob", barrier.r_rob}, {"s", barrier.s}, {"alpha", barrier.alpha}};
  j["W1"] = matrix_json(p.W1);
  j["b1"] = matrix_json(p.b1);
  j["W2"] = matrix_json(p.W2);
  j["b2"] = matrix_json(p.b2);
  j["W3"] = matrix_json(p.W3);
  j["b3"] = p.b3;
  return j;
}

MlpParams model_from_json(const nlohmann::json& j, BarrierConfig* barrier) {
  try {
    if (j.at("format").get<std::string>() != kModelFormat)
      throw ConfigError("model: unexpected format tag");
    if (j.at("version").get<int>() != kModelVersion) throw ConfigError("model: unsupported version");
    if (j.at("inputs").get<int>() != kMlpInputs ||
        j.at("hidden") != nlohmann::json({kMlpHidden, kMlpHidden}) ||
        j.at("activation").get<std::string>() != "silu")
      throw ConfigError("model: architecture does not match 5-64-64-1 SiLU");
    MlpParams p;
    p.W1 = json_matrix(j.at("W1"), kMlpHidden, kMlpInputs, "W1");
    p.b1 = json_matrix(j.at("b1"), kMlpHidden, 1, "b1");
    p.W2 = json_matrix(j.at("W2"), kMlpHidden, kMlpHidden, "W2");
    p.b2 = json_matrix(j.at("b2"), kMlpHidden, 1, "b2");
    p.W3 = json_matrix(j.at("W3"), 1, kMlpHidden, "W3");
    p.b3 = j.at("b3").get<double>();
    if (barrier != nullptr) {
      const auto& b = j.at("barrier");
      barrier->r_rob = b.at("r_rob").get<double>();
      barrier->s = b.at("s").get<double>();
      barrier->alpha = b.at("alpha").get<double>();
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
}

void save_model(const std::string& path, const MlpParams& params, const BarrierConfig& barrier) {
  write_text_file(path, model_to_json(params, barrier).dump() + "\n");
}

MlpParams load_model(const std::string& path, BarrierConfig* barrier) {
  const std::string text = read_text_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("model file " + path + ": " + e.what());
  }
  return model_from_json(j, barrier);
}

}  // namespace formula
