#include "formula/scenario.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace formula {
namespace {

constexpr double kPathClearanceMargin = 0.05;
constexpr double kObstacleGap = 0.4;
constexpr int kPlacementAttempts = 20000;

// Offsets relative to the leader for the built-in leader-follower formations.
std::vector<Vec2> offsets_for(int n_followers) {
  switch (n_followers) {
    case 2:
      return {{-1.0, 1.0}, {-1.0, -1.0}};
    case 4:
      return {{-1.0, 1.0}, {-1.0, -1.0}, {-2.0, 1.0}, {-2.0, -1.0}};
    case 8:
      return {{0.0, 1.0},  {0.0, -1.0}, {-1.0, 1.0},  {-1.0, 0.0},
              {-1.0, -1.0}, {-2.0, 1.0}, {-2.0, 0.0}, {-2.0, -1.0}};
    default:
      throw ConfigError("scenario: no built-in formation for " + std::to_string(n_followers) +
                        " followers");
  }
}

// Seeded obstacles that leave the leader's straight path passable and keep a gap
// between any two obstacles.
std::vector<Obstacle> place_obstacles(int count, const Workspace& ws, const PathSpec& path,
                                      const BarrierConfig& barrier, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> radius_dist(0.25, 0.45);
  std::uniform_real_distribution<double> x_dist(-2.0, 4.5);
  std::uniform_real_distribution<double> y_dist(ws.y_min, ws.y_max);
  const Vec2 dir = (path.goal - path.start).normalized();
  const double inflation = barrier.r_rob + barrier.s;

  std::vector<Obstacle> out;
  for (int attempt = 0; attempt < kPlacementAttempts && static_cast<int>(out.size()) < count;
       ++attempt) {
    const double r = radius_dist(rng);
    const Obstacle cand{x_dist(rng), y_dist(rng), r};
    const Vec2 c = cand.center();
    if (c[0] - r < ws.x_min || c[0] + r > ws.x_max || c[1] - r < ws.y_min || c[1] + r > ws.y_max)
      continue;
    const Vec2 rel = c - path.start;
    const double lateral = std::abs(dir[0] * rel[1] - dir[1] * rel[0]);
    if (lateral < r + inflation + kPathClearanceMargin) continue;
    bool clash = false;
    for (const auto& o : out)
      if ((o.center() - c).norm() < o.radius + r + kObstacleGap) clash = true;
    if (!clash) out.push_back(cand);
  }
  if (static_cast<int>(out.size()) < count)
    throw ConfigError("scenario: could not place " + std::to_string(count) + " obstacles");
  return out;
}

Scenario leader_follower(const std::string& name, int n_followers, int n_obstacles,
                         std::uint64_t seed) {
  Scenario sc;
  sc.name = name;
  sc.seed = seed;
  sc.leader_path = {Vec2(-3.0, 0.0), Vec2(4.0, 0.0), 0.5};
  sc.duration = 40.0;
  const auto offsets = offsets_for(n_followers);
  sc.formation = formation_from_offsets(offsets);
  for (const auto& d : offsets) {
    const Vec2 p = sc.leader_path.start + d;
    sc.follower_starts.push_back({p[0], p[1], 0.0, 0.0});
  }
  sc.obstacles = place_obstacles(n_obstacles, sc.workspace, sc.leader_path, sc.barrier, seed);
  return sc;
}

Scenario open_corridor(std::uint64_t seed) {
  Scenario sc;
  sc.name = "open-2f";
  sc.seed = seed;
  sc.workspace = {-8.0, 8.0, -2.25, 2.25};
  sc.leader_path = {Vec2(-7.0, 0.0), Vec2(7.0, 0.0), 0.5};
  sc.duration = 45.0;
  const auto offsets = offsets_for(2);
  sc.formation = formation_from_offsets(offsets);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-0.3, 0.3);
  for (const auto& d : offsets) {
    const Vec2 p = sc.leader_path.start + d + Vec2(jitter(rng), jitter(rng));
    sc.follower_starts.push_back({p[0], p[1], jitter(rng), 0.0});
  }
  return sc;
}

Scenario intersection(std::uint64_t seed) {
  Scenario sc;
  sc.name = "intersection-4";
  sc.seed = seed;
  sc.workspace = {-5.0, 5.0, -5.0, 5.0};
  sc.has_leader = false;
  sc.duration = 60.0;
  const std::vector<std::pair<Vec2, Vec2>> legs = {{{-4.0, 0.0}, {4.0, 0.0}},
                                                   {{0.0, -4.0}, {0.0, 4.0}},
                                                   {{4.0, 0.0}, {-4.0, 0.0}},
                                                   {{0.0, 4.0}, {0.0, -4.0}}};
  for (const auto& [start, goal] : legs) {
    PathSpec ref{start, goal, 0.5};
    sc.references.push_back(ref);
    sc.follower_starts.push_back({start[0], start[1], ref.heading(), 0.0});
  }
  sc.formation = FormationSpec::independent(4);
  return sc;
}

nlohmann::json vec2_json(const Vec2& v) { return nlohmann::json::array({v[0], v[1]}); }
Vec2 json_vec2(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

nlohmann::json path_json(const PathSpec& p) {
  return {{"start", vec2_json(p.start)}, {"goal", vec2_json(p.goal)}, {"speed", p.speed}};
}
PathSpec json_path(const nlohmann::json& j) {
  return {json_vec2(j.at("start")), json_vec2(j.at("goal")), j.value("speed", 0.5)};
}

}  // namespace

RobotState PathSpec::state_at(double t) const {
  const double len = length();
  const double travelled = std::min(speed * std::max(t, 0.0), len);
  const Vec2 dir = len > 0.0 ? Vec2((goal - start) / len) : Vec2(1.0, 0.0);
  const Vec2 p = start + travelled * dir;
  return {p[0], p[1], heading(), travelled < len ? speed : 0.0};
}

void Scenario::validate() const {
  if (!(workspace.x_min < workspace.x_max && workspace.y_min < workspace.y_max))
    throw ConfigError("scenario: empty workspace");
  if (!(duration >= 0.0) || !std::isfinite(duration))
    throw ConfigError("scenario: duration must be finite and nonnegative");
  if (!(dt > 0.0)) throw ConfigError("scenario: dt must be positive");
  limits.validate();
  barrier.validate();
  for (const auto& o : obstacles) {
    if (!(o.radius > 0.0)) throw ConfigError("scenario: obstacle radius must be positive");
    if (!workspace.contains(o.center()))
      throw ConfigError("scenario: obstacle centre outside the workspace");
  }
  if (follower_starts.empty()) throw ConfigError("scenario: need at least one follower");
  formation.validate();
  if (formation.n_followers != n_followers())
    throw ConfigError("scenario: formation size does not match follower count");
  auto check_path = [](const PathSpec& p) {
    if (p.length() <= 0.0) throw ConfigError("scenario: path start and goal must differ");
    if (!(p.speed > 0.0)) throw ConfigError("scenario: path speed must be positive");
  };
  if (has_leader) {
    check_path(leader_path);
  } else {
    if (static_cast<int>(references.size()) != n_followers())
      throw ConfigError("scenario: one reference path per robot is required without a leader");
    for (const auto& r : references) check_path(r);
    for (int i = 0; i < n_followers(); ++i)
      if (formation.s(i) != 1 || formation.c.row(i).sum() != 0)
        throw ConfigError("scenario: leaderless robots must track only their own reference");
  }
}

std::vector<std::string> scenario_names() {
  return {"triangle-2f", "clutter-4f", "clutter-8f", "intersection-4", "open-2f"};
}

Scenario make_scenario(const std::string& name, std::uint64_t seed) {
  Scenario sc;
  if (name == "triangle-2f") {
    sc = leader_follower(name, 2, 3, seed);
  } else if (name == "clutter-4f") {
    sc = leader_follower(name, 4, 6, seed);
  } else if (name == "clutter-8f") {
    sc = leader_follower(name, 8, 10, seed);
  } else if (name == "intersection-4") {
    sc = intersection(seed);
  } else if (name == "open-2f") {
    sc = open_corridor(seed);
  } else {
    std::string msg = "unknown scenario '" + name + "'; available:";
    for (const auto& n : scenario_names()) msg += " " + n;
    throw ConfigError(msg);
  }
  sc.validate();
  return sc;
}

FormationSpec formation_from_offsets(const std::vector<Vec2>& offsets) {
  const int n = static_cast<int>(offsets.size());
  FormationSpec spec;
  spec.n_followers = n;
  spec.c = Eigen::MatrixXi::Zero(n, n);
  spec.s = Eigen::VectorXi::Zero(n);
  spec.delta_neighbor.assign(n, std::vector<Vec4>(n, Vec4::Zero()));
  spec.delta_leader.assign(n, Vec4::Zero());
  for (int i = 0; i < n; ++i) {
    spec.delta_leader[i] << offsets[i][0], offsets[i][1], 0.0, 0.0;
    if (offsets[i].norm() <= 1.5) spec.s(i) = 1;
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const Vec2 d = offsets[i] - offsets[j];
      spec.delta_neighbor[i][j] << d[0], d[1], 0.0, 0.0;
      if (d.norm() <= 1.05) spec.c(i, j) = 1;
    }
  }
  return spec;
}

// Schema (all lengths in metres, times in seconds):
// {
//   "name": str, "seed": int, "dt": num, "duration": num,
//   "workspace": {"x_min","x_max","y_min","y_max"},
//   "obstacles": [{"cx","cy","radius"}],
//   "has_leader": bool,
//   "leader_path": {"start": [x,y], "goal": [x,y], "speed": num},
//   "references": [path, ...]            (has_leader = false only),
//   "followers": [{"px","py","theta","v"}],
//   "formation": {"c": [[0/1]], "s": [0/1], "delta_leader": [[dx,dy]],
//                 "delta_neighbor": [[[dx,dy]]], "body_frame": bool},
//   "limits": {"a_min","a_max","omega_min","omega_max","v_min","v_max"},
//   "barrier": {"r_rob","s","alpha"}
// }
nlohmann::json scenario_to_json(const Scenario& sc) {
  nlohmann::json j;
  j["name"] = sc.name;
  j["seed"] = sc.seed;
  j["dt"] = sc.dt;
  j["duration"] = sc.duration;
  j["workspace"] = {{"x_min", sc.workspace.x_min},
                    {"x_max", sc.workspace.x_max},
                    {"y_min", sc.workspace.y_min},
                    {"y_max", sc.workspace.y_max}};
  j["obstacles"] = nlohmann::json::array();
  for (const auto& o : sc.obstacles)
    j["obstacles"].push_back({{"cx", o.cx}, {"cy", o.cy}, {"radius", o.radius}});
  j["has_leader"] = sc.has_leader;
  if (sc.has_leader) j["leader_path"] = path_json(sc.leader_path);
  j["references"] = nlohmann::json::array();
  for (const auto& r : sc.references) j["references"].push_back(path_json(r));
  j["followers"] = nlohmann::json::array();
  for (const auto& x : sc.follower_starts)
    j["followers"].push_back({{"px", x.px}, {"py", x.py}, {"theta", x.theta}, {"v", x.v}});

  const auto& f = sc.formation;
  nlohmann::json form;
  form["body_frame"] = f.body_frame;
  form["c"] = nlohmann::json::array();
  form["delta_neighbor"] = nlohmann::json::array();
  form["s"] = nlohmann::json::array();
  form["delta_leader"] = nlohmann::json::array();
  for (int i = 0; i < f.n_followers; ++i) {
    nlohmann::json c_row = nlohmann::json::array();
    nlohmann::json d_row = nlohmann::json::array();
    for (int jj = 0; jj < f.n_followers; ++jj) {
      c_row.push_back(f.c(i, jj));
      d_row.push_back({f.delta_neighbor[i][jj][0], f.delta_neighbor[i][jj][1]});
    }
    form["c"].push_back(c_row);
    form["delta_neighbor"].push_back(d_row);
    form["s"].push_back(f.s(i));
    form["delta_leader"].push_back({f.delta_leader[i][0], f.delta_leader[i][1]});
  }
  j["formation"] = form;
  j["limits"] = {{"a_min", sc.limits.a_min},         {"a_max", sc.limits.a_max},
                 {"omega_min", sc.limits.omega_min}, {"omega_max", sc.limits.omega_max},
                 {"v_min", sc.limits.v_min},         {"v_max", sc.limits.v_max}};
  j["barrier"] = {{"r_rob", sc.barrier.r_rob}, {"s", sc.barrier.s}, {"alpha", sc.barrier.alpha}};
  return j;
}

Scenario scenario_from_json(const nlohmann::json& j) {
  try {
    Scenario sc;
    sc.name = j.value("name", std::string("custom"));
    sc.seed = j.value("seed", std::uint64_t{0});
    sc.dt = j.value("dt", 0.05);
    sc.duration = j.at("duration").get<double>();
    if (j.contains("workspace")) {
      const auto& w = j["workspace"];
      sc.workspace = {w.at("x_min").get<double>(), w.at("x_max").get<double>(),
                      w.at("y_min").get<double>(), w.at("y_max").get<double>()};
    }
    for (const auto& o : j.value("obstacles", nlohmann::json::array()))
      sc.obstacles.push_back({o.at("cx").get<double>(), o.at("cy").get<double>(),
                              o.at("radius").get<double>()});
    sc.has_leader = j.value("has_leader", true);
    if (sc.has_leader) sc.leader_path = json_path(j.at("leader_path"));
    for (const auto& r : j.value("references", nlohmann::json::array()))
      sc.references.push_back(json_path(r));
    for (const auto& x : j.at("followers"))
      sc.follower_starts.push_back({x.at("px").get<double>(), x.at("py").get<double>(),
                                    x.value("theta", 0.0), x.value("v", 0.0)});

    const int n = static_cast<int>(sc.follower_starts.size());
    if (j.contains("formation")) {
      const auto& form = j["formation"];
      FormationSpec& f = sc.formation;
      f.n_followers = n;
      f.body_frame = form.value("body_frame", false);
      f.c = Eigen::MatrixXi::Zero(n, n);
      f.s = Eigen::VectorXi::Zero(n);
      f.delta_neighbor.assign(n, std::vector<Vec4>(n, Vec4::Zero()));
      f.delta_leader.assign(n, Vec4::Zero());
      for (int i = 0; i < n; ++i) {
        f.s(i) = form.at("s").at(i).get<int>();
        const auto& dl = form.at("delta_leader").at(i);
        f.delta_leader[i] << dl.at(0).get<double>(), dl.at(1).get<double>(), 0.0, 0.0;
        for (int jj = 0; jj < n; ++jj) {
          f.c(i, jj) = form.at("c").at(i).at(jj).get<int>();
          const auto& dn = form.at("delta_neighbor").at(i).at(jj);
          f.delta_neighbor[i][jj] << dn.at(0).get<double>(), dn.at(1).get<double>(), 0.0, 0.0;
        }
      }
    } else {
      sc.formation = FormationSpec::independent(n);
    }
    if (j.contains("limits")) {
      const auto& l = j["limits"];
      sc.limits = {l.value("a_min", -2.0),     l.value("a_max", 2.0), l.value("omega_min", -2.0),
                   l.value("omega_max", 2.0), l.value("v_min", 0.0), l.value("v_max", 1.5)};
    }
    if (j.contains("barrier")) {
      const auto& b = j["barrier"];
      sc.barrier.r_rob = b.value("r_rob", sc.barrier.r_rob);
      sc.barrier.s = b.value("s", sc.barrier.s);
      sc.barrier.alpha = b.value("alpha", sc.barrier.alpha);
    }
    sc.validate();
    return sc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("scenario file: ") + e.what());
  }
}

Scenario resolve_scenario(const std::string& name_or_path, std::uint64_t seed) {
  for (const auto& n : scenario_names())
    if (n == name_or_path) return make_scenario(n, seed);
  std::ifstream in(name_or_path);
  if (!in) {
    std::string msg = "unknown scenario '" + name_or_path + "' (not a file); available:";
    for (const auto& n : scenario_names()) msg += " " + n;
    throw ConfigError(msg);
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("scenario file " + name_or_path + ": " + e.what());
  }
  return scenario_from_json(j);
}

}  // namespace formula
