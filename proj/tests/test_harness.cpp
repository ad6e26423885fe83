#include "formula/baselines.hpp"
#include "formula/dynamics.hpp"
#include "formula/io.hpp"
#include "formula/metrics.hpp"
#include "formula/scenario.hpp"
#include "formula/simulation.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

using namespace formula;

TEST_CASE("built-in scenarios are valid and seeded") {
  for (const auto& name : scenario_names()) {
    const Scenario a = make_scenario(name, 3);
    CHECK_NOTHROW(a.validate());
    CHECK(scenario_to_json(a) == scenario_to_json(make_scenario(name, 3)));
    const Scenario back = scenario_from_json(scenario_to_json(a));
    CHECK(scenario_to_json(back) == scenario_to_json(a));
  }
  CHECK(make_scenario("clutter-4f", 0).obstacles != make_scenario("clutter-4f", 1).obstacles);
  CHECK(make_scenario("clutter-8f", 0).n_followers() == 8);
  CHECK(make_scenario("intersection-4", 0).n_robots() == 4);
  CHECK(make_scenario("open-2f", 0).obstacles.empty());
}

TEST_CASE("unknown scenario names list the available ones") {
  try {
    make_scenario("nowhere", 0);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("triangle-2f") != std::string::npos);
  }
  CHECK_THROWS_AS(resolve_scenario("/no/such/file.json", 0), std::exception);
}

TEST_CASE("scenario validation catches broken inputs") {
  Scenario sc = make_scenario("triangle-2f", 0);
  sc.obstacles.push_back({100.0, 0.0, 0.3});
  CHECK_THROWS_AS(sc.validate(), ConfigError);
  sc = make_scenario("triangle-2f", 0);
  sc.leader_path.goal = sc.leader_path.start;
  CHECK_THROWS_AS(sc.validate(), ConfigError);
  sc = make_scenario("triangle-2f", 0);
  sc.follower_starts.pop_back();
  CHECK_THROWS_AS(sc.validate(), ConfigError);
  sc = make_scenario("intersection-4", 0);
  sc.references.pop_back();
  CHECK_THROWS_AS(sc.validate(), ConfigError);
  nlohmann::json j = scenario_to_json(make_scenario("open-2f", 0));
  j["dt"] = -0.05;
  CHECK_THROWS_AS(scenario_from_json(j), ConfigError);
  j = scenario_to_json(make_scenario("open-2f", 0));
  j["dt"] = "fast";
  CHECK_THROWS(scenario_from_json(j));
}

TEST_CASE("reference path moves at its speed and stops at the goal") {
  PathSpec p{Vec2(0.0, 0.0), Vec2(3.0, 4.0), 0.5};
  const RobotState s = p.state_at(2.0);
  CHECK(s.px == doctest::Approx(0.6));
  CHECK(s.py == doctest::Approx(0.8));
  CHECK(s.v == doctest::Approx(0.5));
  const RobotState end = p.state_at(100.0);
  CHECK(end.position().isApprox(p.goal));
  CHECK(end.v == 0.0);
}

TEST_CASE("metrics match a hand computation") {
  Scenario sc = make_scenario("open-2f", 0);
  sc.obstacles = {{0.0, 0.0, 0.5}};
  RolloutLog log;
  log.has_leader = false;
  log.roles = {"robot", "robot"};
  // row 0: robot 0 at 1.5 from the obstacle centre -> surface 0.8, robots 3 apart -> 2.6
  // row 1: robot 0 at 0.9 -> surface 0.2 < s
  // row 2: robot 0 inside the obstacle -> penetration counts as 0
  for (double x0 : {1.5, 0.9, 0.3}) {
    StepRecord r;
    r.states = {{x0, 0.0, 0.0, 0.0}, {x0 + 3.0, 0.0, 0.0, 0.0}};
    r.formation_error = {0.1, 0.3};
    log.steps.push_back(r);
  }
  log.completed = true;
  const Metrics m = compute_metrics(log, sc);
  CHECK(m.safety_rate == doctest::Approx(1.0 / 3.0));
  CHECK(m.avg_min_distance == doctest::Approx((0.8 + 0.2 + 0.0) / 3.0));
  CHECK(m.avg_formation_error == doctest::Approx(0.2));
  CHECK(m.completion);
  CHECK(m.n_steps == 3);
  CHECK_THROWS_AS(compute_metrics(RolloutLog{}, sc), ConfigError);
  CHECK(std::isinf(min_surface_distance({RobotState{}}, make_scenario("open-2f", 0))));
}

TEST_CASE("content hash is the git blob hash") {
  CHECK(content_hash("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
  CHECK(content_hash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
}

TEST_CASE("format_double round trips") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> U(-1e6, 1e6);
  for (int k = 0; k < 200; ++k) {
    const double x = U(rng) * std::pow(10.0, k % 13 - 6);
    CHECK(std::stod(format_double(x)) == x);
  }
  CHECK(format_double(0.1) == "0.1");
}

TEST_CASE("apf force: attraction plus Khatib repulsion") {
  ApfConfig cfg;
  const std::vector<Obstacle> obs{{1.0, 0.0, 0.3}};
  const Vec2 f = apf_force(Vec2::Zero(), Vec2(0.0, 2.0), obs, 0.2, cfg);
  const double rho = 1.0 - 0.3 - 0.2;
  const double rep = cfg.k_rep * (1.0 / rho - 1.0 / cfg.rho0) / (rho * rho);
  CHECK(f.isApprox(Vec2(-rep, 2.0)));
  const std::vector<Obstacle> far{{5.0, 0.0, 0.3}};
  CHECK(apf_force(Vec2::Zero(), Vec2(0.0, 2.0), far, 0.2, cfg).isApprox(Vec2(0.0, 2.0)));
}

TEST_CASE("mpc-cbf tracks in free space and yields to an obstacle") {
  const MpcCbfConfig cfg;
  const Limits lim;
  const RobotState x{0.0, 0.0, 0.0, 0.5};
  const RobotState xhat{0.6, 0.0, 0.0, 0.5};
  const Vec4 xd(0.5, 0.0, 0.0, 0.0);
  const MpcCbfResult free = mpc_cbf_control(x, xhat, xd, {}, cfg, lim);
  CHECK(free.u.a > 0.0);
  const std::vector<Obstacle> wall{{1.05, 0.0, 0.3}};  // h(x) ~ 0.05 ahead
  const MpcCbfResult blocked = mpc_cbf_control(x, xhat, xd, wall, cfg, lim);
  CHECK(blocked.u.a < free.u.a);
  MpcCbfConfig bad;
  bad.alpha = -1.0;
  CHECK_THROWS_AS(mpc_cbf_control(x, xhat, xd, {}, bad, lim), ConfigError);
}

TEST_CASE("controller names parse") {
  for (const auto k : all_controllers()) CHECK(parse_controller(controller_name(k)) == k);
  CHECK_THROWS_AS(parse_controller("pid"), ConfigError);
}

namespace {

Scenario short_scenario(const std::string& name, double duration) {
  Scenario sc = make_scenario(name, 0);
  sc.duration = duration;
  return sc;
}

}  // namespace

TEST_CASE("controllers receive only graph neighbours and sensed entities") {
  const Scenario sc = short_scenario("clutter-4f", 1.0);
  SimOptions opt;
  opt.controller = ControllerKind::kClfCbfQp;
  int calls = 0;
  opt.observer = [&](const LocalView& v) {
    ++calls;
    std::set<int> allowed;
    for (int j = 0; j < sc.n_followers(); ++j)
      if (sc.formation.c(v.robot, j) != 0) allowed.insert(j);
    for (const auto& n : v.neighbors) CHECK(allowed.count(n.index) == 1);
    CHECK(v.neighbors.size() == allowed.size());
    CHECK(v.leader.has_value() == (sc.formation.s(v.robot) != 0));
    for (const auto& e : v.entities)
      CHECK(surface_distance(v.self.position(), e, sc.barrier.r_rob) <= opt.sensing_radius + 1e-12);
  };
  const RolloutLog log = run(sc, opt);
  CHECK(calls == sc.n_followers() * static_cast<int>(log.steps.size()));
}

TEST_CASE("rollout logs are deterministic and survive a CSV round trip") {
  const Scenario sc = short_scenario("triangle-2f", 2.0);
  SimOptions opt;
  opt.controller = ControllerKind::kMpcCbf;
  const RolloutLog a = run(sc, opt);
  const RolloutLog b = run(sc, opt);
  const std::string csv = rollout_to_csv(a);
  CHECK(csv == rollout_to_csv(b));
  CHECK(csv.rfind(kRolloutCsvHeader, 0) == 0);
  const RolloutLog back = rollout_from_csv(csv);
  CHECK(back.roles == a.roles);
  REQUIRE(back.steps.size() == a.steps.size());
  for (std::size_t k = 0; k < a.steps.size(); ++k) {
    CHECK(back.steps[k].states == a.steps[k].states);
    CHECK(back.steps[k].inputs == a.steps[k].inputs);
    CHECK(back.steps[k].formation_error == a.steps[k].formation_error);
  }
  CHECK(rollout_to_csv(back) == csv);
  CHECK_THROWS(rollout_from_csv("not,a,header\n1,2,3\n"));
}

TEST_CASE("every robot advances with the unicycle step") {
  const Scenario sc = short_scenario("triangle-2f", 1.0);
  SimOptions opt;
  opt.controller = ControllerKind::kApf;
  const RolloutLog log = run(sc, opt);
  REQUIRE(log.steps.size() > 2);
  for (std::size_t k = 0; k + 1 < log.steps.size(); ++k)
    for (int r = 0; r < log.n_robots(); ++r) {
      const RobotState next = step(log.steps[k].states[r], log.steps[k].inputs[r], sc.dt, sc.limits);
      CHECK((next.vec() - log.steps[k + 1].states[r].vec()).norm() < 1e-12);
    }
}

TEST_CASE("proposed controller requires a model") {
  SimOptions opt;
  opt.controller = ControllerKind::kProposed;
  CHECK_THROWS_AS(run(short_scenario("open-2f", 0.5), opt), ConfigError);
}
