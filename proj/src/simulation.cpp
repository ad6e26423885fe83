#include "formula/simulation.hpp"

#include "formula/barrier.hpp"
#include "formula/dynamics.hpp"
#include "formula/io.hpp"
#include "formula/pipeline.hpp"
#include "formula/safety_filter.hpp"

#include <chrono>
#include <cmath>
#include <limits>

namespace formula {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const RobotState kUnknown{kNaN, kNaN, kNaN, kNaN};
const ControlInput kUnknownInput{kNaN, kNaN};

Obstacle robot_body(const RobotState& x, double r_rob) { return {x.px, x.py, r_rob}; }

bool sensed(const Vec2& p, const Obstacle& o, double r_rob, double sensing_radius) {
  return surface_distance(p, o, r_rob) <= sensing_radius;
}

// Obstacles plus every other robot, restricted to the sensing radius of robot `self`.
std::vector<Obstacle> sensed_entities(int self, const std::vector<RobotState>& robots,
                                      const Scenario& sc, double sensing_radius) {
  const Vec2 p = robots[self].position();
  std::vector<Obstacle> out;
  for (const auto& o : sc.obstacles)
    if (sensed(p, o, sc.barrier.r_rob, sensing_radius)) out.push_back(o);
  for (int j = 0; j < static_cast<int>(robots.size()); ++j) {
    if (j == self) continue;
    const Obstacle body = robot_body(robots[j], sc.barrier.r_rob);
    if (sensed(p, body, sc.barrier.r_rob, sensing_radius)) out.push_back(body);
  }
  return out;
}

double min_barrier(int self, const std::vector<RobotState>& robots, const Scenario& sc) {
  const Vec2 p = robots[self].position();
  double h = std::numeric_limits<double>::infinity();
  for (const auto& o : sc.obstacles) h = std::min(h, h_analytic(p, o, sc.barrier));
  for (int j = 0; j < static_cast<int>(robots.size()); ++j)
    if (j != self) h = std::min(h, h_analytic(p, robot_body(robots[j], sc.barrier.r_rob), sc.barrier));
  return h;
}

// Nominal state and its rate from the local view only: unseen robots are NaN, so any
// read outside the view poisons the result.
struct NominalTarget {
  RobotState xhat;
  Vec4 xhat_dot = Vec4::Zero();
};

NominalTarget nominal_from_view(const LocalView& view, const FormationSpec& spec,
                                const RobotState& frame_leader) {
  const int n = spec.n_followers;
  std::vector<RobotState> states(n, kUnknown);
  std::vector<ControlInput> inputs(n, kUnknownInput);
  for (const auto& nb : view.neighbors) {
    states[nb.index] = nb.state;
    inputs[nb.index] = nb.input;
  }
  RobotState leader = kUnknown;
  ControlInput leader_input = kUnknownInput;
  if (view.leader) {
    leader = view.leader->state;
    leader_input = view.leader->input;
  } else if (spec.body_frame) {
    leader.theta = frame_leader.theta;
    leader_input.omega = 0.0;
  }
  NominalTarget out;
  out.xhat = nominal_state(view.robot, states, leader, spec);
  out.xhat_dot = nominal_state_rate(view.robot, states, inputs, leader, leader_input, spec);
  return out;
}

struct FollowerOutput {
  ControlInput u;
  ControlInput nominal;
  double j_clf = 0.0;
  double l_cbf = 0.0;
  std::vector<ControlInput> plan;
};

}  // namespace

std::string controller_name(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::kProposed: return "proposed";
    case ControllerKind::kApf: return "apf";
    case ControllerKind::kMpcCbf: return "mpc-cbf";
    case ControllerKind::kClfCbfQp: return "clf-cbf-qp";
  }
  return "unknown";
}

ControllerKind parse_controller(const std::string& name) {
  for (auto kind : all_controllers())
    if (controller_name(kind) == name) return kind;
  throw ConfigError("unknown controller '" + name +
                    "'; available: proposed apf mpc-cbf clf-cbf-qp");
}

std::vector<ControllerKind> all_controllers() {
  return {ControllerKind::kProposed, ControllerKind::kClfCbfQp, ControllerKind::kMpcCbf,
          ControllerKind::kApf};
}

RolloutLog run(const Scenario& sc, const SimOptions& opt) {
  sc.validate();
  if (opt.controller == ControllerKind::kProposed &&
      (opt.model == nullptr || !opt.model->has_valid_shapes()))
    throw ConfigError("run: the proposed controller requires a trained barrier model");
  const auto wall_start = std::chrono::steady_clock::now();

  ClfMpcConfig clf = opt.clf;
  clf.dt = sc.dt;
  clf.limits = sc.limits;
  clf.validate();
  MpcCbfConfig mpc = opt.mpc_cbf;
  mpc.dt = sc.dt;
  mpc.barrier = sc.barrier;
  const BarrierModel learned = LearnedBarrier{opt.model};
  const BarrierModel analytic = AnalyticBarrier{};
  const BarrierModel& barrier_model =
      opt.controller == ControllerKind::kProposed ? learned : analytic;

  const int n = sc.n_followers();
  const int lead = sc.has_leader ? 1 : 0;
  const int n_robots = n + lead;

  RolloutLog log;
  log.scenario_name = sc.name;
  log.scenario_hash = content_hash(scenario_to_json(sc).dump());
  log.controller = controller_name(opt.controller);
  log.seed = sc.seed;
  log.dt = sc.dt;
  log.has_leader = sc.has_leader;
  if (sc.has_leader) log.roles.push_back("leader");
  for (int i = 0; i < n; ++i) log.roles.push_back(sc.has_leader ? "follower" : "robot");

  // robots[0] is the leader when present.
  std::vector<RobotState> robots;
  if (sc.has_leader)
    robots.push_back({sc.leader_path.start[0], sc.leader_path.start[1], sc.leader_path.heading(), 0.0});
  robots.insert(robots.end(), sc.follower_starts.begin(), sc.follower_starts.end());
  std::vector<ControlInput> applied(n_robots, ControlInput{0.0, 0.0});
  std::vector<std::vector<ControlInput>> warm(n);
  DeadlockResolver resolver(n, opt.deadlock);
  const bool resolve_deadlocks =
      opt.controller == ControllerKind::kProposed && opt.deadlock_resolution;

  const auto total_steps = static_cast<int>(std::lround(sc.duration / sc.dt));
  int settled_steps = 0;
  const int settle_needed = static_cast<int>(std::lround(opt.settle_time / sc.dt));

  for (int k = 0;; ++k) {
    const double t = k * sc.dt;
    std::vector<RobotState> followers(robots.begin() + lead, robots.end());
    const RobotState leader_state = sc.has_leader ? robots[0] : RobotState{};

    // Reference ("leader" in the formation graph) per follower.
    auto reference_of = [&](int i) -> NeighborView {
      if (sc.has_leader) return {-1, leader_state, applied[0]};
      RobotState ref = sc.references[i].state_at(t);
      // An arrived reference faces the robot's way in, so a robot stopped beside or
      // past its goal can turn towards it instead of sitting in a heading trap.
      const Vec2 gap = sc.references[i].goal - followers[i].position();
      if (ref.v == 0.0 && gap.norm() > 0.5 * opt.goal_tolerance)
        ref.theta = std::atan2(gap[1], gap[0]);
      return {-1, ref, ControlInput{0.0, 0.0}};
    };

    std::vector<LocalView> views(n);
    std::vector<NominalTarget> targets(n);
    for (int i = 0; i < n; ++i) {
      LocalView& view = views[i];
      view.robot = i;
      view.self = followers[i];
      for (int j = 0; j < n; ++j)
        if (sc.formation.c(i, j) != 0) view.neighbors.push_back({j, followers[j], applied[lead + j]});
      if (sc.formation.s(i) != 0) view.leader = reference_of(i);
      view.entities = sensed_entities(lead + i, robots, sc, opt.sensing_radius);
      if (opt.observer) opt.observer(view);
      targets[i] = nominal_from_view(view, sc.formation, leader_state);
    }

    StepRecord rec;
    rec.time = t;
    rec.states = robots;
    rec.inputs.assign(n_robots, ControlInput{0.0, 0.0});
    rec.nominal_inputs.assign(n_robots, ControlInput{0.0, 0.0});
    rec.j_clf.assign(n_robots, 0.0);
    rec.deadlock.assign(n_robots, 0);
    rec.formation_error.assign(n_robots, 0.0);
    rec.h_min.resize(n_robots);
    for (int r = 0; r < n_robots; ++r) rec.h_min[r] = min_barrier(r, robots, sc);
    bool settled = true;
    for (int i = 0; i < n; ++i) {
      const double err = formation_error(followers[i], targets[i].xhat).head<2>().norm();
      rec.formation_error[lead + i] = err;
      if (!(err < opt.goal_tolerance)) settled = false;
    }
    if (sc.has_leader) {
      if ((leader_state.position() - sc.leader_path.goal).norm() > opt.goal_tolerance) settled = false;
    } else {
      for (const auto& ref : sc.references)
        if (ref.speed * t < ref.length()) settled = false;
    }
    settled_steps = settled ? settled_steps + 1 : 0;
    if (settled_steps > settle_needed) {
      log.completed = true;
      log.completion_time = t;
    }
    if (k >= total_steps || log.completed) {
      log.steps.push_back(std::move(rec));
      break;
    }

    // Leader: pure pursuit toward its goal, filtered by the controller's own barrier.
    if (sc.has_leader) {
      const Vec2 to_goal = sc.leader_path.goal - leader_state.position();
      const double dist = to_goal.norm();
      const double speed = std::min(sc.leader_path.speed, opt.leader_slowdown_gain * dist);
      const Vec2 w = dist > 1e-9 ? Vec2(speed * to_goal / dist) : Vec2::Zero();
      const auto entities = sensed_entities(0, robots, sc, opt.sensing_radius);
      ControlInput u_nom = velocity_to_input(w, leader_state, {}, sc.limits, sc.dt);
      ControlInput u = u_nom;
      try {
        if (opt.controller == ControllerKind::kApf) {
          const Vec2 target = leader_state.position() + w / opt.apf.k_att;
          Vec2 wa = opt.apf.v_gain *
                    apf_force(leader_state.position(), target, entities, sc.barrier.r_rob, opt.apf);
          if (wa.norm() > sc.limits.v_max) wa *= sc.limits.v_max / wa.norm();
          u = velocity_to_input(wa, leader_state, {}, sc.limits, sc.dt);
        } else {
          const auto cons = build_constraints(leader_state, entities, barrier_model, sc.barrier,
                                              opt.sensing_radius);
          u = project(u_nom, leader_state, cons, sc.limits, sc.dt).u_checked;
        }
      } catch (const std::exception&) {
        ++log.controller_failures;
        u = {0.0, 0.0};
      }
      rec.nominal_inputs[0] = u_nom;
      rec.inputs[0] = u;
    }

    // Read phase for followers.
    std::vector<FollowerOutput> outs(n);
    auto compute = [&](int i, const RobotState& xhat) {
      const LocalView& view = views[i];
      const Vec4& xhat_dot = targets[i].xhat_dot;
      FollowerOutput out;
      std::optional<std::span<const ControlInput>> ws;
      if (static_cast<int>(warm[i].size()) == clf.horizon_steps) ws = warm[i];
      switch (opt.controller) {
        case ControllerKind::kProposed: {
          const auto res = safe_formation_step(view.self, xhat, xhat_dot, view.entities, clf,
                                               barrier_model, sc.barrier, opt.sensing_radius, ws);
          out.u = res.filter.u_checked;
          out.nominal = res.nominal.u_seq.front();
          out.j_clf = res.nominal.cost;
          out.l_cbf = intervention_cost(res.nominal, out.u, clf.dt);
          out.plan = res.nominal.u_seq;
          break;
        }
        case ControllerKind::kClfCbfQp: {
          const auto res = clf_cbf_qp_control(view.self, xhat, xhat_dot, view.entities, clf,
                                              sc.barrier, opt.sensing_radius);
          out.u = res.filter.u_checked;
          out.nominal = res.nominal.u_seq.front();
          out.j_clf = res.nominal.cost;
          break;
        }
        case ControllerKind::kMpcCbf: {
          std::optional<std::span<const ControlInput>> mws;
          if (static_cast<int>(warm[i].size()) == mpc.horizon_steps) mws = warm[i];
          const auto res =
              mpc_cbf_control(view.self, xhat, xhat_dot, view.entities, mpc, sc.limits, mws);
          out.u = res.u;
          out.nominal = res.u;
          out.plan = res.u_seq;
          break;
        }
        case ControllerKind::kApf: {
          out.u = apf_control(view.self, xhat, view.entities, {}, sc.barrier.r_rob, opt.apf,
                              sc.limits, sc.dt);
          out.nominal = out.u;
          break;
        }
      }
      return out;
    };
    auto safe_compute = [&](int i, const RobotState& xhat) {
      try {
        return compute(i, xhat);
      } catch (const std::exception&) {
        ++log.controller_failures;
        FollowerOutput zero;
        zero.u = {0.0, 0.0};
        zero.nominal = {0.0, 0.0};
        return zero;
      }
    };
    for (int i = 0; i < n; ++i) {
      const RobotState xhat = resolve_deadlocks
                                  ? resolver.held_nominal(i, k, followers[i], targets[i].xhat)
                                  : targets[i].xhat;
      outs[i] = safe_compute(i, xhat);
    }

    if (resolve_deadlocks) {
      std::vector<DeadlockProbe> probes(n);
      std::vector<RobotState> xhats(n);
      for (int i = 0; i < n; ++i) {
        probes[i] = {outs[i].j_clf, outs[i].l_cbf};
        xhats[i] = targets[i].xhat;
      }
      const std::size_t before = resolver.triggers().size();
      const auto perturbed = resolver.resolve(k, t, probes, followers, xhats);
      for (std::size_t q = before; q < resolver.triggers().size(); ++q) {
        const int i = resolver.triggers()[q].robot;
        outs[i] = safe_compute(i, perturbed[i]);
        rec.deadlock[lead + i] = 1;
        log.triggers.push_back({k, t, lead + i});
      }
    }

    for (int i = 0; i < n; ++i) {
      rec.inputs[lead + i] = outs[i].u;
      rec.nominal_inputs[lead + i] = outs[i].nominal;
      rec.j_clf[lead + i] = outs[i].j_clf;
      warm[i] = outs[i].plan.empty() ? std::vector<ControlInput>{} : shift_sequence(outs[i].plan);
    }

    // Write phase.
    for (int r = 0; r < n_robots; ++r) {
      robots[r] = step(robots[r], rec.inputs[r], sc.dt, sc.limits);
      applied[r] = sc.limits.clamp(rec.inputs[r]);
    }
    log.steps.push_back(std::move(rec));
  }

  log.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  return log;
}

}  // namespace formula
