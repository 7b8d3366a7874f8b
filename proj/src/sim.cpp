#include "coopmerge/sim.hpp"

#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "coopmerge/config.hpp"

namespace coopmerge {

using nlohmann::json;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t kRobotStream = 0x5242;  // "RB"
constexpr std::uint64_t kHumanStream = 0x4855;  // "HU"

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

}  // namespace

HumanModel parse_human_model(std::string_view text) {
  HumanModel m;
  const auto colon = text.find(':');
  const std::string_view name = text.substr(0, colon);
  if (name == "cooperative") {
    m.kind = HumanModel::Kind::Cooperative;
    if (colon != std::string_view::npos) {
      const std::string_view arg = text.substr(colon + 1);
      double alpha = 0.0;
      auto [ptr, ec] = std::from_chars(arg.data(), arg.data() + arg.size(), alpha);
      if (ec != std::errc() || ptr != arg.data() + arg.size() || !(alpha >= 0.0 && alpha <= 1.0)) {
        throw std::invalid_argument("human model: bad cooperative weight '" + std::string(arg) + "'");
      }
      m.alpha_h = alpha;
    }
    return m;
  }
  if (colon == std::string_view::npos) {
    if (name == "selfish") return {HumanModel::Kind::Selfish, 0.5};
    if (name == "constant") return {HumanModel::Kind::ConstantVelocity, 0.5};
    if (name == "remote") return {HumanModel::Kind::Remote, 0.5};
  }
  throw std::invalid_argument("unknown human model '" + std::string(text) + "'");
}

std::string to_string(const HumanModel& model) {
  switch (model.kind) {
    case HumanModel::Kind::Cooperative: return "cooperative:" + format_double(model.alpha_h);
    case HumanModel::Kind::Selfish: return "selfish";
    case HumanModel::Kind::ConstantVelocity: return "constant";
    case HumanModel::Kind::Remote: return "remote";
  }
  return "constant";
}

std::int64_t default_max_ticks(const RoadConfig& road, const PhysicsParams& physics) {
  return static_cast<std::int64_t>(std::llround(road.road_length / (5.0 * physics.dt)));
}

void validate(const TrialConfig& cfg) {
  validate(cfg.world);
  validate(cfg.planner, cfg.world);
  const auto lane_ok = [](int l) { return l == 0 || l == 1; };
  if (!lane_ok(cfg.start_lane_robot) || !lane_ok(cfg.start_lane_human) ||
      cfg.start_lane_robot == cfg.start_lane_human) {
    throw std::invalid_argument("trial: start lanes must be the two different lanes");
  }
  if (cfg.world.road.goal_lane_robot != cfg.start_lane_human ||
      cfg.world.road.goal_lane_human != cfg.start_lane_robot) {
    throw std::invalid_argument("trial: goal lanes must be the swap of the start lanes");
  }
  const auto& p = cfg.world.physics;
  if (!(cfg.v0_human >= p.v_min && cfg.v0_human <= p.v_max) || !(cfg.v0_robot >= p.v_min && cfg.v0_robot <= p.v_max)) {
    throw std::invalid_argument("trial: initial speeds must lie in [v_min, v_max]");
  }
  if (cfg.max_ticks < 0) throw std::invalid_argument("trial: max_ticks must be non-negative");
}

WorldState initial_state(const TrialConfig& cfg) {
  WorldState s;
  s.human = {cfg.y0, lane_center(cfg.start_lane_human, cfg.world.road), cfg.v0_human};
  s.robot = {cfg.y0, lane_center(cfg.start_lane_robot, cfg.world.road), cfg.v0_robot};
  s.step = 0;
  return s;
}

PlannerPolicy::PlannerPolicy(PlannerConfig cfg, World world, std::uint64_t seed, ActionSpace space)
    : cfg_(cfg), world_(world), space_(space), rng_(seed) {}

Action PlannerPolicy::decide(const WorldState& observed, Side side) {
  cfg_.rng_seed = rng_();
  SearchResult r = search_joint_plan(observed, cfg_, world_, space_);
  stats_ = std::move(r.stats);
  if (r.plan.actions.empty()) return Action::Stay;
  return r.action.of(side);
}

Action ScriptedPolicy::decide(const WorldState& observed, Side) {
  const auto i = static_cast<std::size_t>(observed.step);
  return i < script_.size() ? script_[i] : Action::Stay;
}

void ActionMailbox::latch(Action action) {
  std::lock_guard lock(mutex_);
  pending_ = action;
}

std::optional<Action> ActionMailbox::consume() {
  std::lock_guard lock(mutex_);
  return std::exchange(pending_, std::nullopt);
}

void ActionMailbox::clear() {
  std::lock_guard lock(mutex_);
  pending_.reset();
}

PlannerConfig human_planner_config(const TrialConfig& cfg) {
  PlannerConfig h = cfg.planner;
  switch (cfg.human_model.kind) {
    case HumanModel::Kind::Cooperative: h.alpha = 1.0 - cfg.human_model.alpha_h; break;
    case HumanModel::Kind::Selfish: h.alpha = 0.0; break;
    default: break;
  }
  return h;
}

std::unique_ptr<AgentPolicy> make_human_policy(const TrialConfig& cfg, std::shared_ptr<ActionMailbox> mailbox) {
  const std::uint64_t seed = splitmix64(cfg.seed ^ splitmix64(kHumanStream));
  switch (cfg.human_model.kind) {
    case HumanModel::Kind::Cooperative:
      return std::make_unique<PlannerPolicy>(human_planner_config(cfg), cfg.world, seed);
    case HumanModel::Kind::Selfish: {
      // Predicts the robot as holding its speed and lane.
      ActionSpace space;
      space.robot = ActionSet{};
      space.robot.insert(Action::Stay);
      return std::make_unique<PlannerPolicy>(human_planner_config(cfg), cfg.world, seed, space);
    }
    case HumanModel::Kind::ConstantVelocity:
      return std::make_unique<ConstantVelocityPolicy>();
    case HumanModel::Kind::Remote:
      if (!mailbox) throw std::invalid_argument("remote human model needs a mailbox");
      return std::make_unique<RemotePolicy>(std::move(mailbox));
  }
  return std::make_unique<ConstantVelocityPolicy>();
}

std::unique_ptr<AgentPolicy> make_robot_policy(const TrialConfig& cfg) {
  const std::uint64_t seed = splitmix64(cfg.seed ^ splitmix64(kRobotStream));
  return std::make_unique<PlannerPolicy>(cfg.planner, cfg.world, seed);
}

TrialResult run_trial(const TrialConfig& cfg, AgentPolicy& human, AgentPolicy& robot, TrialObserver* observer) {
  validate(cfg);
  const World& world = cfg.world;
  const double dt = world.physics.dt;
  TrialResult result;
  TrialLog& log = result.log;
  log.config = cfg;

  WorldState state = initial_state(cfg);
  for (std::int64_t tick = 0;; ++tick) {
    TickRecord rec;
    rec.tick = tick;
    rec.time_s = static_cast<double>(tick) * dt;
    rec.human = state.human;
    rec.robot = state.robot;
    if (is_terminal(state, world) || tick >= cfg.max_ticks) {
      log.ticks.push_back(rec);
      break;
    }
    if (observer) observer->on_state(tick, state);

    JointAction u;
    try {
      u.robot = robot.decide(state, Side::Robot);
      rec.robot_planner = robot.last_stats();
      u.human = human.decide(state, Side::Human);
      rec.human_planner = human.last_stats();
    } catch (const std::exception& e) {
      log.ticks.push_back(rec);
      log.aborted = true;
      log.error = e.what();
      break;
    }
    if (!allowed_actions(state.human, world).contains(u.human)) u.human = Action::Stay;
    if (!allowed_actions(state.robot, world).contains(u.robot)) u.robot = Action::Stay;

    const WorldState next = transition(state, u, world);
    rec.human_action = u.human;
    rec.robot_action = u.robot;
    rec.r_H = instantaneous_reward(next, Side::Human, world);
    rec.r_R = instantaneous_reward(next, Side::Robot, world);
    log.ticks.push_back(rec);
    state = next;
  }
  result.outcome = compute_outcome(log);
  return result;
}

std::optional<double> compute_merge_time(const TrialLog& log, Side side) {
  if (log.ticks.empty() || log.aborted) return std::nullopt;
  const World& world = log.config.world;
  std::size_t end = log.ticks.size();
  if (check_collision(log.ticks.back().state(), world.car)) --end;
  if (end == 0) return std::nullopt;

  const int goal = goal_lane(side, world.road);
  std::optional<std::size_t> settled;
  for (std::size_t i = end; i-- > 0;) {
    if (lane_position(log.ticks[i].state().car(side).x, world.road).lane != goal) break;
    settled = i;
  }
  if (!settled) return std::nullopt;
  return log.ticks[*settled].time_s;
}

TrialOutcome compute_outcome(const TrialLog& log) {
  TrialOutcome out;
  out.aborted = log.aborted;
  for (const auto& rec : log.ticks) {
    if (!rec.robot_action) continue;
    out.total_r_H += rec.r_H;
    out.total_r_R += rec.r_R;
    ++out.ticks;
  }
  if (!log.ticks.empty()) out.collision = check_collision(log.ticks.back().state(), log.config.world.car);
  out.merge_time_human = compute_merge_time(log, Side::Human);
  out.merge_time_robot = compute_merge_time(log, Side::Robot);
  out.merged_human = out.merge_time_human.has_value();
  out.merged_robot = out.merge_time_robot.has_value();
  return out;
}

ReplayResult replay(const TrialLog& log) {
  ReplayResult r;
  if (log.ticks.empty()) return r;
  WorldState state = initial_state(log.config);
  for (std::size_t i = 0; i < log.ticks.size(); ++i) {
    const TickRecord& rec = log.ticks[i];
    if (!(rec.state() == state)) {
      r.divergence_tick = rec.tick;
      return r;
    }
    r.states.push_back(state);
    if (!rec.human_action || !rec.robot_action) break;
    state = transition(state, {*rec.human_action, *rec.robot_action}, log.config.world);
  }
  return r;
}

// --- JSON Lines persistence -------------------------------------------------

namespace {

json trial_config_json(const TrialConfig& c) {
  return json{{"world", c.world},
              {"planner", c.planner},
              {"human_model", to_string(c.human_model)},
              {"start_lane_robot", c.start_lane_robot},
              {"start_lane_human", c.start_lane_human},
              {"v0_human", c.v0_human},
              {"v0_robot", c.v0_robot},
              {"y0", c.y0},
              {"max_ticks", c.max_ticks},
              {"seed", c.seed}};
}

TrialConfig trial_config_from_json(const json& j) {
  TrialConfig c;
  c.world = j.at("world").get<World>();
  c.planner = j.at("planner").get<PlannerConfig>();
  c.human_model = parse_human_model(j.at("human_model").get<std::string>());
  c.start_lane_robot = j.at("start_lane_robot").get<int>();
  c.start_lane_human = j.at("start_lane_human").get<int>();
  c.v0_human = j.at("v0_human").get<double>();
  c.v0_robot = j.at("v0_robot").get<double>();
  c.y0 = j.at("y0").get<double>();
  c.max_ticks = j.at("max_ticks").get<std::int64_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

json stats_json(const SearchStats& s, bool timing) {
  json j = s;
  if (!timing) j.erase("wall_time_s");
  return j;
}

SearchStats stats_from_json(const json& j) {
  SearchStats s;
  s.nodes_expanded = j.value("nodes_expanded", std::size_t{0});
  s.nodes_generated = j.value("nodes_generated", std::size_t{0});
  s.nodes_pruned = j.value("nodes_pruned", std::size_t{0});
  s.duplicates = j.value("duplicates", std::size_t{0});
  s.max_depth = j.value("max_depth", 0);
  s.complete = j.value("complete", true);
  s.wall_time_s = j.value("wall_time_s", 0.0);
  return s;
}

json action_json(const std::optional<Action>& a) { return a ? json(std::string(to_string(*a))) : json(nullptr); }

std::optional<Action> action_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  auto a = parse_action(j.get<std::string>());
  if (!a) throw std::runtime_error("trial log: unknown action '" + j.get<std::string>() + "'");
  return a;
}

}  // namespace

void write_trial_log(std::ostream& out, const TrialLog& log, const LogWriteOptions& options) {
  const json header{{"type", "header"}, {"version", 1}, {"config", trial_config_json(log.config)}};
  out << header.dump() << '\n';
  for (std::size_t i = 0; i < log.ticks.size(); ++i) {
    const TickRecord& r = log.ticks[i];
    json j{{"tick", r.tick},
           {"time_s", r.time_s},
           {"human", r.human},
           {"robot", r.robot},
           {"human_action", action_json(r.human_action)},
           {"robot_action", action_json(r.robot_action)},
           {"r_H", r.r_H},
           {"r_R", r.r_R}};
    if (r.human_planner || r.robot_planner) {
      json planner = json::object();
      if (r.human_planner) planner["human"] = stats_json(*r.human_planner, options.include_timing);
      if (r.robot_planner) planner["robot"] = stats_json(*r.robot_planner, options.include_timing);
      j["planner"] = std::move(planner);
    }
    if (log.aborted && i + 1 == log.ticks.size()) {
      j["aborted"] = true;
      j["error"] = log.error;
    }
    out << j.dump() << '\n';
  }
}

void write_trial_log(const std::string& path, const TrialLog& log, const LogWriteOptions& options) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_trial_log(out, log, options);
}

TrialLog read_trial_log(std::istream& in) {
  TrialLog log;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    if (!have_header) {
      if (j.value("type", "") != "header") throw std::runtime_error("trial log: first line must be the header");
      log.config = trial_config_from_json(j.at("config"));
      have_header = true;
      continue;
    }
    TickRecord r;
    r.tick = j.at("tick").get<std::int64_t>();
    r.time_s = j.at("time_s").get<double>();
    r.human = j.at("human").get<CarState>();
    r.robot = j.at("robot").get<CarState>();
    r.human_action = action_from_json(j.at("human_action"));
    r.robot_action = action_from_json(j.at("robot_action"));
    r.r_H = j.at("r_H").get<double>();
    r.r_R = j.at("r_R").get<double>();
    if (auto p = j.find("planner"); p != j.end()) {
      if (p->contains("human")) r.human_planner = stats_from_json(p->at("human"));
      if (p->contains("robot")) r.robot_planner = stats_from_json(p->at("robot"));
    }
    if (j.value("aborted", false)) {
      log.aborted = true;
      log.error = j.value("error", "");
    }
    log.ticks.push_back(std::move(r));
  }
  if (!have_header) throw std::runtime_error("trial log: missing header");
  return log;
}

TrialLog read_trial_log(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_trial_log(in);
}

}  // namespace coopmerge
