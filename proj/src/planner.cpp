#include "coopmerge/planner.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>

#include <absl/container/flat_hash_map.h>

namespace coopmerge {

namespace {

int checked_ratio(double num, double den, const char* what) {
  const double r = num / den;
  const double rounded = std::round(r);
  if (rounded < 1.0 || std::abs(r - rounded) > 1e-9) throw std::invalid_argument(what);
  return static_cast<int>(rounded);
}

}  // namespace

int PlannerConfig::substeps() const {
  return checked_ratio(planner_dt, sim_dt, "planner.planner_dt must be an integer multiple of sim_dt");
}

int PlannerConfig::depth() const {
  if (horizon == 0.0) return 0;
  return checked_ratio(horizon, planner_dt, "planner.horizon must be an integer multiple of planner_dt");
}

void validate(const PlannerConfig& cfg, const World& world) {
  if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0)) throw std::invalid_argument("planner.alpha must lie in [0, 1]");
  if (!(cfg.sim_dt > 0.0) || !(cfg.planner_dt > 0.0) || !(cfg.horizon >= 0.0)) {
    throw std::invalid_argument("planner time steps must be positive");
  }
  if (!(cfg.time_budget > 0.0)) throw std::invalid_argument("planner.time_budget must be positive");
  if (std::abs(cfg.sim_dt - world.physics.dt) > 1e-12) {
    throw std::invalid_argument("planner.sim_dt must equal physics.dt");
  }
  const auto& q = cfg.quantization;
  if (!(q.dx > 0.0 && q.dy > 0.0 && q.dv > 0.0)) throw std::invalid_argument("planner.quantization bins must be positive");
  (void)cfg.substeps();
  (void)cfg.depth();
}

double joint_reward(const WorldState& s, double alpha, const World& world) {
  return alpha * instantaneous_reward(s, Side::Robot, world) +
         (1.0 - alpha) * instantaneous_reward(s, Side::Human, world);
}

MacroOutcome macro_step(const WorldState& s, JointAction u, int substeps, double alpha,
                        const World& world) {
  // Same arithmetic as transition() + instantaneous_reward() + is_terminal(),
  // with the collision test shared between the three.
  MacroOutcome out;
  out.state = s;
  const double half_length = world.car.length / 2.0;
  const int goal_human = world.road.goal_lane_human;
  const int goal_robot = world.road.goal_lane_robot;
  for (int i = 0; i < substeps; ++i) {
    WorldState& st = out.state;
    const Action ah = allowed_actions(st.human, world).contains(u.human) ? u.human : Action::Stay;
    const Action ar = allowed_actions(st.robot, world).contains(u.robot) ? u.robot : Action::Stay;
    st.human = detail::advance_car(st.human, ah, world);
    st.robot = detail::advance_car(st.robot, ar, world);
    ++st.step;
    const bool collided = check_collision(st, world.car);
    const double r_robot = collided ? kCollisionReward : detail::lane_reward(st.robot.x, goal_robot, world.road);
    const double r_human = collided ? kCollisionReward : detail::lane_reward(st.human.x, goal_human, world.road);
    out.reward += alpha * r_robot + (1.0 - alpha) * r_human;
    out.robot_reward += r_robot;
    out.human_reward += r_human;
    ++out.substeps_taken;
    if (collided || st.human.y + half_length > world.road.road_length ||
        st.robot.y + half_length > world.road.road_length) {
      out.terminal = true;
      break;
    }
  }
  return out;
}

double heuristic(int remaining_steps, int substeps) {
  // The largest instantaneous joint reward is alpha + (1 - alpha) = 1.
  return static_cast<double>(remaining_steps) * static_cast<double>(substeps) * 1.0;
}

namespace {

struct Node {
  WorldState state;
  double g = 0.0;
  double g_robot = 0.0;
  double g_human = 0.0;
  std::int32_t parent = -1;
  std::int16_t depth = 0;
  std::uint8_t action = 0;  // joint action index into the parent
  std::uint8_t root = 0;    // joint action index taken at the root
  bool terminal = false;
};

struct OpenEntry {
  double f;
  int depth;
  std::uint64_t seq;
  std::uint32_t node;
};

// Lower priority compares less: smaller f, then shallower, then later insertion.
struct OpenOrder {
  bool operator()(const OpenEntry& a, const OpenEntry& b) const {
    if (a.f != b.f) return a.f < b.f;
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.seq > b.seq;
  }
};

using StateKey = std::array<std::int64_t, 7>;

struct StateKeyHash {
  std::size_t operator()(const StateKey& k) const noexcept {
    std::uint64_t h = 0x9e3779b97f4a7c15ULL;
    for (std::int64_t v : k) {
      h ^= static_cast<std::uint64_t>(v) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    }
    return static_cast<std::size_t>(h);
  }
};

StateKey make_key(const WorldState& s, int depth, const Quantization& q) {
  auto bin = [](double v, double width) { return static_cast<std::int64_t>(std::floor(v / width + 0.5)); };
  return {bin(s.human.y, q.dy), bin(s.human.x, q.dx), bin(s.human.v, q.dv),
          bin(s.robot.y, q.dy), bin(s.robot.x, q.dx), bin(s.robot.v, q.dv), depth};
}

Plan trace_back(const std::vector<Node>& nodes, std::uint32_t leaf, bool complete) {
  Plan plan;
  plan.value = nodes[leaf].g;
  plan.robot_reward = nodes[leaf].g_robot;
  plan.human_reward = nodes[leaf].g_human;
  plan.complete = complete;
  std::int32_t i = static_cast<std::int32_t>(leaf);
  while (i >= 0) {
    plan.trajectory.push_back(nodes[i].state);
    if (nodes[i].parent >= 0) plan.actions.push_back(joint_action_at(nodes[i].action));
    i = nodes[i].parent;
  }
  std::reverse(plan.trajectory.begin(), plan.trajectory.end());
  std::reverse(plan.actions.begin(), plan.actions.end());
  return plan;
}

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

constexpr int kMaxSubsteps = 64;
// Generous bound on the generation rate, for pre-sizing timed searches.
constexpr double kNodesPerSecondHint = 2.0e6;

// One car's sub-step states and lane rewards under a repeated action. Each
// car moves independently of the other, so a node's 25 macro-steps only need
// 5 + 5 of these; collisions are then checked pairwise.
struct CarTrack {
  std::array<CarState, kMaxSubsteps> states;
  std::array<double, kMaxSubsteps> lane_reward;
};

void fill_track(CarTrack& track, CarState car, Action a, int substeps, int goal, const World& world) {
  for (int i = 0; i < substeps; ++i) {
    const Action applied = allowed_actions(car, world).contains(a) ? a : Action::Stay;
    car = detail::advance_car(car, applied, world);
    track.states[i] = car;
    track.lane_reward[i] = detail::lane_reward(car.x, goal, world.road);
  }
}

// macro_step() over precomputed tracks; identical arithmetic.
MacroOutcome combine(const WorldState& s, const CarTrack& human, const CarTrack& robot, int substeps,
                     double alpha, const World& world) {
  MacroOutcome out;
  out.state = s;
  const double half_length = world.car.length / 2.0;
  for (int i = 0; i < substeps; ++i) {
    WorldState& st = out.state;
    st.human = human.states[i];
    st.robot = robot.states[i];
    ++st.step;
    const bool collided = check_collision(st, world.car);
    const double r_robot = collided ? kCollisionReward : robot.lane_reward[i];
    const double r_human = collided ? kCollisionReward : human.lane_reward[i];
    out.reward += alpha * r_robot + (1.0 - alpha) * r_human;
    out.robot_reward += r_robot;
    out.human_reward += r_human;
    ++out.substeps_taken;
    if (collided || st.human.y + half_length > world.road.road_length ||
        st.robot.y + half_length > world.road.road_length) {
      out.terminal = true;
      break;
    }
  }
  return out;
}

// Search containers live per thread and keep their memory between calls, so
// a timed search neither grows them nor releases them past its deadline.
struct Workspace {
  std::vector<Node> nodes;
  std::vector<OpenEntry> open;  // binary heap under OpenOrder
  absl::flat_hash_map<StateKey, double, StateKeyHash> best_g;
  std::size_t best_g_peak = 0;

  // A timed search pre-sizes everything for the nodes it could generate, so
  // nothing grows (and copies or rehashes) near the deadline. Reserved but
  // untouched pages cost nothing.
  void reset(std::size_t expected_nodes) {
    nodes.clear();
    open.clear();
    best_g.clear();  // frees large tables; paid inside the new call's budget
    if (expected_nodes == 0) return;
    nodes.reserve(expected_nodes);
    open.reserve(expected_nodes);
    best_g.reserve(std::max(best_g_peak, expected_nodes));
  }
};

Workspace& workspace() {
  thread_local Workspace ws;
  return ws;
}

}  // namespace

SearchResult search_joint_plan(const WorldState& root, const PlannerConfig& cfg, const World& world,
                               const ActionSpace& space) {
  using Clock = std::chrono::steady_clock;
  const auto started = Clock::now();
  const bool timed = std::isfinite(cfg.time_budget);
  const auto deadline =
      timed ? started + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(cfg.time_budget))
            : Clock::time_point::max();

  const int max_depth = cfg.depth();
  const int substeps = cfg.substeps();

  SearchResult result;
  SearchStats& stats = result.stats;
  auto finish = [&] {
    stats.wall_time_s = std::chrono::duration<double>(Clock::now() - started).count();
    result.plan.complete = stats.complete;
    return result;
  };

  if (is_terminal(root, world) || max_depth == 0) {
    result.plan.trajectory.push_back(root);
    return finish();
  }

  if (substeps > kMaxSubsteps) throw std::invalid_argument("planner: too many sub-steps per planner step");
  Workspace& ws = workspace();
  ws.reset(timed ? static_cast<std::size_t>(std::min(cfg.time_budget, 10.0) * kNodesPerSecondHint) : 0);
  std::vector<Node>& nodes = ws.nodes;
  std::vector<OpenEntry>& open = ws.open;
  auto& best_g = ws.best_g;
  auto push_open = [&](const OpenEntry& e) {
    open.push_back(e);
    std::push_heap(open.begin(), open.end(), OpenOrder{});
  };
  std::array<CarTrack, kNumActions> human_tracks;
  std::array<CarTrack, kNumActions> robot_tracks;
  std::uint64_t seq = 0;

  nodes.push_back(Node{root});
  best_g.emplace(make_key(root, 0, cfg.quantization), 0.0);
  push_open({heuristic(max_depth, substeps), 0, seq++, 0});

  // Best value per root joint action: over popped leaves, and over every
  // generated node (used when a budget cuts the search short).
  std::array<double, kNumJointActions> leaf_best;
  std::array<std::uint32_t, kNumJointActions> leaf_node{};
  std::array<double, kNumJointActions> any_best;
  std::array<std::uint32_t, kNumJointActions> any_node{};
  leaf_best.fill(kNegInf);
  any_best.fill(kNegInf);
  double r_max = kNegInf;
  bool truncated = false;

  while (!open.empty()) {
    if ((timed && Clock::now() >= deadline) ||
        (cfg.max_expansions != 0 && stats.nodes_expanded >= cfg.max_expansions)) {
      truncated = true;
      break;
    }
    std::pop_heap(open.begin(), open.end(), OpenOrder{});
    const OpenEntry top = open.back();
    open.pop_back();
    if (cfg.prune && top.f < r_max) {
      stats.nodes_pruned = open.size() + 1;
      break;
    }
    const Node node = nodes[top.node];
    if (cfg.record_trace) stats.rmax_trace.push_back(r_max);

    if (node.g < best_g.at(make_key(node.state, node.depth, cfg.quantization))) {
      ++stats.duplicates;  // a better visit to this state was queued after this one
      continue;
    }

    if (node.terminal || node.depth == max_depth) {
      ++stats.leaves;
      if (node.g > leaf_best[node.root]) {
        leaf_best[node.root] = node.g;
        leaf_node[node.root] = top.node;
      }
      r_max = std::max(r_max, node.g);
      if (cfg.record_trace) stats.rmax_trace.back() = r_max;
      continue;
    }

    ++stats.nodes_expanded;
    const int child_depth = node.depth + 1;
    stats.max_depth = std::max(stats.max_depth, child_depth);
    const double h = heuristic(max_depth - child_depth, substeps);
    for (std::size_t i = 0; i < kNumActions; ++i) {
      if (space.human.contains(kAllActions[i])) {
        fill_track(human_tracks[i], node.state.human, kAllActions[i], substeps, world.road.goal_lane_human, world);
      }
      if (space.robot.contains(kAllActions[i])) {
        fill_track(robot_tracks[i], node.state.robot, kAllActions[i], substeps, world.road.goal_lane_robot, world);
      }
    }
    for (std::size_t a = 0; a < kNumJointActions; ++a) {
      const JointAction u = joint_action_at(a);
      if (!space.human.contains(u.human) || !space.robot.contains(u.robot)) continue;
      const MacroOutcome m = combine(node.state, human_tracks[a / kNumActions], robot_tracks[a % kNumActions],
                                     substeps, cfg.alpha, world);
      const double g = node.g + m.reward;
      const StateKey key = make_key(m.state, child_depth, cfg.quantization);
      auto [it, inserted] = best_g.try_emplace(key, g);
      if (!inserted) {
        if (g <= it->second) {
          ++stats.duplicates;
          continue;
        }
        it->second = g;
      }
      Node child;
      child.state = m.state;
      child.g = g;
      child.g_robot = node.g_robot + m.robot_reward;
      child.g_human = node.g_human + m.human_reward;
      child.parent = static_cast<std::int32_t>(top.node);
      child.depth = static_cast<std::int16_t>(child_depth);
      child.action = static_cast<std::uint8_t>(a);
      child.root = node.parent < 0 ? static_cast<std::uint8_t>(a) : node.root;
      child.terminal = m.terminal;
      const auto index = static_cast<std::uint32_t>(nodes.size());
      nodes.push_back(child);
      ++stats.nodes_generated;
      if (g > any_best[child.root]) {
        any_best[child.root] = g;
        any_node[child.root] = index;
      }
      push_open({g + h, child_depth, seq++, index});
    }
  }

  if (timed) ws.best_g_peak = std::max(ws.best_g_peak, best_g.size());
  stats.complete = !truncated;
  const bool use_leaves = !truncated && r_max > kNegInf;
  const auto& values = use_leaves ? leaf_best : any_best;
  const auto& owners = use_leaves ? leaf_node : any_node;
  const double best = *std::max_element(values.begin(), values.end());
  if (best == kNegInf) {
    result.plan.trajectory.push_back(root);
    return finish();
  }

  std::vector<std::size_t> ties;
  for (std::size_t a = 0; a < kNumJointActions; ++a) {
    if (values[a] == best) ties.push_back(a);
  }
  std::size_t pick = ties.front();
  if (ties.size() > 1) {
    std::mt19937_64 rng(cfg.rng_seed);
    std::uniform_int_distribution<std::size_t> dist(0, ties.size() - 1);
    pick = ties[dist(rng)];
  }
  result.plan = trace_back(nodes, owners[pick], !truncated);
  result.action = result.plan.actions.front();
  return finish();
}

RobotDecision find_optimal_action(const WorldState& s, const PlannerConfig& cfg, const World& world) {
  SearchResult r = search_joint_plan(s, cfg, world);
  RobotDecision d;
  d.plan = std::move(r.plan);
  d.stats = std::move(r.stats);
  if (!d.plan.actions.empty()) d.action = r.action.robot;
  return d;
}

namespace {

struct Enumerated {
  double value = kNegInf;
  double robot = 0.0;
  double human = 0.0;
  std::vector<JointAction> actions;
  std::vector<WorldState> states;
};

void enumerate(const WorldState& s, int remaining, int substeps, double alpha, const World& world,
               double g, double g_robot, double g_human, std::vector<JointAction>& actions,
               std::vector<WorldState>& states, Enumerated& best) {
  for (std::size_t a = 0; a < kNumJointActions; ++a) {
    const JointAction u = joint_action_at(a);
    const MacroOutcome m = macro_step(s, u, substeps, alpha, world);
    const double child_g = g + m.reward;
    actions.push_back(u);
    states.push_back(m.state);
    if (m.terminal || remaining == 1) {
      if (child_g > best.value) {
        best.value = child_g;
        best.robot = g_robot + m.robot_reward;
        best.human = g_human + m.human_reward;
        best.actions = actions;
        best.states = states;
      }
    } else {
      enumerate(m.state, remaining - 1, substeps, alpha, world, child_g, g_robot + m.robot_reward,
                g_human + m.human_reward, actions, states, best);
    }
    actions.pop_back();
    states.pop_back();
  }
}

}  // namespace

Plan brute_force_plan(const WorldState& s, int depth, const PlannerConfig& cfg, const World& world) {
  if (depth < 0 || depth > kOracleDepthCap) {
    throw std::invalid_argument("brute_force_plan: depth exceeds the enumeration cap");
  }
  Plan plan;
  plan.trajectory.push_back(s);
  if (depth == 0 || is_terminal(s, world)) return plan;
  Enumerated best;
  std::vector<JointAction> actions;
  std::vector<WorldState> states{s};
  enumerate(s, depth, cfg.substeps(), cfg.alpha, world, 0.0, 0.0, 0.0, actions, states, best);
  plan.actions = std::move(best.actions);
  plan.trajectory = std::move(best.states);
  plan.value = best.value;
  plan.robot_reward = best.robot;
  plan.human_reward = best.human;
  return plan;
}

namespace {

// Decodes a base-5 index into a sequence in kAllActions order, first
// action most significant.
std::vector<Action> sequence_at(std::size_t index, int depth) {
  std::vector<Action> seq(static_cast<std::size_t>(depth));
  for (int i = depth - 1; i >= 0; --i) {
    seq[static_cast<std::size_t>(i)] = kAllActions[index % kNumActions];
    index /= kNumActions;
  }
  return seq;
}

struct Rollout {
  double robot = 0.0;
  double human = 0.0;
};

Rollout roll_out(const WorldState& s, const std::vector<Action>& robot, const std::vector<Action>& human,
                 int substeps, const World& world) {
  Rollout r;
  WorldState state = s;
  for (std::size_t i = 0; i < robot.size(); ++i) {
    const MacroOutcome m = macro_step(state, {human[i], robot[i]}, substeps, 1.0, world);
    r.robot += m.robot_reward;
    r.human += m.human_reward;
    state = m.state;
    if (m.terminal) break;
  }
  return r;
}

}  // namespace

BaselineResult selfish_baseline_action(const WorldState& s, const PlannerConfig& cfg, const World& world) {
  const int depth = cfg.depth();
  if (depth > kOracleDepthCap) {
    throw std::invalid_argument("selfish_baseline_action: depth exceeds the enumeration cap");
  }
  BaselineResult out;
  if (depth == 0 || is_terminal(s, world)) return out;
  const int substeps = cfg.substeps();
  std::size_t count = 1;
  for (int i = 0; i < depth; ++i) count *= kNumActions;

  std::vector<std::vector<Action>> sequences;
  sequences.reserve(count);
  for (std::size_t i = 0; i < count; ++i) sequences.push_back(sequence_at(i, depth));

  double best_robot = kNegInf;
  for (const auto& robot_seq : sequences) {
    // Human best response to the fixed robot sequence.
    double best_human = kNegInf;
    Rollout response{};
    const std::vector<Action>* response_seq = nullptr;
    for (const auto& human_seq : sequences) {
      const Rollout r = roll_out(s, robot_seq, human_seq, substeps, world);
      if (r.human > best_human) {
        best_human = r.human;
        response = r;
        response_seq = &human_seq;
      }
    }
    if (response.robot > best_robot) {
      best_robot = response.robot;
      out.robot_sequence = robot_seq;
      out.human_response = *response_seq;
      out.robot_reward = response.robot;
      out.human_reward = response.human;
    }
  }
  out.action = out.robot_sequence.front();
  return out;
}

}  // namespace coopmerge
