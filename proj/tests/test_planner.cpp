#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include <doctest.h>

#include "coopmerge/planner.hpp"
#include "oracles.hpp"

using namespace coopmerge;
using namespace coopmerge::testing;

TEST_CASE("joint_reward weights") {
  const World w;
  const WorldState goals{{0.0, 6.0, 15.0}, {0.0, 2.0, 15.0}, 0};
  CHECK(joint_reward(goals, 0.5, w) == 1.0);
  const WorldState mixed{{0.0, 6.0, 15.0}, {30.0, 6.5, 15.0}, 0};
  CHECK(joint_reward(mixed, 1.0, w) == instantaneous_reward(mixed, Side::Robot, w));
  CHECK(joint_reward(mixed, 0.0, w) == instantaneous_reward(mixed, Side::Human, w));
}

TEST_CASE("macro_step examples") {
  const World w;
  const WorldState goals{{0.0, 6.0, 15.0}, {0.0, 2.0, 15.0}, 0};
  const MacroOutcome m = macro_step(goals, {Action::Stay, Action::Stay}, 5, 0.5, w);
  CHECK(m.reward == 5.0);
  CHECK(m.substeps_taken == 5);
  CHECK_FALSE(m.terminal);
  CHECK(m.state.step == 5);

  // Human rolls 3 m per tick into a stopped robot 9 m ahead in the same lane.
  const WorldState chase{{0.0, 2.0, 15.0}, {9.0, 2.0, 0.0}, 0};
  const MacroOutcome hit = macro_step(chase, {Action::Stay, Action::Stay}, 5, 0.5, w);
  CHECK(hit.terminal);
  CHECK(hit.substeps_taken == 2);
  // tick 1: human in lane 0 (goal 1) -> 0, robot centred in its goal lane -> 1; tick 2: -10 each.
  CHECK(hit.robot_reward == 1.0 - 10.0);
  CHECK(hit.human_reward == 0.0 - 10.0);
  CHECK(hit.reward == 0.5 * 1.0 + 0.5 * 0.0 + (0.5 * -10.0 + 0.5 * -10.0));
}

TEST_CASE("property: macro_step equals a fold of single transitions") {
  const World w;
  std::mt19937_64 rng(31337);
  std::uniform_real_distribution<double> alpha(0.0, 1.0);
  for (int i = 0; i < 3000; ++i) {
    WorldState s = random_state(rng, w, 25.0);
    if (is_terminal(s, w)) continue;
    const JointAction u = joint_action_at(i % kNumJointActions);
    const double a = alpha(rng);
    const MacroOutcome got = macro_step(s, u, 5, a, w);
    const MacroOutcome want = fold_transitions(s, u, 5, a, w);
    CHECK(got.state == want.state);
    CHECK(got.reward == want.reward);
    CHECK(got.robot_reward == want.robot_reward);
    CHECK(got.human_reward == want.human_reward);
    CHECK(got.terminal == want.terminal);
    CHECK(got.substeps_taken == want.substeps_taken);
  }
}

TEST_CASE("heuristic") {
  CHECK(heuristic(0, 5) == 0.0);
  CHECK(heuristic(6, 5) == 30.0);
  const World w;
  for (const WorldState& s : seeded_states(5, 8, w)) {
    for (int steps = 1; steps <= 2; ++steps) {
      CHECK(heuristic(steps, 5) >= best_remaining(s, steps, 0.3, w));
    }
  }
}

TEST_CASE("config validation") {
  const World w;
  PlannerConfig c;
  CHECK_NOTHROW(validate(c, w));
  CHECK(c.substeps() == 5);
  CHECK(c.depth() == 6);
  c.planner_dt = 0.3;
  CHECK_THROWS_AS(validate(c, w), std::invalid_argument);
  c = PlannerConfig{};
  c.alpha = 1.5;
  CHECK_THROWS_AS(validate(c, w), std::invalid_argument);
  c = PlannerConfig{};
  c.time_budget = 0.0;
  CHECK_THROWS_AS(validate(c, w), std::invalid_argument);
  c = PlannerConfig{};
  c.sim_dt = 0.1;
  CHECK_THROWS_AS(validate(c, w), std::invalid_argument);
}

TEST_CASE("robot alone and off its goal lane turns toward it") {
  const World w;  // robot goal lane 0
  const WorldState s{{120.0, 6.0, 15.0}, {0.0, 6.0, 15.0}, 0};
  const PlannerConfig c = config(0.5, 2.0);
  const Plan oracle = brute_force_plan(s, 2, c, w);
  const RobotDecision d = find_optimal_action(s, c, w);
  CHECK(d.action == Action::TurnLeft);
  CHECK(oracle.actions.front().robot == Action::TurnLeft);
  CHECK(d.plan.value == oracle.value);
}

TEST_CASE("side-by-side cars: the optimal depth-3 plan never collides") {
  const World w;
  const WorldState s{{0.0, 2.0, 15.0}, {0.0, 6.0, 15.0}, 0};  // both one lane off goal
  const PlannerConfig c = config(0.5, 3.0);
  const Plan oracle = brute_force_plan(s, 3, c, w);
  const SearchResult r = search_joint_plan(s, c, w);
  CHECK(r.plan.value == oracle.value);
  for (const WorldState& st : oracle.trajectory) CHECK_FALSE(check_collision(st, w.car));
  for (const WorldState& st : r.plan.trajectory) CHECK_FALSE(check_collision(st, w.car));
  // Crossing needs a car length of longitudinal separation first.
  const WorldState& end = r.plan.trajectory.back();
  if (end.human.x > end.robot.x) CHECK(std::abs(end.human.y - end.robot.y) >= w.car.length);
}

TEST_CASE("anytime: a 1 microsecond budget still yields a legal action") {
  const World w;
  const WorldState s{{0.0, 2.0, 15.0}, {0.0, 6.0, 15.0}, 0};
  PlannerConfig c;
  c.time_budget = 1e-6;
  const RobotDecision d = find_optimal_action(s, c, w);
  CHECK(allowed_actions(s.robot, w).contains(d.action));
  CHECK_FALSE(d.stats.complete);
  PlannerConfig one = c;
  one.time_budget = std::numeric_limits<double>::infinity();
  one.max_expansions = 1;
  const RobotDecision e = find_optimal_action(s, one, w);
  CHECK(allowed_actions(s.robot, w).contains(e.action));
  CHECK(e.plan.actions.size() == 1);
}

TEST_CASE("terminal root returns Stay with an empty plan") {
  const World w;
  const WorldState s{{10.0, 2.0, 15.0}, {10.0, 2.0, 15.0}, 0};
  const RobotDecision d = find_optimal_action(s, PlannerConfig{}, w);
  CHECK(d.action == Action::Stay);
  CHECK(d.plan.actions.empty());
}

TEST_CASE("search agrees with brute force: 50 depth-2 states, 10 depth-3 states") {
  const World w;
  const auto states = seeded_states(2024, 50, w);
  for (std::size_t i = 0; i < states.size(); ++i) {
    const PlannerConfig c = config(0.1 + 0.8 * static_cast<double>(i % 5) / 4.0, 2.0);
    const Plan oracle = brute_force_plan(states[i], 2, c, w);
    const SearchResult r = search_joint_plan(states[i], c, w);
    CHECK(r.plan.value == oracle.value);
    CHECK(r.plan.complete);
    CHECK(std::abs(resimulate(states[i], r.plan, c.alpha, w) - r.plan.value) <= 1e-9);
  }
  for (std::size_t i = 0; i < 10; ++i) {
    const PlannerConfig c = config(0.6, 3.0);
    CHECK(search_joint_plan(states[i], c, w).plan.value == brute_force_plan(states[i], 3, c, w).value);
  }
}

TEST_CASE("pruning changes node counts, never the value") {
  const World w;
  bool fewer = false;
  for (const WorldState& s : seeded_states(2024, 50, w)) {
    PlannerConfig on = config(0.6, 2.0);
    PlannerConfig off = on;
    off.prune = false;
    const SearchResult a = search_joint_plan(s, on, w);
    const SearchResult b = search_joint_plan(s, off, w);
    CHECK(a.plan.value == b.plan.value);
    CHECK(a.stats.nodes_expanded <= b.stats.nodes_expanded);
    fewer = fewer || a.stats.nodes_expanded < b.stats.nodes_expanded;
  }
  CHECK(fewer);
}

TEST_CASE("R_max never decreases during a search") {
  const World w;
  for (const WorldState& s : seeded_states(77, 10, w)) {
    PlannerConfig c = config(0.6, 4.0);
    c.record_trace = true;
    const SearchResult r = search_joint_plan(s, c, w);
    REQUIRE_FALSE(r.stats.rmax_trace.empty());
    CHECK(std::is_sorted(r.stats.rmax_trace.begin(), r.stats.rmax_trace.end()));
    CHECK(r.stats.rmax_trace.back() == r.plan.value);
  }
}

TEST_CASE("alpha-monotonicity of the optimal plan components") {
  const World w;
  for (const WorldState& s : seeded_states(606, 10, w)) {
    double prev_r = -1e300;
    double prev_h = 1e300;
    for (int k = 0; k <= 5; ++k) {
      const Plan p = brute_force_plan(s, 2, config(0.2 * k, 2.0), w);
      CHECK(p.robot_reward >= prev_r);
      CHECK(p.human_reward <= prev_h);
      prev_r = p.robot_reward;
      prev_h = p.human_reward;
    }
  }
}

TEST_CASE("selfish baseline reduces to the alpha = 1 planner") {
  const World w;
  for (const WorldState& s : seeded_states(4242, 50, w)) {
    const PlannerConfig c = config(1.0, 2.0);
    const BaselineResult base = selfish_baseline_action(s, c, w);
    const SearchResult collab = search_joint_plan(s, c, w);
    CHECK(std::abs(base.robot_reward - collab.plan.robot_reward) <= 1e-9);
  }
}

TEST_CASE("selfish baseline: explicit depth-1 payoff table") {
  const World w;
  // Robot (goal lane 0) alongside the human just ahead; human wants lane 1.
  const WorldState s{{3.0, 6.0, 15.0}, {0.0, 2.0, 15.0}, 0};
  const PlannerConfig c = config(1.0, 1.0);
  std::array<std::array<MacroOutcome, kNumActions>, kNumActions> table;  // [robot][human]
  for (std::size_t r = 0; r < kNumActions; ++r) {
    for (std::size_t h = 0; h < kNumActions; ++h) {
      table[r][h] = fold_transitions(s, {kAllActions[h], kAllActions[r]}, 5, 1.0, w);
    }
  }
  double best_robot = -1e300;
  Action expected = Action::Stay;
  for (std::size_t r = 0; r < kNumActions; ++r) {
    std::size_t response = 0;
    for (std::size_t h = 1; h < kNumActions; ++h) {
      if (table[r][h].human_reward > table[r][response].human_reward) response = h;
    }
    CHECK(table[r][response].human_reward > -5.0);  // a collision is never the best response here
    if (table[r][response].robot_reward > best_robot) {
      best_robot = table[r][response].robot_reward;
      expected = kAllActions[r];
    }
  }
  const BaselineResult base = selfish_baseline_action(s, c, w);
  CHECK(base.action == expected);
  CHECK(base.robot_reward == best_robot);
}

TEST_CASE("brute force edge cases") {
  const World w;
  const WorldState s{{0.0, 2.0, 15.0}, {20.0, 6.0, 15.0}, 0};
  const Plan zero = brute_force_plan(s, 0, config(0.5, 2.0), w);
  CHECK(zero.actions.empty());
  CHECK(zero.value == 0.0);
  CHECK_THROWS_AS(brute_force_plan(s, 4, config(0.5, 2.0), w), std::invalid_argument);

  const Plan one = brute_force_plan(s, 1, config(0.5, 1.0), w);
  double best = -1e300;
  for (std::size_t a = 0; a < kNumJointActions; ++a) {
    best = std::max(best, fold_transitions(s, joint_action_at(a), 5, 0.5, w).reward);
  }
  CHECK(one.value == best);
}

TEST_CASE("determinism and plan validity") {
  const World w;
  for (const WorldState& s : seeded_states(9, 10, w)) {
    PlannerConfig c = config(0.6, 6.0);
    c.max_expansions = 3000;
    c.rng_seed = 17;
    const SearchResult a = search_joint_plan(s, c, w);
    const SearchResult b = search_joint_plan(s, c, w);
    CHECK(a.action == b.action);
    CHECK(a.plan.value == b.plan.value);
    REQUIRE(a.plan.trajectory.size() == a.plan.actions.size() + 1);
    CHECK(std::abs(resimulate(s, a.plan, c.alpha, w) - a.plan.value) <= 1e-9);
    // First joint action is allowed at the root; later ones may rely on the degrade rule.
    CHECK(allowed_actions(s.human, w).contains(a.action.human));
    CHECK(allowed_actions(s.robot, w).contains(a.action.robot));
  }
}

TEST_CASE("wall-clock budget is respected") {
  const World w;
  for (const WorldState& s : seeded_states(11, 10, w)) {
    PlannerConfig c;
    c.time_budget = 0.05;
    const SearchResult r = search_joint_plan(s, c, w);
    CHECK(r.stats.wall_time_s <= c.time_budget + 0.010);
  }
}

TEST_CASE("selfish action space keeps the robot at Stay") {
  const World w;
  const WorldState s{{0.0, 2.0, 15.0}, {10.0, 6.0, 15.0}, 0};
  ActionSpace space;
  space.robot = ActionSet{};
  space.robot.insert(Action::Stay);
  const SearchResult r = search_joint_plan(s, config(0.0, 3.0), w, space);
  for (const JointAction& u : r.plan.actions) CHECK(u.robot == Action::Stay);
}
