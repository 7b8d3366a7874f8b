#pragma once

// Joint human/robot action search. The planner maximises the scalarised
// reward alpha * R_robot + (1 - alpha) * R_human over sequences of joint
// actions, each held for one planner step (several simulation ticks).

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "coopmerge/model.hpp"

namespace coopmerge {

struct Quantization {
  double dy = 0.01;
  double dx = 0.01;
  double dv = 0.01;
};

struct PlannerConfig {
  double alpha = 0.5;        // weight of the robot reward
  double horizon = 6.0;      // s
  double planner_dt = 1.0;   // s, one macro-step
  double sim_dt = 0.2;       // s, must match PhysicsParams::dt
  double time_budget = 0.2;  // s of wall clock; +inf disables the timer
  std::uint64_t rng_seed = 0;
  Quantization quantization;
  // Deterministic budget on node expansions; 0 means unlimited. Used by the
  // batch harness, where a wall-clock cut-off would make runs irreproducible.
  std::size_t max_expansions = 0;
  bool prune = true;
  bool record_trace = false;

  int substeps() const;  // planner_dt / sim_dt
  int depth() const;     // horizon / planner_dt
};

/// Throws std::invalid_argument on a violated invariant, including a sim_dt
/// that does not match the physics tick.
void validate(const PlannerConfig& cfg, const World& world);

/// Which actions each side may take during expansion. The collaborative
/// planner uses all five for both; the selfish human model fixes the robot
/// to Stay.
struct ActionSpace {
  ActionSet human = ActionSet::all();
  ActionSet robot = ActionSet::all();
};

double joint_reward(const WorldState& s, double alpha, const World& world);

struct MacroOutcome {
  WorldState state;
  double reward = 0.0;        // joint
  double robot_reward = 0.0;  // R_R over the sub-steps
  double human_reward = 0.0;  // R_H over the sub-steps
  int substeps_taken = 0;
  bool terminal = false;
};

/// Holds `u` for `substeps` ticks, summing the joint reward of every
/// post-state. A turn that is not allowed at some sub-step degrades to Stay
/// for that sub-step. Stops early once the state becomes terminal.
MacroOutcome macro_step(const WorldState& s, JointAction u, int substeps, double alpha,
                        const World& world);

/// Optimistic bound on the reward still obtainable with `remaining_steps`
/// planner steps left: one unit per simulation tick.
double heuristic(int remaining_steps, int substeps);

struct Plan {
  std::vector<JointAction> actions;
  std::vector<WorldState> trajectory;  // root state first, one entry per action after it
  double value = 0.0;
  double robot_reward = 0.0;
  double human_reward = 0.0;
  bool complete = true;  // false when a budget cut the search short
};

struct SearchStats {
  std::size_t nodes_expanded = 0;
  std::size_t nodes_generated = 0;
  std::size_t nodes_pruned = 0;  // open entries discarded by the f < R_max cut
  std::size_t duplicates = 0;    // children dominated by an equal-or-better visit
  std::size_t leaves = 0;
  int max_depth = 0;
  double wall_time_s = 0.0;
  bool complete = true;
  std::vector<double> rmax_trace;  // R_max after every pop, when record_trace is set
};

struct SearchResult {
  JointAction action;  // first joint action of the chosen plan
  Plan plan;
  SearchStats stats;
};

/// Anytime best-first search over joint actions. The open list is ordered
/// by f = g + heuristic (max first), then by depth (deeper first), then by
/// insertion order. Popping an entry with f < R_max ends the search since
/// every remaining entry is bounded by it. Equal-valued root actions are
/// broken uniformly at random from cfg.rng_seed.
SearchResult search_joint_plan(const WorldState& root, const PlannerConfig& cfg, const World& world,
                               const ActionSpace& space = {});

/// Robot component of search_joint_plan. Returns Stay with an empty plan
/// when the root is terminal.
struct RobotDecision {
  Action action = Action::Stay;
  Plan plan;
  SearchStats stats;
};
RobotDecision find_optimal_action(const WorldState& s, const PlannerConfig& cfg, const World& world);

inline constexpr int kOracleDepthCap = 3;

/// Exhaustive enumeration of every joint action sequence of length `depth`
/// with the same macro-step arithmetic as the search. First-found wins ties
/// in joint_action_at order.
Plan brute_force_plan(const WorldState& s, int depth, const PlannerConfig& cfg, const World& world);

struct BaselineResult {
  Action action = Action::Stay;
  std::vector<Action> robot_sequence;
  std::vector<Action> human_response;
  double robot_reward = 0.0;
  double human_reward = 0.0;
};

/// Selfish nested optimisation: the robot picks the sequence maximising its
/// own reward, assuming the human best-responds (maximising R_H) to the
/// robot sequence held fixed. Enumerates 5^depth sequences per side, with
/// depth = cfg.depth() capped at kOracleDepthCap.
BaselineResult selfish_baseline_action(const WorldState& s, const PlannerConfig& cfg,
                                       const World& world);

}  // namespace coopmerge
