#pragma once

// Closed-loop trial runner: advances the world one simulation tick at a
// time, asks one policy per car for an action, and records a replayable log.

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "coopmerge/model.hpp"
#include "coopmerge/planner.hpp"

namespace coopmerge {

/// Scripted stand-ins for the human driver.
struct HumanModel {
  enum class Kind { Cooperative, Selfish, ConstantVelocity, Remote };
  Kind kind = Kind::Cooperative;
  double alpha_h = 0.5;  // cooperative only: weight the human puts on its own reward

  friend bool operator==(const HumanModel&, const HumanModel&) = default;
};

/// "cooperative[:alpha_h]", "selfish", "constant", "remote".
HumanModel parse_human_model(std::string_view text);
std::string to_string(const HumanModel& model);

struct TrialConfig {
  World world;             // road goal lanes must be the swap of the start lanes
  PlannerConfig planner;   // robot planner; the cooperative human derives its own from it
  HumanModel human_model;
  int start_lane_robot = 1;
  int start_lane_human = 0;
  double v0_human = 15.0;
  double v0_robot = 15.0;
  double y0 = 0.0;
  std::int64_t max_ticks = 200;
  std::uint64_t seed = 0;
};

/// Tick cap that stops a trial crawling at 5 m/s or slower.
std::int64_t default_max_ticks(const RoadConfig& road, const PhysicsParams& physics);

void validate(const TrialConfig& cfg);
WorldState initial_state(const TrialConfig& cfg);

class AgentPolicy {
 public:
  virtual ~AgentPolicy() = default;
  virtual Action decide(const WorldState& observed, Side side) = 0;
  /// Search statistics of the most recent decide(), if the policy searches.
  virtual std::optional<SearchStats> last_stats() const { return std::nullopt; }
};

/// Runs the joint planner and executes its own side of the best joint action.
/// `cfg.alpha` is always the weight of the robot reward.
class PlannerPolicy final : public AgentPolicy {
 public:
  PlannerPolicy(PlannerConfig cfg, World world, std::uint64_t seed, ActionSpace space = {});
  Action decide(const WorldState& observed, Side side) override;
  std::optional<SearchStats> last_stats() const override { return stats_; }

 private:
  PlannerConfig cfg_;
  World world_;
  ActionSpace space_;
  std::mt19937_64 rng_;
  std::optional<SearchStats> stats_;
};

class ConstantVelocityPolicy final : public AgentPolicy {
 public:
  Action decide(const WorldState&, Side) override { return Action::Stay; }
};

/// Plays back a fixed action per tick (indexed by WorldState::step), Stay past the end.
class ScriptedPolicy final : public AgentPolicy {
 public:
  explicit ScriptedPolicy(std::vector<Action> script) : script_(std::move(script)) {}
  Action decide(const WorldState& observed, Side side) override;

 private:
  std::vector<Action> script_;
};

/// Single-slot, latest-wins action slot shared between a producer (the
/// session's socket reader) and the trial loop. Reads never block.
class ActionMailbox {
 public:
  void latch(Action action);
  /// Takes the pending action, leaving the slot empty.
  std::optional<Action> consume();
  void clear();

 private:
  std::mutex mutex_;
  std::optional<Action> pending_;
};

/// Drives a car from a mailbox; an empty mailbox means Stay.
class RemotePolicy final : public AgentPolicy {
 public:
  explicit RemotePolicy(std::shared_ptr<ActionMailbox> mailbox) : mailbox_(std::move(mailbox)) {}
  Action decide(const WorldState&, Side) override { return mailbox_->consume().value_or(Action::Stay); }

 private:
  std::shared_ptr<ActionMailbox> mailbox_;
};

/// Planner configuration the scripted human uses for a trial.
PlannerConfig human_planner_config(const TrialConfig& cfg);

/// Builds the human policy for a non-remote model. Remote needs a mailbox,
/// pass it in; other models ignore it.
std::unique_ptr<AgentPolicy> make_human_policy(const TrialConfig& cfg,
                                               std::shared_ptr<ActionMailbox> mailbox = nullptr);
std::unique_ptr<AgentPolicy> make_robot_policy(const TrialConfig& cfg);

struct TickRecord {
  std::int64_t tick = 0;
  double time_s = 0.0;
  CarState human;
  CarState robot;
  // Actions applied at this tick after sanitising; absent on the final record.
  std::optional<Action> human_action;
  std::optional<Action> robot_action;
  // Rewards of the post-transition state.
  double r_H = 0.0;
  double r_R = 0.0;
  std::optional<SearchStats> human_planner;
  std::optional<SearchStats> robot_planner;

  WorldState state() const { return {human, robot, tick}; }
};

struct TrialLog {
  TrialConfig config;
  std::vector<TickRecord> ticks;
  bool aborted = false;
  std::string error;
};

struct TrialOutcome {
  bool merged_human = false;
  bool merged_robot = false;
  std::optional<double> merge_time_human;
  std::optional<double> merge_time_robot;
  bool collision = false;
  double total_r_H = 0.0;
  double total_r_R = 0.0;
  std::int64_t ticks = 0;
  bool aborted = false;
};

/// Hooks for a real-time driver. on_state runs before the policies are
/// queried for that tick.
class TrialObserver {
 public:
  virtual ~TrialObserver() = default;
  virtual void on_state(std::int64_t /*tick*/, const WorldState& /*state*/) {}
};

struct TrialResult {
  TrialOutcome outcome;
  TrialLog log;
};

/// Runs one episode. Each tick the robot policy is queried first, then the
/// human policy, both on the same observed state. Disallowed actions are
/// replaced by Stay before being applied and logged. Stops once the state is
/// terminal or max_ticks transitions have been applied. A policy exception
/// aborts the trial and is recorded in the log.
TrialResult run_trial(const TrialConfig& cfg, AgentPolicy& human, AgentPolicy& robot,
                      TrialObserver* observer = nullptr);

/// Settling time into the goal lane: the time of the first logged state from
/// which the car stays in its goal lane to the end of the log. A colliding
/// final state does not count.
std::optional<double> compute_merge_time(const TrialLog& log, Side side);

TrialOutcome compute_outcome(const TrialLog& log);

struct ReplayResult {
  std::vector<WorldState> states;
  std::optional<std::int64_t> divergence_tick;  // first tick whose logged state disagrees
};

/// Re-simulates the logged actions from the header configuration and
/// compares every logged state bit for bit.
ReplayResult replay(const TrialLog& log);

struct LogWriteOptions {
  bool include_timing = false;  // wall times make otherwise identical logs differ
};

void write_trial_log(std::ostream& out, const TrialLog& log, const LogWriteOptions& options = {});
void write_trial_log(const std::string& path, const TrialLog& log, const LogWriteOptions& options = {});
TrialLog read_trial_log(std::istream& in);
TrialLog read_trial_log(const std::string& path);

}  // namespace coopmerge
