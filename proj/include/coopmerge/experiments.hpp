#pragma once

// Batch harness over the road-length x alpha condition grid with a scripted
// human: trial sampling, execution, per-condition metrics and CSV export.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "coopmerge/sim.hpp"

namespace coopmerge {

struct Condition {
  double road_length = 200.0;
  double alpha = 0.6;

  friend bool operator==(const Condition&, const Condition&) = default;
};

struct ConditionGrid {
  std::vector<double> road_lengths{100.0, 200.0};
  std::vector<double> alphas{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  std::size_t trials_per_condition = 100;
  std::uint64_t base_seed = 42;

  /// Road length major, alpha minor.
  std::vector<Condition> conditions() const;
};

/// Everything a batch needs besides the grid itself.
struct ExperimentConfig {
  ConditionGrid grid;
  World world;            // road_length and goal lanes are overwritten per trial
  PlannerConfig planner;  // alpha is overwritten per condition
  HumanModel human_model;
  double v0_human = 15.0;
  double v0_robot_mean = 15.0;
  double v0_robot_sd = 3.0;
  unsigned jobs = 1;
  std::optional<std::string> log_dir;  // per-trial .jsonl files when set
  bool keep_logs = false;              // keep logs in memory (tests, replay checks)
};

/// Batch defaults: the wall-clock timer is replaced by a node budget so a
/// batch is reproducible run to run.
ExperimentConfig default_experiment_config();

void validate(const ExperimentConfig& cfg);

/// Start lanes uniform over the two assignments, v0_human fixed,
/// v0_robot ~ Normal(mean, sd) clamped to [v_min, v_max].
TrialConfig sample_trial(const Condition& condition, const ExperimentConfig& cfg, std::mt19937_64& rng);

/// Seed of trial `index` within every condition. Trials with the same index
/// share their initial conditions across alphas.
std::uint64_t trial_seed(const ConditionGrid& grid, std::size_t index);

/// Number of sign changes of the per-tick lateral displacement, ignoring
/// ticks without lateral motion.
int oscillation_count(const TrialLog& log, Side side);

struct TrialRecord {
  Condition condition;
  std::size_t index = 0;
  std::uint64_t seed = 0;
  TrialConfig config;
  TrialOutcome outcome;
  int osc_human = 0;
  int osc_robot = 0;
  std::string error;  // set when the trial could not run at all
  std::optional<TrialLog> log;
};

struct AgentSummary {
  double failure_rate = 0.0;
  std::size_t failures = 0;
  std::optional<double> merge_time_mean;  // successful merges only
  std::optional<double> merge_time_se;    // sample sd / sqrt(successes); needs two successes
  std::optional<double> reward_mean;
  std::optional<double> reward_se;
  std::optional<double> osc_mean;
};

struct ConditionSummary {
  Condition condition;
  std::size_t n = 0;
  AgentSummary human;
  AgentSummary robot;
};

ConditionSummary summarize(const Condition& condition, const std::vector<TrialRecord>& trials);

struct BatchResult {
  std::vector<TrialRecord> trials;  // condition order, then trial index
  std::vector<ConditionSummary> summaries;
};

BatchResult run_batch(const ExperimentConfig& cfg);

/// Log file name of a trial inside ExperimentConfig::log_dir.
std::string trial_log_name(const Condition& condition, std::size_t index);

void export_summaries(std::ostream& out, const std::vector<ConditionSummary>& summaries);
std::vector<ConditionSummary> read_summaries(std::istream& in);

/// Per-trial outcome table (one row per trial) used by the stats command.
void export_trials(std::ostream& out, const std::vector<TrialRecord>& trials);

struct TrialRow {
  Condition condition;
  std::size_t index = 0;
  std::uint64_t seed = 0;
  bool aborted = false;
  bool collision = false;
  bool merged_human = false;
  bool merged_robot = false;
  std::optional<double> merge_time_human;
  std::optional<double> merge_time_robot;
  double reward_human = 0.0;
  double reward_robot = 0.0;
  int osc_human = 0;
  int osc_robot = 0;
  std::int64_t ticks = 0;
};
std::vector<TrialRow> read_trials(std::istream& in);

/// Writes summary.csv and trials.csv (and logs when configured) into `dir`.
void write_batch_outputs(const std::string& dir, const BatchResult& result);

ExperimentConfig load_experiment_config(const std::string& path);

// --- selecting samples for hypothesis tests --------------------------------

enum class Metric { MergeTime, Reward, Oscillations };
Metric parse_metric(std::string_view name);  // merge_time | reward | osc

/// "alpha=0.6,road_length=200"; the empty string matches every row.
struct RowFilter {
  std::optional<double> alpha;
  std::optional<double> road_length;
  bool matches(const TrialRow& row) const;
};
RowFilter parse_row_filter(std::string_view text);

/// One value per matching trial. Merge time only counts trials in which that
/// car merged.
std::vector<double> metric_values(const std::vector<TrialRow>& rows, Metric metric, Side side, const RowFilter& filter);

}  // namespace coopmerge
