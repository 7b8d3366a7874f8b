#include "coopmerge/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "coopmerge/config.hpp"

namespace coopmerge {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Node budget per planning call in batch runs. Roughly what one 0.2 s call
// manages on a single laptop core, and enough to finish most searches.
constexpr std::size_t kBatchExpansionBudget = 4000;

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

std::optional<double> se_of(const std::vector<double>& xs) {
  if (xs.size() < 2) return std::nullopt;
  const double m = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  const double sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  return sd / std::sqrt(static_cast<double>(xs.size()));
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw std::runtime_error("csv: bad number '" + s + "'");
  return v;
}

std::optional<double> parse_opt(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return parse_double(s);
}

template <typename Int>
Int parse_int(const std::string& s) {
  Int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw std::runtime_error("csv: bad integer '" + s + "'");
  return v;
}

const char* const kSummaryHeader =
    "road_length,alpha,n,hv_failure_rate,av_failure_rate,hv_merge_time_mean,hv_merge_time_se,"
    "av_merge_time_mean,av_merge_time_se,hv_reward_mean,av_reward_mean,hv_osc_mean,av_osc_mean";

const char* const kTrialHeader =
    "road_length,alpha,trial,seed,aborted,collision,hv_merged,av_merged,hv_merge_time,av_merge_time,"
    "hv_reward,av_reward,hv_osc,av_osc,ticks";

}  // namespace

std::vector<Condition> ConditionGrid::conditions() const {
  std::vector<Condition> out;
  for (double road : road_lengths) {
    for (double alpha : alphas) out.push_back({road, alpha});
  }
  return out;
}

ExperimentConfig default_experiment_config() {
  ExperimentConfig cfg;
  cfg.planner.time_budget = std::numeric_limits<double>::infinity();
  cfg.planner.max_expansions = kBatchExpansionBudget;
  return cfg;
}

void validate(const ExperimentConfig& cfg) {
  validate(cfg.world);
  validate(cfg.planner, cfg.world);
  if (cfg.grid.road_lengths.empty() || cfg.grid.alphas.empty()) {
    throw std::invalid_argument("experiment: the grid needs at least one road length and one alpha");
  }
  for (double r : cfg.grid.road_lengths) {
    if (!(r > 0.0)) throw std::invalid_argument("experiment: road lengths must be positive");
  }
  for (double a : cfg.grid.alphas) {
    if (!(a >= 0.0 && a <= 1.0)) throw std::invalid_argument("experiment: alphas must lie in [0, 1]");
  }
  if (!(cfg.v0_robot_sd >= 0.0)) throw std::invalid_argument("experiment: v0_robot_sd must be non-negative");
  if (cfg.human_model.kind == HumanModel::Kind::Remote) {
    throw std::invalid_argument("experiment: a batch needs a scripted human model, not remote");
  }
}

TrialConfig sample_trial(const Condition& condition, const ExperimentConfig& cfg, std::mt19937_64& rng) {
  TrialConfig t;
  t.world = cfg.world;
  t.world.road.road_length = condition.road_length;
  t.planner = cfg.planner;
  t.planner.alpha = condition.alpha;
  t.human_model = cfg.human_model;

  std::bernoulli_distribution robot_left(0.5);
  std::normal_distribution<double> v0(cfg.v0_robot_mean, cfg.v0_robot_sd);
  t.start_lane_robot = robot_left(rng) ? 0 : 1;
  t.start_lane_human = 1 - t.start_lane_robot;
  t.world.road.goal_lane_robot = t.start_lane_human;
  t.world.road.goal_lane_human = t.start_lane_robot;
  t.v0_human = cfg.v0_human;
  t.v0_robot = std::clamp(v0(rng), t.world.physics.v_min, t.world.physics.v_max);
  t.y0 = 0.0;
  t.max_ticks = default_max_ticks(t.world.road, t.world.physics);
  return t;
}

std::uint64_t trial_seed(const ConditionGrid& grid, std::size_t index) { return grid.base_seed + index; }

int oscillation_count(const TrialLog& log, Side side) {
  int changes = 0;
  int last_sign = 0;
  for (std::size_t i = 1; i < log.ticks.size(); ++i) {
    const double dx = log.ticks[i].state().car(side).x - log.ticks[i - 1].state().car(side).x;
    const int sign = (dx > 0.0) - (dx < 0.0);
    if (sign == 0) continue;
    if (last_sign != 0 && sign != last_sign) ++changes;
    last_sign = sign;
  }
  return changes;
}

ConditionSummary summarize(const Condition& condition, const std::vector<TrialRecord>& trials) {
  ConditionSummary s;
  s.condition = condition;
  std::vector<double> mt_h, mt_r, rw_h, rw_r, osc_h, osc_r;
  for (const TrialRecord& t : trials) {
    if (!(t.condition == condition)) continue;
    ++s.n;
    const TrialOutcome& o = t.outcome;
    if (o.merge_time_human) mt_h.push_back(*o.merge_time_human);
    if (o.merge_time_robot) mt_r.push_back(*o.merge_time_robot);
    rw_h.push_back(o.total_r_H);
    rw_r.push_back(o.total_r_R);
    osc_h.push_back(t.osc_human);
    osc_r.push_back(t.osc_robot);
  }
  auto fill = [&](AgentSummary& a, const std::vector<double>& mt, const std::vector<double>& rw,
                  const std::vector<double>& osc) {
    a.failures = s.n - mt.size();
    if (s.n == 0) return;
    a.failure_rate = static_cast<double>(a.failures) / static_cast<double>(s.n);
    if (!mt.empty()) a.merge_time_mean = mean_of(mt);
    a.merge_time_se = se_of(mt);
    a.reward_mean = mean_of(rw);
    a.reward_se = se_of(rw);
    a.osc_mean = mean_of(osc);
  };
  fill(s.human, mt_h, rw_h, osc_h);
  fill(s.robot, mt_r, rw_r, osc_r);
  return s;
}

std::string trial_log_name(const Condition& condition, std::size_t index) {
  char idx[16];
  std::snprintf(idx, sizeof idx, "%04zu", index);
  return "road" + fmt(condition.road_length) + "_alpha" + fmt(condition.alpha) + "_trial" + idx + ".jsonl";
}

BatchResult run_batch(const ExperimentConfig& cfg) {
  validate(cfg);
  const std::vector<Condition> conditions = cfg.grid.conditions();
  const std::size_t per = cfg.grid.trials_per_condition;
  BatchResult result;
  result.trials.resize(conditions.size() * per);
  if (cfg.log_dir) fs::create_directories(*cfg.log_dir);

  auto run_one = [&](std::size_t slot) {
    TrialRecord& rec = result.trials[slot];
    rec.condition = conditions[slot / per];
    rec.index = slot % per;
    rec.seed = trial_seed(cfg.grid, rec.index);
    try {
      std::mt19937_64 rng(rec.seed);
      rec.config = sample_trial(rec.condition, cfg, rng);
      rec.config.seed = rec.seed;
      auto human = make_human_policy(rec.config);
      auto robot = make_robot_policy(rec.config);
      TrialResult r = run_trial(rec.config, *human, *robot);
      rec.outcome = r.outcome;
      rec.osc_human = oscillation_count(r.log, Side::Human);
      rec.osc_robot = oscillation_count(r.log, Side::Robot);
      if (cfg.log_dir) write_trial_log((fs::path(*cfg.log_dir) / trial_log_name(rec.condition, rec.index)).string(), r.log);
      if (cfg.keep_logs) rec.log = std::move(r.log);
    } catch (const std::exception& e) {
      rec.error = e.what();
      rec.outcome = TrialOutcome{};
      rec.outcome.aborted = true;
    }
  };

  const std::size_t total = result.trials.size();
  const unsigned jobs = std::max(1U, std::min<unsigned>(cfg.jobs, static_cast<unsigned>(std::max<std::size_t>(total, 1))));
  if (jobs == 1) {
    for (std::size_t i = 0; i < total; ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned j = 0; j < jobs; ++j) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < total; i = next++) run_one(i);
      });
    }
    for (auto& t : pool) t.join();
  }

  for (const Condition& c : conditions) result.summaries.push_back(summarize(c, result.trials));
  return result;
}

void export_summaries(std::ostream& out, const std::vector<ConditionSummary>& summaries) {
  out << kSummaryHeader << '\n';
  for (const ConditionSummary& s : summaries) {
    const bool any = s.n > 0;
    out << fmt(s.condition.road_length) << ',' << fmt(s.condition.alpha) << ',' << s.n << ','
        << (any ? fmt(s.human.failure_rate) : "") << ',' << (any ? fmt(s.robot.failure_rate) : "") << ','
        << fmt(s.human.merge_time_mean) << ',' << fmt(s.human.merge_time_se) << ',' << fmt(s.robot.merge_time_mean)
        << ',' << fmt(s.robot.merge_time_se) << ',' << fmt(s.human.reward_mean) << ',' << fmt(s.robot.reward_mean)
        << ',' << fmt(s.human.osc_mean) << ',' << fmt(s.robot.osc_mean) << '\n';
  }
}

std::vector<ConditionSummary> read_summaries(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kSummaryHeader) throw std::runtime_error("summary csv: unexpected header");
  std::vector<ConditionSummary> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = split_csv(line);
    if (c.size() != 13) throw std::runtime_error("summary csv: expected 13 columns");
    ConditionSummary s;
    s.condition = {parse_double(c[0]), parse_double(c[1])};
    s.n = parse_int<std::size_t>(c[2]);
    if (s.n > 0) {
      s.human.failure_rate = parse_double(c[3]);
      s.robot.failure_rate = parse_double(c[4]);
      s.human.failures = static_cast<std::size_t>(std::llround(s.human.failure_rate * static_cast<double>(s.n)));
      s.robot.failures = static_cast<std::size_t>(std::llround(s.robot.failure_rate * static_cast<double>(s.n)));
    }
    s.human.merge_time_mean = parse_opt(c[5]);
    s.human.merge_time_se = parse_opt(c[6]);
    s.robot.merge_time_mean = parse_opt(c[7]);
    s.robot.merge_time_se = parse_opt(c[8]);
    s.human.reward_mean = parse_opt(c[9]);
    s.robot.reward_mean = parse_opt(c[10]);
    s.human.osc_mean = parse_opt(c[11]);
    s.robot.osc_mean = parse_opt(c[12]);
    out.push_back(s);
  }
  return out;
}

void export_trials(std::ostream& out, const std::vector<TrialRecord>& trials) {
  out << kTrialHeader << '\n';
  for (const TrialRecord& t : trials) {
    const TrialOutcome& o = t.outcome;
    out << fmt(t.condition.road_length) << ',' << fmt(t.condition.alpha) << ',' << t.index << ',' << t.seed << ','
        << int(o.aborted) << ',' << int(o.collision) << ',' << int(o.merged_human) << ',' << int(o.merged_robot)
        << ',' << fmt(o.merge_time_human) << ',' << fmt(o.merge_time_robot) << ',' << fmt(o.total_r_H) << ','
        << fmt(o.total_r_R) << ',' << t.osc_human << ',' << t.osc_robot << ',' << o.ticks << '\n';
  }
}

std::vector<TrialRow> read_trials(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kTrialHeader) throw std::runtime_error("trials csv: unexpected header");
  std::vector<TrialRow> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = split_csv(line);
    if (c.size() != 15) throw std::runtime_error("trials csv: expected 15 columns");
    TrialRow r;
    r.condition = {parse_double(c[0]), parse_double(c[1])};
    r.index = parse_int<std::size_t>(c[2]);
    r.seed = parse_int<std::uint64_t>(c[3]);
    r.aborted = c[4] == "1";
    r.collision = c[5] == "1";
    r.merged_human = c[6] == "1";
    r.merged_robot = c[7] == "1";
    r.merge_time_human = parse_opt(c[8]);
    r.merge_time_robot = parse_opt(c[9]);
    r.reward_human = parse_double(c[10]);
    r.reward_robot = parse_double(c[11]);
    r.osc_human = parse_int<int>(c[12]);
    r.osc_robot = parse_int<int>(c[13]);
    r.ticks = parse_int<std::int64_t>(c[14]);
    out.push_back(r);
  }
  return out;
}

void write_batch_outputs(const std::string& dir, const BatchResult& result) {
  fs::create_directories(dir);
  {
    std::ofstream out(fs::path(dir) / "summary.csv", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write summary.csv in " + dir);
    export_summaries(out, result.summaries);
  }
  std::ofstream out(fs::path(dir) / "trials.csv", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write trials.csv in " + dir);
  export_trials(out, result.trials);
}

ExperimentConfig load_experiment_config(const std::string& path) {
  const json j = read_json_file(path);
  ExperimentConfig cfg = default_experiment_config();
  const ModelConfig model = parse_model_config(j);
  cfg.world = model.world;
  // Keep the batch node budget unless the file sets its own limits.
  const json planner = j.value("planner", json::object());
  const PlannerConfig defaults = cfg.planner;
  cfg.planner = model.planner;
  if (!planner.contains("time_budget")) cfg.planner.time_budget = defaults.time_budget;
  if (!planner.contains("max_expansions")) cfg.planner.max_expansions = defaults.max_expansions;

  if (auto it = j.find("road_lengths"); it != j.end()) cfg.grid.road_lengths = it->get<std::vector<double>>();
  if (auto it = j.find("alphas"); it != j.end()) cfg.grid.alphas = it->get<std::vector<double>>();
  cfg.grid.trials_per_condition = j.value("trials_per_condition", cfg.grid.trials_per_condition);
  cfg.grid.base_seed = j.value("base_seed", cfg.grid.base_seed);
  if (auto it = j.find("human_model"); it != j.end()) cfg.human_model = parse_human_model(it->get<std::string>());
  cfg.v0_human = j.value("v0_human", cfg.v0_human);
  cfg.v0_robot_mean = j.value("v0_robot_mean", cfg.v0_robot_mean);
  cfg.v0_robot_sd = j.value("v0_robot_sd", cfg.v0_robot_sd);
  cfg.jobs = j.value("jobs", cfg.jobs);
  validate(cfg);
  return cfg;
}

Metric parse_metric(std::string_view name) {
  if (name == "merge_time") return Metric::MergeTime;
  if (name == "reward") return Metric::Reward;
  if (name == "osc") return Metric::Oscillations;
  throw std::invalid_argument("unknown metric '" + std::string(name) + "' (merge_time, reward, osc)");
}

bool RowFilter::matches(const TrialRow& row) const {
  return (!alpha || *alpha == row.condition.alpha) && (!road_length || *road_length == row.condition.road_length);
}

RowFilter parse_row_filter(std::string_view text) {
  RowFilter f;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const std::string_view item = text.substr(0, comma);
    text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) throw std::invalid_argument("filter: expected key=value, got '" + std::string(item) + "'");
    const std::string key(item.substr(0, eq));
    double value = 0.0;
    try {
      value = parse_double(std::string(item.substr(eq + 1)));
    } catch (const std::runtime_error&) {
      throw std::invalid_argument("filter: bad number in '" + std::string(item) + "'");
    }
    if (key == "alpha") {
      f.alpha = value;
    } else if (key == "road_length") {
      f.road_length = value;
    } else {
      throw std::invalid_argument("filter: unknown key '" + key + "' (alpha, road_length)");
    }
  }
  return f;
}

std::vector<double> metric_values(const std::vector<TrialRow>& rows, Metric metric, Side side, const RowFilter& filter) {
  const bool human = side == Side::Human;
  std::vector<double> out;
  for (const TrialRow& r : rows) {
    if (!filter.matches(r)) continue;
    switch (metric) {
      case Metric::MergeTime:
        if (const auto& t = human ? r.merge_time_human : r.merge_time_robot) out.push_back(*t);
        break;
      case Metric::Reward:
        out.push_back(human ? r.reward_human : r.reward_robot);
        break;
      case Metric::Oscillations:
        out.push_back(human ? r.osc_human : r.osc_robot);
        break;
    }
  }
  return out;
}

}  // namespace coopmerge
