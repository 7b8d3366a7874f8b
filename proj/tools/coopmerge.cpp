// coopmerge: batch experiments, single simulations, log replay, hypothesis
// tests over trials.csv, and the real-time session server.

#include <csignal>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>

#include <CLI11.hpp>
#include <json.hpp>

#include "coopmerge/experiments.hpp"
#include "coopmerge/protocol.hpp"
#include "coopmerge/service.hpp"
#include "coopmerge/stats.hpp"

using namespace coopmerge;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json outcome_json(const TrialOutcome& o) { return protocol::trial_end(0, o)["outcome"]; }

std::optional<Side> parse_side(const std::string& s) {
  if (s == "human") return Side::Human;
  if (s == "robot") return Side::Robot;
  return std::nullopt;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double mean(const std::vector<double>& v) {
  return v.empty() ? std::nan("") : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::string fmt(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", *v);
  return buf;
}

struct ExperimentArgs {
  std::string config;
  std::string human;
  std::optional<std::size_t> trials;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::optional<std::size_t> budget;
  std::vector<double> alphas;
  std::vector<double> road_lengths;
  std::string out_dir;
  bool no_logs = false;
};

int run_experiment(const ExperimentArgs& a) {
  ExperimentConfig cfg = a.config.empty() ? default_experiment_config() : load_experiment_config(a.config);
  if (!a.human.empty()) cfg.human_model = parse_human_model(a.human);
  if (a.trials) cfg.grid.trials_per_condition = *a.trials;
  if (a.seed) cfg.grid.base_seed = *a.seed;
  if (a.jobs) cfg.jobs = *a.jobs;
  if (a.budget) cfg.planner.max_expansions = *a.budget;
  if (!a.alphas.empty()) cfg.grid.alphas = a.alphas;
  if (!a.road_lengths.empty()) cfg.grid.road_lengths = a.road_lengths;
  if (!a.no_logs) cfg.log_dir = (fs::path(a.out_dir) / "logs").string();
  validate(cfg);

  const BatchResult r = run_batch(cfg);
  write_batch_outputs(a.out_dir, r);

  std::printf("%-6s %-5s %4s %8s %8s %9s %9s %8s %8s\n", "road", "alpha", "n", "hv_fail", "av_fail", "hv_merge",
              "av_merge", "av_rew", "av_osc");
  for (const ConditionSummary& s : r.summaries) {
    std::printf("%-6g %-5g %4zu %8s %8s %9s %9s %8s %8s\n", s.condition.road_length, s.condition.alpha, s.n,
                fmt(s.human.failure_rate).c_str(), fmt(s.robot.failure_rate).c_str(),
                fmt(s.human.merge_time_mean).c_str(), fmt(s.robot.merge_time_mean).c_str(),
                fmt(s.robot.reward_mean).c_str(), fmt(s.robot.osc_mean).c_str());
  }
  std::size_t errors = 0;
  for (const TrialRecord& t : r.trials) errors += !t.error.empty();
  if (errors) std::fprintf(stderr, "%zu trial(s) aborted with an error\n", errors);
  std::printf("wrote %s\n", (fs::path(a.out_dir) / "summary.csv").c_str());
  return 0;
}

struct StatsArgs {
  std::string dir;
  std::string metric = "merge_time";
  std::string side = "robot";
  std::optional<std::string> a, b;
  std::string by;
  std::string where;
};

int run_stats(const StatsArgs& s) {
  fs::path path = s.dir;
  if (fs::is_directory(path)) path /= "trials.csv";
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const std::vector<TrialRow> rows = read_trials(in);
  const Metric metric = parse_metric(s.metric);
  const auto side = parse_side(s.side);
  if (!side) throw std::invalid_argument("side must be human or robot");

  json out{{"metric", s.metric}, {"side", s.side}};
  if (s.a || s.b) {
    if (!s.a || !s.b) throw std::invalid_argument("a t-test needs both --a and --b");
    const auto xa = metric_values(rows, metric, *side, parse_row_filter(*s.a));
    const auto xb = metric_values(rows, metric, *side, parse_row_filter(*s.b));
    const TTestResult t = student_t_test(xa, xb);
    out["test"] = "student_t";
    out["a"] = {{"filter", *s.a}, {"n", xa.size()}, {"mean", finite_or_null(mean(xa))}};
    out["b"] = {{"filter", *s.b}, {"n", xb.size()}, {"mean", finite_or_null(mean(xb))}};
    out["t"] = finite_or_null(t.t);
    out["df"] = t.df;
    out["p"] = t.p;
  } else {
    if (s.by != "alpha" && s.by != "road_length") throw std::invalid_argument("give --a/--b, or --by alpha|road_length");
    const RowFilter where = parse_row_filter(s.where);
    std::map<double, std::vector<TrialRow>> split;
    for (const TrialRow& r : rows) {
      if (where.matches(r)) split[s.by == "alpha" ? r.condition.alpha : r.condition.road_length].push_back(r);
    }
    std::vector<std::vector<double>> groups;
    json jg = json::array();
    for (const auto& [key, rs] : split) {
      groups.push_back(metric_values(rs, metric, *side, {}));
      jg.push_back({{s.by, key}, {"n", groups.back().size()}, {"mean", finite_or_null(mean(groups.back()))}});
    }
    const AnovaResult r = one_way_anova(groups);
    out["test"] = "one_way_anova";
    out["groups"] = jg;
    out["F"] = finite_or_null(r.F);
    out["df_between"] = r.df_between;
    out["df_within"] = r.df_within;
    out["p"] = r.p;
  }
  std::cout << out.dump(2) << '\n';
  return 0;
}

struct SimulateArgs {
  double alpha = 0.6;
  double road_length = 200.0;
  std::string human = "cooperative:0.5";
  std::uint64_t seed = 1;
  std::optional<std::size_t> budget;
  std::string out;
};

int run_simulate(const SimulateArgs& a) {
  ExperimentConfig cfg = default_experiment_config();
  if (a.budget) cfg.planner.max_expansions = *a.budget;
  std::mt19937_64 rng(a.seed);
  TrialConfig tc = sample_trial({a.road_length, a.alpha}, cfg, rng);
  tc.human_model = parse_human_model(a.human);
  if (tc.human_model.kind == HumanModel::Kind::Remote) throw std::invalid_argument("simulate: remote needs the server");
  tc.seed = a.seed;
  validate(tc);
  auto human = make_human_policy(tc);
  auto robot = make_robot_policy(tc);
  const TrialResult r = run_trial(tc, *human, *robot);
  if (!a.out.empty()) write_trial_log(a.out, r.log);
  json j = outcome_json(r.outcome);
  if (r.log.aborted) j["error"] = r.log.error;
  std::cout << j.dump(2) << '\n';
  return r.log.aborted ? 1 : 0;
}

int run_replay(const std::string& file, bool check) {
  const TrialLog log = read_trial_log(file);
  const ReplayResult rr = replay(log);
  json j = outcome_json(compute_outcome(log));
  j["consistent"] = !rr.divergence_tick.has_value();
  if (rr.divergence_tick) j["divergence_tick"] = *rr.divergence_tick;
  std::cout << j.dump(2) << '\n';
  return check && rr.divergence_tick ? 1 : 0;
}

struct ServeArgs {
  ServiceConfig cfg;
  std::optional<std::size_t> budget;
};

int run_serve(ServeArgs a) {
  if (a.budget) a.cfg.plan.deterministic_expansions = *a.budget;
  // Threads started below inherit the blocked signals; the main thread
  // picks them up with sigwait.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  SessionServer server(a.cfg);
  const auto port = server.start();
  std::printf("listening on ws://%s:%u, sessions in %s\n", a.cfg.address.c_str(), port, a.cfg.out_dir.c_str());
  std::fflush(stdout);
  int sig = 0;
  sigwait(&signals, &sig);
  server.stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Collaborative lane-merge planner: experiments, replay, statistics and live sessions"};
  app.require_subcommand(1);

  ExperimentArgs ea;
  auto* exp = app.add_subcommand("experiment", "Run the condition grid with a scripted human");
  exp->add_option("--grid,--config", ea.config, "JSON experiment configuration");
  exp->add_option("--human", ea.human, "cooperative[:alpha_h] | selfish | constant");
  exp->add_option("--trials", ea.trials, "Trials per condition");
  exp->add_option("--seed", ea.seed, "Base seed; trial i uses seed+i in every condition");
  exp->add_option("--jobs", ea.jobs, "Worker threads");
  exp->add_option("--budget", ea.budget, "Robot node expansions per decision");
  exp->add_option("--alphas", ea.alphas, "Override the alpha levels");
  exp->add_option("--road-lengths", ea.road_lengths, "Override the road lengths (m)");
  exp->add_option("--out-dir", ea.out_dir, "Output directory")->required();
  exp->add_flag("--no-logs", ea.no_logs, "Skip per-trial logs");

  StatsArgs sa;
  auto* st = app.add_subcommand("stats", "Student t-test or one-way ANOVA over trials.csv");
  st->add_option("dir", sa.dir, "Experiment directory or trials.csv")->required();
  st->add_option("--metric", sa.metric, "merge_time | reward | osc")->capture_default_str();
  st->add_option("--side", sa.side, "human | robot")->capture_default_str();
  st->add_option("--a", sa.a, "First sample, e.g. alpha=0.6,road_length=200");
  st->add_option("--b", sa.b, "Second sample");
  st->add_option("--by", sa.by, "ANOVA grouping: alpha | road_length");
  st->add_option("--where", sa.where, "Row filter applied before grouping");

  SimulateArgs sm;
  auto* sim = app.add_subcommand("simulate", "Run one trial and print its outcome");
  sim->add_option("--alpha", sm.alpha)->capture_default_str();
  sim->add_option("--road-length", sm.road_length)->capture_default_str();
  sim->add_option("--human", sm.human)->capture_default_str();
  sim->add_option("--seed", sm.seed)->capture_default_str();
  sim->add_option("--budget", sm.budget, "Robot node expansions per decision");
  sim->add_option("--out", sm.out, "Write the trial log here");

  std::string replay_file;
  bool replay_check = false;
  auto* rp = app.add_subcommand("replay", "Re-simulate a trial log");
  rp->add_option("file", replay_file)->required();
  rp->add_flag("--check", replay_check, "Exit 1 when the log does not replay exactly");

  ServeArgs sv;
  auto* serve = app.add_subcommand("serve", "Web socket server for live sessions");
  serve->add_option("--address", sv.cfg.address)->capture_default_str();
  serve->add_option("--port", sv.cfg.port)->capture_default_str();
  serve->add_option("--out-dir", sv.cfg.out_dir)->capture_default_str();
  serve->add_option("--trials", sv.cfg.plan.recorded_trials, "Recorded trials per session")->capture_default_str();
  serve->add_option("--practice", sv.cfg.plan.practice_trials)->capture_default_str();
  serve->add_option("--seed", sv.cfg.plan.seed)->capture_default_str();
  serve->add_option("--budget", sv.budget, "Fixed node budget instead of the tick deadline");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*exp) return run_experiment(ea);
    if (*st) return run_stats(sa);
    if (*sim) return run_simulate(sm);
    if (*rp) return run_replay(replay_file, replay_check);
    if (*serve) return run_serve(sv);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
