#pragma once

// Real-time session server. Each web socket connection is one session: a
// practice trial or more, then the recorded trials, each ticked at wall-clock
// speed with the human car driven by the client's action messages and the
// robot car by the planner.

#include <cstdint>
#include <memory>
#include <string>

#include "coopmerge/experiments.hpp"

namespace coopmerge {

struct SessionPlan {
  std::size_t practice_trials = 1;   // not recorded
  std::size_t recorded_trials = 18;
  std::uint64_t seed = 7;
  ConditionGrid grid;                // recorded trials draw a condition uniformly from it
  ExperimentConfig trial_defaults;   // world, robot planner, speed sampling
  double tick_period_s = 0.2;
  double planner_margin_s = 0.03;    // head-room left in each tick after planning
  double questionnaire_timeout_s = 60.0;
  // Fixed node budget instead of the wall clock; makes a session reproducible.
  std::size_t deterministic_expansions = 0;
};

/// Defaults for a live study: the robot plans within one tick period.
SessionPlan default_session_plan();

/// Robot planner configuration actually used for a session trial.
PlannerConfig session_planner_config(const SessionPlan& plan, double alpha);

struct ServiceConfig {
  std::string address = "0.0.0.0";
  std::uint16_t port = 8700;  // 0 picks a free port
  std::string out_dir = "sessions";
  SessionPlan plan = default_session_plan();
};

class SessionServer {
 public:
  explicit SessionServer(ServiceConfig cfg);
  ~SessionServer();
  SessionServer(const SessionServer&) = delete;
  SessionServer& operator=(const SessionServer&) = delete;

  /// Binds and starts accepting; returns the bound port.
  std::uint16_t start();
  /// Blocks until stop() is called from another thread or a signal handler.
  void wait();
  /// Stops accepting, aborts running sessions and joins all threads.
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace coopmerge
