#include <sstream>
#include <stdexcept>

#include <doctest.h>

#include "coopmerge/sim.hpp"

using namespace coopmerge;

namespace {

TrialConfig short_trial() {
  TrialConfig c;
  c.world.road.road_length = 60.0;
  c.world.road.goal_lane_robot = 0;
  c.world.road.goal_lane_human = 1;
  c.start_lane_robot = 1;
  c.start_lane_human = 0;
  c.planner.time_budget = std::numeric_limits<double>::infinity();
  c.planner.max_expansions = 1500;
  c.max_ticks = default_max_ticks(c.world.road, c.world.physics);
  c.seed = 3;
  return c;
}

// Log whose car x-positions follow the given lane sequence, cars far apart.
TrialLog lane_log(const std::vector<int>& robot_lanes) {
  TrialLog log;
  log.config = short_trial();
  for (std::size_t i = 0; i < robot_lanes.size(); ++i) {
    TickRecord r;
    r.tick = static_cast<std::int64_t>(i);
    r.time_s = static_cast<double>(i) * 0.2;
    r.human = {100.0, 2.0, 15.0};
    r.robot = {0.0, lane_center(robot_lanes[i], log.config.world.road), 15.0};
    if (i + 1 < robot_lanes.size()) {
      r.human_action = Action::Stay;
      r.robot_action = Action::Stay;
    }
    log.ticks.push_back(r);
  }
  return log;
}

std::vector<int> lanes(std::size_t n, int before, std::size_t from, int after) {
  std::vector<int> v(n, before);
  for (std::size_t i = from; i < n; ++i) v[i] = after;
  return v;
}

class ThrowingPolicy final : public AgentPolicy {
 public:
  Action decide(const WorldState& s, Side) override {
    if (s.step == 2) throw std::runtime_error("controller lost");
    return Action::Stay;
  }
};

}  // namespace

TEST_CASE("human model descriptors") {
  CHECK(parse_human_model("cooperative").kind == HumanModel::Kind::Cooperative);
  CHECK(parse_human_model("cooperative:0.25").alpha_h == 0.25);
  CHECK(parse_human_model("selfish").kind == HumanModel::Kind::Selfish);
  CHECK(parse_human_model("constant").kind == HumanModel::Kind::ConstantVelocity);
  CHECK(parse_human_model("remote").kind == HumanModel::Kind::Remote);
  CHECK_THROWS(parse_human_model("cooperative:2"));
  CHECK_THROWS(parse_human_model("aggressive"));
  for (const char* s : {"cooperative:0.5", "selfish", "constant", "remote"}) {
    CHECK(to_string(parse_human_model(s)) == s);
  }
}

TEST_CASE("trial config validation") {
  TrialConfig c = short_trial();
  CHECK_NOTHROW(validate(c));
  c.start_lane_human = 1;
  CHECK_THROWS_AS(validate(c), std::invalid_argument);
  c = short_trial();
  c.world.road.goal_lane_robot = 1;
  CHECK_THROWS_AS(validate(c), std::invalid_argument);
  c = short_trial();
  c.v0_robot = 31.0;
  CHECK_THROWS_AS(validate(c), std::invalid_argument);
  CHECK(default_max_ticks(RoadConfig{}, PhysicsParams{}) == 200);
}

TEST_CASE("two constant-velocity cars run side by side to the road end") {
  TrialConfig c = short_trial();
  ConstantVelocityPolicy h, r;
  const TrialResult res = run_trial(c, h, r);
  CHECK_FALSE(res.outcome.collision);
  CHECK_FALSE(res.outcome.merged_human);
  CHECK_FALSE(res.outcome.merged_robot);
  const TickRecord& last = res.log.ticks.back();
  CHECK(last.robot.y + c.world.car.length / 2 > c.world.road.road_length);
  CHECK_FALSE(last.robot_action.has_value());
  // 57.5 m at 3 m per tick: terminal after 20 ticks.
  CHECK(res.outcome.ticks == 20);
}

TEST_CASE("co-located start collides on the first post-state") {
  TrialConfig c = short_trial();
  ScriptedPolicy h({Action::TurnRight});
  ScriptedPolicy r({Action::TurnLeft});
  c.world.car.width = 4.0;  // adjacent lane centres are 4 m apart: touching, not overlapping
  const TrialResult res = run_trial(c, h, r);
  CHECK(res.outcome.collision);
  CHECK(res.outcome.ticks == 1);
  CHECK(res.log.ticks.size() == 2);
  CHECK(res.log.ticks[0].r_R == kCollisionReward);
}

TEST_CASE("disallowed actions are sanitised to Stay") {
  TrialConfig c = short_trial();
  c.world.car.width = 4.0;  // a centred car already touches both edges
  ScriptedPolicy h({Action::TurnLeft, Action::TurnLeft});
  ScriptedPolicy r({Action::TurnRight});
  const TrialResult res = run_trial(c, h, r);
  CHECK(res.log.ticks[0].human_action == Action::Stay);
  CHECK(res.log.ticks[0].robot_action == Action::Stay);
  CHECK_FALSE(replay(res.log).divergence_tick.has_value());
}

TEST_CASE("policy exceptions abort the trial") {
  TrialConfig c = short_trial();
  ThrowingPolicy h;
  ConstantVelocityPolicy r;
  const TrialResult res = run_trial(c, h, r);
  CHECK(res.outcome.aborted);
  CHECK(res.log.aborted);
  CHECK(res.log.error == "controller lost");
  CHECK(res.log.ticks.size() == 3);
  CHECK_FALSE(res.outcome.merged_human);

  std::stringstream io;
  write_trial_log(io, res.log);
  const TrialLog back = read_trial_log(io);
  CHECK(back.aborted);
  CHECK(back.error == "controller lost");
}

TEST_CASE("merge time, final-entry convention") {
  // Robot goal lane is 0.
  CHECK(compute_merge_time(lane_log(lanes(50, 0, 0, 0)), Side::Robot) == 0.0);
  const auto t30 = compute_merge_time(lane_log(lanes(50, 1, 30, 0)), Side::Robot);
  REQUIRE(t30);
  CHECK(*t30 == doctest::Approx(6.0));
  std::vector<int> dip = lanes(60, 1, 40, 0);
  for (std::size_t i = 10; i < 15; ++i) dip[i] = 0;
  const auto t40 = compute_merge_time(lane_log(dip), Side::Robot);
  REQUIRE(t40);
  CHECK(*t40 == doctest::Approx(8.0));
  CHECK_FALSE(compute_merge_time(lane_log(lanes(50, 1, 0, 1)), Side::Robot));
  CHECK_FALSE(compute_merge_time(TrialLog{}, Side::Robot));
}

TEST_CASE("merge time ignores a colliding final state") {
  TrialLog log = lane_log(lanes(10, 1, 9, 0));
  log.ticks.back().human = log.ticks.back().robot;  // collision in the last state
  CHECK_FALSE(compute_merge_time(log, Side::Robot));
  TrialLog before = lane_log(lanes(10, 1, 5, 0));
  before.ticks.back().human = before.ticks.back().robot;
  CHECK(*compute_merge_time(before, Side::Robot) == doctest::Approx(1.0));
}

TEST_CASE("planner trial: outcome matches the log and replays bit-exactly") {
  TrialConfig c = short_trial();
  c.planner.alpha = 0.6;
  c.human_model = parse_human_model("cooperative:0.5");
  auto h = make_human_policy(c);
  auto r = make_robot_policy(c);
  const TrialResult res = run_trial(c, *h, *r);

  double rh = 0.0, rr = 0.0;
  for (const TickRecord& t : res.log.ticks) {
    if (!t.robot_action) continue;
    rh += t.r_H;
    rr += t.r_R;
    CHECK(t.robot_planner.has_value());
    CHECK(t.human_planner.has_value());
  }
  CHECK(res.outcome.total_r_H == rh);
  CHECK(res.outcome.total_r_R == rr);
  for (std::size_t i = 0; i < res.log.ticks.size(); ++i) CHECK(res.log.ticks[i].tick == static_cast<std::int64_t>(i));

  const ReplayResult rep = replay(res.log);
  CHECK_FALSE(rep.divergence_tick.has_value());
  CHECK(rep.states.size() == res.log.ticks.size());

  // Same seeds, same trial.
  auto h2 = make_human_policy(c);
  auto r2 = make_robot_policy(c);
  const TrialResult again = run_trial(c, *h2, *r2);
  std::stringstream a, b;
  write_trial_log(a, res.log);
  write_trial_log(b, again.log);
  CHECK(a.str() == b.str());
}

TEST_CASE("replay reports tampering and handles an empty log") {
  TrialConfig c = short_trial();
  ConstantVelocityPolicy h, r;
  TrialResult res = run_trial(c, h, r);
  res.log.ticks[7].robot.y += 1e-12;
  const ReplayResult rep = replay(res.log);
  REQUIRE(rep.divergence_tick.has_value());
  CHECK(*rep.divergence_tick == 7);
  CHECK(replay(TrialLog{}).states.empty());
}

TEST_CASE("JSON Lines round trip is exact") {
  TrialConfig c = short_trial();
  c.v0_robot = 13.3817263512;
  c.planner.alpha = 0.2;
  c.human_model = parse_human_model("cooperative:0.5");
  auto h = make_human_policy(c);
  auto r = make_robot_policy(c);
  const TrialResult res = run_trial(c, *h, *r);

  std::stringstream io;
  write_trial_log(io, res.log);
  const std::string text = io.str();
  const TrialLog back = read_trial_log(io);
  REQUIRE(back.ticks.size() == res.log.ticks.size());
  for (std::size_t i = 0; i < back.ticks.size(); ++i) {
    CHECK(back.ticks[i].human == res.log.ticks[i].human);
    CHECK(back.ticks[i].robot == res.log.ticks[i].robot);
    CHECK(back.ticks[i].human_action == res.log.ticks[i].human_action);
    CHECK(back.ticks[i].r_H == res.log.ticks[i].r_H);
  }
  CHECK(back.config.v0_robot == c.v0_robot);
  CHECK(back.config.human_model == c.human_model);
  CHECK_FALSE(replay(back).divergence_tick.has_value());

  std::stringstream again;
  write_trial_log(again, back);
  CHECK(again.str() == text);
  CHECK(text.find("wall_time_s") == std::string::npos);
  CHECK(text.rfind("{\"config\"", 0) == 0);
}

TEST_CASE("malformed logs are rejected") {
  std::stringstream empty;
  CHECK_THROWS(read_trial_log(empty));
  std::stringstream no_header("{\"tick\":0}\n");
  CHECK_THROWS(read_trial_log(no_header));
}

TEST_CASE("mailbox: latest value wins, empty means Stay") {
  auto box = std::make_shared<ActionMailbox>();
  RemotePolicy p(box);
  const WorldState s{};
  CHECK(p.decide(s, Side::Human) == Action::Stay);
  box->latch(Action::TurnLeft);
  box->latch(Action::Accelerate);
  CHECK(p.decide(s, Side::Human) == Action::Accelerate);
  CHECK(p.decide(s, Side::Human) == Action::Stay);
  box->latch(Action::Decelerate);
  box->clear();
  CHECK(p.decide(s, Side::Human) == Action::Stay);
}

TEST_CASE("human policy factories") {
  TrialConfig c = short_trial();
  c.planner.alpha = 0.8;
  c.human_model = parse_human_model("cooperative:0.3");
  CHECK(human_planner_config(c).alpha == doctest::Approx(0.7));
  c.human_model = parse_human_model("selfish");
  CHECK(human_planner_config(c).alpha == 0.0);
  c.human_model = parse_human_model("remote");
  CHECK_THROWS_AS(make_human_policy(c), std::invalid_argument);
  CHECK(make_human_policy(c, std::make_shared<ActionMailbox>()) != nullptr);
}
