#include "coopmerge/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace coopmerge {

namespace {

// Tolerance for "the body touches the edge" after a clamped turn.
constexpr double kEdgeEps = 1e-9;

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

void validate(const World& w) {
  const auto& p = w.physics;
  require(p.dt > 0.0, "physics.dt must be positive");
  require(p.accel > 0.0, "physics.accel must be positive");
  require(p.v_lat >= 0.0 && p.v_lat <= p.v_max, "physics.v_lat must lie in [0, v_max]");
  require(p.v_min >= 0.0 && p.v_min <= p.v_max, "physics.v_min must lie in [0, v_max]");
  const auto& r = w.road;
  require(r.num_lanes == 2, "road.num_lanes must be 2");
  require(r.lane_width > 0.0, "road.lane_width must be positive");
  require(r.road_length > 0.0, "road.road_length must be positive");
  require(r.goal_lane_robot == 0 || r.goal_lane_robot == 1, "road.goal_lane_robot must be 0 or 1");
  require(r.goal_lane_human == 0 || r.goal_lane_human == 1, "road.goal_lane_human must be 0 or 1");
  require(w.car.length > 0.0, "car.length must be positive");
  require(w.car.width > 0.0 && w.car.width <= r.lane_width, "car.width must lie in (0, lane_width]");
}

std::string_view to_string(Action action) {
  switch (action) {
    case Action::Accelerate: return "accelerate";
    case Action::Decelerate: return "decelerate";
    case Action::Stay: return "stay";
    case Action::TurnRight: return "turn_right";
    case Action::TurnLeft: return "turn_left";
  }
  return "stay";
}

std::optional<Action> parse_action(std::string_view name) {
  for (Action a : kAllActions) {
    if (to_string(a) == name) return a;
  }
  return std::nullopt;
}

std::string_view to_string(Side side) { return side == Side::Human ? "human" : "robot"; }

double lane_center(int lane, const RoadConfig& road) { return (lane + 0.5) * road.lane_width; }

ActionSet allowed_actions(const CarState& car, const World& world) {
  ActionSet set = ActionSet::all();
  const double half = world.car.width / 2.0;
  if (car.x + half >= world.road.width() - kEdgeEps) set.erase(Action::TurnRight);
  if (car.x - half <= kEdgeEps) set.erase(Action::TurnLeft);
  return set;
}

CarState step_car(const CarState& car, Action action, const World& world) {
  if (!allowed_actions(car, world).contains(action)) {
    throw std::invalid_argument("step_car: action '" + std::string(to_string(action)) +
                                "' is not allowed in this state");
  }
  return detail::advance_car(car, action, world);
}

TurnVelocity turn_velocity(double v, const PhysicsParams& physics) {
  const double lateral = std::min(v, physics.v_lat);
  return {lateral, std::sqrt(v * v - lateral * lateral)};
}

CarState detail::advance_car(const CarState& car, Action action, const World& world) {
  const auto& p = world.physics;
  CarState next = car;
  switch (action) {
    case Action::Accelerate:
    case Action::Decelerate:
    case Action::Stay: {
      double v = car.v;
      if (action == Action::Accelerate) v += p.accel * p.dt;
      if (action == Action::Decelerate) v -= p.accel * p.dt;
      next.v = std::clamp(v, p.v_min, p.v_max);
      next.y = car.y + car.v * p.dt;
      break;
    }
    case Action::TurnRight:
    case Action::TurnLeft: {
      const TurnVelocity tv = turn_velocity(car.v, p);
      const double half = world.car.width / 2.0;
      const double dx = action == Action::TurnRight ? tv.lateral * p.dt : -tv.lateral * p.dt;
      next.y = car.y + tv.longitudinal * p.dt;
      next.x = std::clamp(car.x + dx, half, world.road.width() - half);
      break;
    }
  }
  return next;
}

WorldState transition(const WorldState& s, JointAction u, const World& world) {
  WorldState next;
  next.human = step_car(s.human, u.human, world);
  next.robot = step_car(s.robot, u.robot, world);
  next.step = s.step + 1;
  return next;
}

LanePosition lane_position(double x, const RoadConfig& road) {
  if (!(x >= 0.0 && x <= road.width())) {
    throw std::out_of_range("lane_position: x outside the road");
  }
  LanePosition pos;
  pos.lane = std::min(static_cast<int>(std::floor(x / road.lane_width)), road.num_lanes - 1);
  const double offset = std::abs(x - lane_center(pos.lane, road));
  pos.sublane = std::clamp(offset / (road.lane_width / 2.0), 0.0, 1.0);
  return pos;
}

bool check_collision(const WorldState& s, const CarGeometry& car) {
  return std::abs(s.human.x - s.robot.x) < car.width && std::abs(s.human.y - s.robot.y) < car.length;
}

int goal_lane(Side side, const RoadConfig& road) {
  return side == Side::Human ? road.goal_lane_human : road.goal_lane_robot;
}

double detail::lane_reward(double x, int goal, const RoadConfig& road) {
  const LanePosition pos = lane_position(x, road);
  if (pos.lane != goal) return 0.0;
  return kCenteringWeight * std::exp(-pos.sublane) + (1.0 - kCenteringWeight);
}

double instantaneous_reward(const WorldState& s, Side agent, const World& world) {
  if (check_collision(s, world.car)) return kCollisionReward;
  return detail::lane_reward(s.car(agent).x, goal_lane(agent, world.road), world.road);
}

bool is_terminal(const WorldState& s, const World& world) {
  const double half = world.car.length / 2.0;
  const double end = world.road.road_length;
  return s.human.y + half > end || s.robot.y + half > end || check_collision(s, world.car);
}

bool is_valid(const CarState& car, const World& world) {
  const auto& p = world.physics;
  return car.v >= p.v_min && car.v <= p.v_max && car.x >= 0.0 && car.x <= world.road.width() &&
         std::isfinite(car.y);
}

}  // namespace coopmerge
