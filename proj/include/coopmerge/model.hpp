#pragma once

// Two-car, two-lane world model: state, discrete actions, dynamics, lane
// geometry, collision test and the per-step reward. Everything here is a
// pure function over value types.

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace coopmerge {

struct PhysicsParams {
  double dt = 0.2;      // s
  double accel = 2.0;   // m/s^2
  double v_lat = 3.0;   // m/s
  double v_max = 30.0;  // m/s
  double v_min = 0.0;   // m/s
};

struct RoadConfig {
  double lane_width = 4.0;
  int num_lanes = 2;
  double road_length = 200.0;
  int goal_lane_robot = 0;
  int goal_lane_human = 1;

  double width() const { return lane_width * num_lanes; }
};

struct CarGeometry {
  double length = 5.0;
  double width = 2.0;
};

/// Everything the dynamics and reward need besides the state itself.
struct World {
  PhysicsParams physics;
  RoadConfig road;
  CarGeometry car;
};

/// Throws std::invalid_argument naming the first violated parameter invariant.
void validate(const World& world);

struct CarState {
  double y = 0.0;  // longitudinal position of the car centre, m
  double x = 0.0;  // lateral position of the car centre, m
  double v = 0.0;  // longitudinal speed, m/s

  friend bool operator==(const CarState&, const CarState&) = default;
};

enum class Side : std::uint8_t { Human, Robot };

struct WorldState {
  CarState human;
  CarState robot;
  std::int64_t step = 0;

  const CarState& car(Side side) const { return side == Side::Human ? human : robot; }
  CarState& car(Side side) { return side == Side::Human ? human : robot; }

  friend bool operator==(const WorldState&, const WorldState&) = default;
};

enum class Action : std::uint8_t { Accelerate, Decelerate, Stay, TurnRight, TurnLeft };

inline constexpr std::size_t kNumActions = 5;
inline constexpr std::array<Action, kNumActions> kAllActions = {
    Action::Accelerate, Action::Decelerate, Action::Stay, Action::TurnRight, Action::TurnLeft};

struct JointAction {
  Action human = Action::Stay;
  Action robot = Action::Stay;

  Action of(Side side) const { return side == Side::Human ? human : robot; }

  friend bool operator==(const JointAction&, const JointAction&) = default;
};

inline constexpr std::size_t kNumJointActions = kNumActions * kNumActions;

/// Fixed enumeration order of joint actions: human-major, each side in
/// kAllActions order. Index i maps to (kAllActions[i / 5], kAllActions[i % 5]).
constexpr JointAction joint_action_at(std::size_t index) {
  return {kAllActions[index / kNumActions], kAllActions[index % kNumActions]};
}

std::string_view to_string(Action action);
std::optional<Action> parse_action(std::string_view name);
std::string_view to_string(Side side);

/// Bitset over the five actions, indexed by the enum value.
class ActionSet {
 public:
  constexpr ActionSet() = default;
  static constexpr ActionSet all() { return ActionSet(0x1f); }

  constexpr bool contains(Action a) const { return (bits_ >> static_cast<unsigned>(a)) & 1U; }
  constexpr void insert(Action a) { bits_ |= 1U << static_cast<unsigned>(a); }
  constexpr void erase(Action a) { bits_ &= ~(1U << static_cast<unsigned>(a)); }
  constexpr std::size_t size() const { return static_cast<std::size_t>(__builtin_popcount(bits_)); }

  friend constexpr bool operator==(ActionSet, ActionSet) = default;

 private:
  constexpr explicit ActionSet(unsigned bits) : bits_(bits) {}
  unsigned bits_ = 0;
};

struct LanePosition {
  int lane = 0;
  double sublane = 0.0;  // 0 at lane centre, 1 at lane edge
};

/// Centre line of a lane.
double lane_center(int lane, const RoadConfig& road);

/// TurnRight is unavailable once the car body touches the right road edge,
/// TurnLeft once it touches the left edge. Longitudinal actions are always
/// available.
ActionSet allowed_actions(const CarState& car, const World& world);

/// Velocity split while turning: lateral min(v, v_lat), longitudinal the rest
/// of the speed, so lateral^2 + longitudinal^2 = v^2.
struct TurnVelocity {
  double lateral = 0.0;
  double longitudinal = 0.0;
};
TurnVelocity turn_velocity(double v, const PhysicsParams& physics);

/// One simulation tick for one car. Throws std::invalid_argument when the
/// action is not in allowed_actions(car).
CarState step_car(const CarState& car, Action action, const World& world);

/// Both cars step simultaneously from the same pre-state.
WorldState transition(const WorldState& s, JointAction u, const World& world);

LanePosition lane_position(double x, const RoadConfig& road);

/// Axis-aligned footprint overlap with positive area. Touching edges do not collide.
bool check_collision(const WorldState& s, const CarGeometry& car);

inline constexpr double kCollisionReward = -10.0;
inline constexpr double kCenteringWeight = 0.3;

int goal_lane(Side side, const RoadConfig& road);

/// -10 on collision; gamma*exp(-sl) + (1 - gamma) in the goal lane; 0 otherwise.
double instantaneous_reward(const WorldState& s, Side agent, const World& world);

/// Either front bumper is past the end of the road, or the cars collide.
bool is_terminal(const WorldState& s, const World& world);

/// Speed and lateral bounds of a single car.
bool is_valid(const CarState& car, const World& world);

namespace detail {
// step_car without the allowed-action check; callers guarantee it.
CarState advance_car(const CarState& car, Action action, const World& world);
// Goal-lane part of the reward, ignoring collisions.
double lane_reward(double x, int goal, const RoadConfig& road);
}  // namespace detail

}  // namespace coopmerge
