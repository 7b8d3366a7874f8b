#pragma once

// Session wire protocol: one JSON object per web socket text frame.
//
//   server -> client: hello, trial_start, tick, trial_end, bye, error
//   client -> server: action, questionnaire

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>

#include <json.hpp>

#include "coopmerge/sim.hpp"

namespace coopmerge::protocol {

inline constexpr const char* kVersion = "1";

enum class Kind { Hello, TrialStart, Tick, Action, TrialEnd, Questionnaire, Bye };

std::string_view to_string(Kind kind);
std::optional<Kind> parse_kind(std::string_view name);
bool sent_by_client(Kind kind);

/// Malformed or unexpected client message. The server answers it with an
/// error object and otherwise ignores the message.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ActionMessage {
  std::optional<std::int64_t> tick_hint;
  Action action = Action::Stay;
};

struct QuestionnaireMessage {
  int q1 = 0;  // -1 no, 0 don't know / safe enough, 1 yes
  int q2 = 0;
  std::optional<std::int64_t> trial_index;
};

using ClientMessage = std::variant<ActionMessage, QuestionnaireMessage>;

/// Throws ProtocolError for anything that is not a well-formed client message.
ClientMessage parse_client_message(std::string_view text);

struct TrialInfo {
  std::int64_t trial_index = 0;
  bool practice = false;
  double road_length = 0.0;
  int human_start_lane = 0;
  int human_goal_lane = 1;
  int av_indicator_lane = 0;  // the robot's goal lane
  std::string human_color;
  std::string robot_color;
};

nlohmann::json hello(const std::string& session_id);
nlohmann::json trial_start(const TrialInfo& info);
nlohmann::json tick(const TrialConfig& cfg, std::int64_t tick, const WorldState& state);
nlohmann::json trial_end(std::int64_t trial_index, const TrialOutcome& outcome);
nlohmann::json bye(const std::string& session_id, std::int64_t trials_completed);
nlohmann::json error(const std::string& message);

}  // namespace coopmerge::protocol
