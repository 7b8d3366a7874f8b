#include "coopmerge/protocol.hpp"

#include <algorithm>
#include <array>

namespace coopmerge::protocol {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<Kind, std::string_view>, 7> kKinds = {{
    {Kind::Hello, "hello"},
    {Kind::TrialStart, "trial_start"},
    {Kind::Tick, "tick"},
    {Kind::Action, "action"},
    {Kind::TrialEnd, "trial_end"},
    {Kind::Questionnaire, "questionnaire"},
    {Kind::Bye, "bye"},
}};

int scale_answer(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw ProtocolError(std::string("questionnaire: missing ") + key);
  if (!it->is_number_integer()) throw ProtocolError(std::string("questionnaire: ") + key + " must be -1, 0 or 1");
  const auto v = it->get<std::int64_t>();
  if (v < -1 || v > 1) throw ProtocolError(std::string("questionnaire: ") + key + " must be -1, 0 or 1");
  return static_cast<int>(v);
}

std::optional<std::int64_t> optional_int(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_number_integer()) throw ProtocolError(std::string(key) + " must be an integer");
  return it->get<std::int64_t>();
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

std::string_view to_string(Kind kind) {
  for (const auto& [k, name] : kKinds) {
    if (k == kind) return name;
  }
  return "bye";
}

std::optional<Kind> parse_kind(std::string_view name) {
  for (const auto& [k, n] : kKinds) {
    if (n == name) return k;
  }
  return std::nullopt;
}

bool sent_by_client(Kind kind) { return kind == Kind::Action || kind == Kind::Questionnaire; }

ClientMessage parse_client_message(std::string_view text) {
  json j = json::parse(text.begin(), text.end(), nullptr, false);
  if (j.is_discarded()) throw ProtocolError("message is not valid JSON");
  if (!j.is_object()) throw ProtocolError("message must be a JSON object");
  const auto kind_it = j.find("kind");
  if (kind_it == j.end() || !kind_it->is_string()) throw ProtocolError("message has no kind");
  const std::string name = kind_it->get<std::string>();
  const auto kind = parse_kind(name);
  if (!kind) throw ProtocolError("unknown kind '" + name + "'");
  if (!sent_by_client(*kind)) throw ProtocolError("kind '" + name + "' is sent by the server only");

  if (*kind == Kind::Action) {
    const auto a = j.find("action");
    if (a == j.end() || !a->is_string()) throw ProtocolError("action: missing action name");
    const auto action = parse_action(a->get<std::string>());
    if (!action) throw ProtocolError("action: unknown action '" + a->get<std::string>() + "'");
    return ActionMessage{optional_int(j, "tick_hint"), *action};
  }
  QuestionnaireMessage q;
  q.q1 = scale_answer(j, "q1");
  q.q2 = scale_answer(j, "q2");
  q.trial_index = optional_int(j, "trial_index");
  return q;
}

json hello(const std::string& session_id) {
  return {{"kind", "hello"}, {"protocol_version", kVersion}, {"session_id", session_id}};
}

json trial_start(const TrialInfo& info) {
  return {{"kind", "trial_start"},
          {"trial_index", info.trial_index},
          {"practice", info.practice},
          {"road_length", info.road_length},
          {"human_start_lane", info.human_start_lane},
          {"human_goal_lane", info.human_goal_lane},
          {"av_indicator_lane", info.av_indicator_lane},
          {"colors", {{"human", info.human_color}, {"robot", info.robot_color}}}};
}

json tick(const TrialConfig& cfg, std::int64_t tick, const WorldState& state) {
  auto car = [](const char* side, const CarState& c) { return json{{"side", side}, {"x", c.x}, {"y", c.y}, {"v", c.v}}; };
  const double front = state.human.y + cfg.world.car.length / 2.0;
  return {{"kind", "tick"},
          {"tick", tick},
          {"time_s", static_cast<double>(tick) * cfg.world.physics.dt},
          {"cars", json::array({car("human", state.human), car("robot", state.robot)})},
          {"distance_remaining_m", std::max(0.0, cfg.world.road.road_length - front)},
          {"av_indicator_lane", cfg.world.road.goal_lane_robot}};
}

json trial_end(std::int64_t trial_index, const TrialOutcome& o) {
  return {{"kind", "trial_end"},
          {"trial_index", trial_index},
          {"outcome",
           {{"merged_human", o.merged_human},
            {"merged_robot", o.merged_robot},
            {"merge_time_human", opt(o.merge_time_human)},
            {"merge_time_robot", opt(o.merge_time_robot)},
            {"collision", o.collision},
            {"total_r_H", o.total_r_H},
            {"total_r_R", o.total_r_R},
            {"ticks", o.ticks},
            {"aborted", o.aborted}}}};
}

json bye(const std::string& session_id, std::int64_t trials_completed) {
  return {{"kind", "bye"}, {"session_id", session_id}, {"trials_completed", trials_completed}};
}

json error(const std::string& message) { return {{"kind", "error"}, {"message", message}}; }

}  // namespace coopmerge::protocol
