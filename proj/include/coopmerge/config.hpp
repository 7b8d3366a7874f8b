#pragma once

// JSON mapping for the world and planner parameters. Missing fields take
// their defaults; unknown fields are ignored.
//
//   {
//     "physics": {"dt", "accel", "v_lat", "v_max", "v_min"},
//     "road":    {"lane_width", "num_lanes", "road_length", "goal_lane_robot", "goal_lane_human"},
//     "car":     {"length", "width"},
//     "planner": {"alpha", "horizon", "planner_dt", "sim_dt", "time_budget", "rng_seed",
//                 "quantization": {"dy", "dx", "dv"}, "max_expansions"}
//   }

#include <filesystem>

#include <json.hpp>

#include "coopmerge/model.hpp"
#include "coopmerge/planner.hpp"

namespace coopmerge {

void to_json(nlohmann::json& j, const PhysicsParams& p);
void from_json(const nlohmann::json& j, PhysicsParams& p);
void to_json(nlohmann::json& j, const RoadConfig& r);
void from_json(const nlohmann::json& j, RoadConfig& r);
void to_json(nlohmann::json& j, const CarGeometry& c);
void from_json(const nlohmann::json& j, CarGeometry& c);
void to_json(nlohmann::json& j, const World& w);
void from_json(const nlohmann::json& j, World& w);
void to_json(nlohmann::json& j, const Quantization& q);
void from_json(const nlohmann::json& j, Quantization& q);
void to_json(nlohmann::json& j, const PlannerConfig& c);
void from_json(const nlohmann::json& j, PlannerConfig& c);
void to_json(nlohmann::json& j, const CarState& c);
void from_json(const nlohmann::json& j, CarState& c);
void to_json(nlohmann::json& j, const SearchStats& s);

struct ModelConfig {
  World world;
  PlannerConfig planner;
};

/// Reads world + planner parameters and validates them.
ModelConfig load_model_config(const std::filesystem::path& path);
ModelConfig parse_model_config(const nlohmann::json& j);

nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace coopmerge
