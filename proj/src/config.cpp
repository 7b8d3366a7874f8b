#include "coopmerge/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace coopmerge {

using nlohmann::json;

namespace {

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) out = it->get<T>();
}

}  // namespace

void to_json(json& j, const PhysicsParams& p) {
  j = json{{"dt", p.dt}, {"accel", p.accel}, {"v_lat", p.v_lat}, {"v_max", p.v_max}, {"v_min", p.v_min}};
}

void from_json(const json& j, PhysicsParams& p) {
  read_opt(j, "dt", p.dt);
  read_opt(j, "accel", p.accel);
  read_opt(j, "v_lat", p.v_lat);
  read_opt(j, "v_max", p.v_max);
  read_opt(j, "v_min", p.v_min);
}

void to_json(json& j, const RoadConfig& r) {
  j = json{{"lane_width", r.lane_width},
           {"num_lanes", r.num_lanes},
           {"road_length", r.road_length},
           {"goal_lane_robot", r.goal_lane_robot},
           {"goal_lane_human", r.goal_lane_human}};
}

void from_json(const json& j, RoadConfig& r) {
  read_opt(j, "lane_width", r.lane_width);
  read_opt(j, "num_lanes", r.num_lanes);
  read_opt(j, "road_length", r.road_length);
  read_opt(j, "goal_lane_robot", r.goal_lane_robot);
  read_opt(j, "goal_lane_human", r.goal_lane_human);
}

void to_json(json& j, const CarGeometry& c) { j = json{{"length", c.length}, {"width", c.width}}; }

void from_json(const json& j, CarGeometry& c) {
  read_opt(j, "length", c.length);
  read_opt(j, "width", c.width);
}

void to_json(json& j, const World& w) { j = json{{"physics", w.physics}, {"road", w.road}, {"car", w.car}}; }

void from_json(const json& j, World& w) {
  read_opt(j, "physics", w.physics);
  read_opt(j, "road", w.road);
  read_opt(j, "car", w.car);
}

void to_json(json& j, const Quantization& q) { j = json{{"dy", q.dy}, {"dx", q.dx}, {"dv", q.dv}}; }

void from_json(const json& j, Quantization& q) {
  read_opt(j, "dy", q.dy);
  read_opt(j, "dx", q.dx);
  read_opt(j, "dv", q.dv);
}

void to_json(json& j, const PlannerConfig& c) {
  j = json{{"alpha", c.alpha},
           {"horizon", c.horizon},
           {"planner_dt", c.planner_dt},
           {"sim_dt", c.sim_dt},
           // JSON has no infinity; null stands for "no wall-clock limit".
           {"time_budget", std::isfinite(c.time_budget) ? json(c.time_budget) : json(nullptr)},
           {"rng_seed", c.rng_seed},
           {"quantization", c.quantization},
           {"max_expansions", c.max_expansions},
           {"prune", c.prune}};
}

void from_json(const json& j, PlannerConfig& c) {
  read_opt(j, "alpha", c.alpha);
  read_opt(j, "horizon", c.horizon);
  read_opt(j, "planner_dt", c.planner_dt);
  read_opt(j, "sim_dt", c.sim_dt);
  if (auto it = j.find("time_budget"); it != j.end()) {
    c.time_budget = it->is_null() ? std::numeric_limits<double>::infinity() : it->get<double>();
  }
  read_opt(j, "rng_seed", c.rng_seed);
  read_opt(j, "quantization", c.quantization);
  read_opt(j, "max_expansions", c.max_expansions);
  read_opt(j, "prune", c.prune);
}

void to_json(json& j, const CarState& c) { j = json{{"y", c.y}, {"x", c.x}, {"v", c.v}}; }

void from_json(const json& j, CarState& c) {
  c.y = j.at("y").get<double>();
  c.x = j.at("x").get<double>();
  c.v = j.at("v").get<double>();
}

void to_json(json& j, const SearchStats& s) {
  j = json{{"nodes_expanded", s.nodes_expanded},
           {"nodes_generated", s.nodes_generated},
           {"nodes_pruned", s.nodes_pruned},
           {"duplicates", s.duplicates},
           {"max_depth", s.max_depth},
           {"complete", s.complete},
           {"wall_time_s", s.wall_time_s}};
}

ModelConfig parse_model_config(const json& j) {
  ModelConfig cfg;
  from_json(j, cfg.world);
  read_opt(j, "planner", cfg.planner);
  if (!j.contains("planner") || !j["planner"].contains("sim_dt")) cfg.planner.sim_dt = cfg.world.physics.dt;
  validate(cfg.world);
  validate(cfg.planner, cfg.world);
  return cfg;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return json::parse(in);
}

ModelConfig load_model_config(const std::filesystem::path& path) { return parse_model_config(read_json_file(path)); }

}  // namespace coopmerge
