#pragma once

#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vpp/evaluation.hpp"

namespace vpp {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Full parameter record for a benchmark run. Everything the trials depend
/// on lives here so a config file is a complete reproduction recipe.
struct RunConfig {
  int scenario = 3;
  std::vector<std::string> planners = {"combined", "global_only"};
  int trials = 20;
  std::uint64_t seed_base = 1000;
  bool export_final_map = false;  // write per-trial map snapshots next to the logs
  std::string out_dir;  // empty: $VIEWPLAN_OUT_DIR, then "."
  TrialParams base;     // planner_id and seed are filled per trial
};

namespace detail {

inline double parse_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("config: bad numeric value for key '" + key + "': " + v);
  }
  if (pos != v.size()) throw ConfigError("config: bad numeric value for key '" + key + "': " + v);
  return x;
}

inline int parse_int(const std::string& key, const std::string& v) {
  double x = parse_double(key, v);
  int i = static_cast<int>(x);
  if (static_cast<double>(i) != x) throw ConfigError("config: expected integer for '" + key + "'");
  return i;
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw ConfigError("config: bad integer value for key '" + key + "': " + v);
  }
}

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  std::size_t e = s.find_last_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Parses `key = value` lines ('#' starts a comment). Unknown keys are
/// rejected by name.
inline RunConfig parse_run_config(std::istream& is) {
  RunConfig cfg;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  auto d = [](double& slot) {
    return [&slot](const std::string& k, const std::string& v) {
      slot = detail::parse_double(k, v);
    };
  };
  auto i = [](int& slot) {
    return
        [&slot](const std::string& k, const std::string& v) { slot = detail::parse_int(k, v); };
  };

  double hfov_deg = cfg.base.camera.hfov * 180.0 / std::numbers::pi;
  double vfov_deg = cfg.base.camera.vfov * 180.0 / std::numbers::pi;

  std::map<std::string, Setter> keys;
  keys["scenario"] = i(cfg.base.scenario);
  keys["trials"] = i(cfg.trials);
  keys["seed_base"] = [&](const std::string& k, const std::string& v) {
    cfg.seed_base = detail::parse_u64(k, v);
  };
  keys["budget_m"] = d(cfg.base.budget);
  keys["max_steps"] = i(cfg.base.max_steps);
  keys["match_radius"] = d(cfg.base.match_radius);
  keys["out_dir"] = [&](const std::string&, const std::string& v) { cfg.out_dir = v; };
  keys["export_final_map"] = [&](const std::string& k, const std::string& v) {
    cfg.export_final_map = detail::parse_int(k, v) != 0;
  };
  keys["planners"] = [&](const std::string& k, const std::string& v) {
    cfg.planners.clear();
    std::istringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = detail::trim(item);
      if (item.empty()) continue;
      if (item != "combined" && item != "global_only") {
        throw ConfigError("config: unknown planner '" + item + "' for key '" + k +
                          "' (valid: combined, global_only)");
      }
      cfg.planners.push_back(item);
    }
  };
  keys["map.resolution"] = d(cfg.base.map.resolution);
  keys["map.hit_logodds"] = d(cfg.base.map.hit_logodds);
  keys["map.miss_logodds"] = d(cfg.base.map.miss_logodds);
  keys["map.roi_hit_logodds"] = d(cfg.base.map.roi_hit_logodds);
  keys["map.roi_miss_logodds"] = d(cfg.base.map.roi_miss_logodds);
  keys["map.clamp_min"] = d(cfg.base.map.clamp_min);
  keys["map.clamp_max"] = d(cfg.base.map.clamp_max);
  keys["map.roi_threshold"] = d(cfg.base.map.roi_threshold);
  keys["scene.occlusion_density"] = d(cfg.base.scene.occlusion_density);
  keys["scene.fruit_radius_min"] = d(cfg.base.scene.fruit_radius_min);
  keys["scene.fruit_radius_max"] = d(cfg.base.scene.fruit_radius_max);
  keys["scene.leaf_scale"] = d(cfg.base.scene.leaf_scale);
  keys["scene.ring_radius"] = d(cfg.base.scene.ring_radius);
  keys["scene.corner_offset"] = d(cfg.base.scene.corner_offset);
  keys["scene.row_gap"] = d(cfg.base.scene.row_gap);
  keys["scene.col_gap"] = d(cfg.base.scene.col_gap);
  keys["camera.width"] = i(cfg.base.camera.width);
  keys["camera.height"] = i(cfg.base.camera.height);
  keys["camera.hfov_deg"] = d(hfov_deg);
  keys["camera.vfov_deg"] = d(vfov_deg);
  keys["camera.min_range"] = d(cfg.base.camera.min_range);
  keys["camera.max_range"] = d(cfg.base.camera.max_range);
  keys["array.offset_x"] = d(cfg.base.array.offset.x());
  keys["array.offset_y"] = d(cfg.base.array.offset.y());
  keys["array.offset_z"] = d(cfg.base.array.offset.z());
  keys["detect.min_cluster_px"] = i(cfg.base.detect.min_cluster_px);
  keys["detect.match_min_frac"] = d(cfg.base.detect.match_min_frac);
  keys["mts.delta_thresh"] = d(cfg.base.mts.delta_thresh);
  keys["mts.step_length"] = d(cfg.base.mts.step_length);
  keys["mts.max_moves"] = i(cfg.base.mts.max_moves);
  keys["planner.alpha"] = d(cfg.base.planner.alpha);
  keys["planner.d_max"] = d(cfg.base.planner.d_max);
  keys["planner.n_vps"] = i(cfg.base.planner.n_vps);
  keys["planner.utility_thresh"] = d(cfg.base.planner.utility_thresh);
  keys["planner.sensor_range"] = d(cfg.base.planner.sensor_range);
  keys["planner.ig_rays_x"] = i(cfg.base.planner.ig_rays_x);
  keys["planner.ig_rays_y"] = i(cfg.base.planner.ig_rays_y);
  keys["planner.attempt_factor"] = i(cfg.base.planner.attempt_factor);

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: expected 'key = value' at line " + std::to_string(line_no));
    }
    std::string key = detail::trim(line.substr(0, eq));
    std::string value = detail::trim(line.substr(eq + 1));
    auto it = keys.find(key);
    if (it == keys.end()) {
      throw ConfigError("config: unknown key '" + key + "' at line " + std::to_string(line_no));
    }
    it->second(key, value);
  }

  cfg.base.camera.hfov = hfov_deg * std::numbers::pi / 180.0;
  cfg.base.camera.vfov = vfov_deg * std::numbers::pi / 180.0;
  if (cfg.trials < 1) throw ConfigError("config: trials must be >= 1");
  if (cfg.planners.empty()) throw ConfigError("config: planner list must not be empty");
  if (cfg.base.scenario < 1 || cfg.base.scenario > 3) {
    throw ConfigError("config: scenario must be 1, 2 or 3");
  }
  cfg.base.camera.validate();
  cfg.base.planner.validate();
  return cfg;
}

/// Canonical serialization; parsing it back reproduces the config.
inline std::string serialize_run_config(const RunConfig& cfg) {
  std::ostringstream os;
  char buf[160];
  auto put = [&](const char* key, double v) {
    std::snprintf(buf, sizeof(buf), "%s = %.17g\n", key, v);
    os << buf;
  };
  os << "scenario = " << cfg.base.scenario << "\n";
  os << "planners = ";
  for (std::size_t i = 0; i < cfg.planners.size(); ++i) {
    os << (i ? "," : "") << cfg.planners[i];
  }
  os << "\n";
  os << "trials = " << cfg.trials << "\n";
  os << "seed_base = " << cfg.seed_base << "\n";
  put("budget_m", cfg.base.budget);
  os << "max_steps = " << cfg.base.max_steps << "\n";
  put("match_radius", cfg.base.match_radius);
  os << "export_final_map = " << (cfg.export_final_map ? 1 : 0) << "\n";
  if (!cfg.out_dir.empty()) os << "out_dir = " << cfg.out_dir << "\n";
  put("map.resolution", cfg.base.map.resolution);
  put("map.hit_logodds", cfg.base.map.hit_logodds);
  put("map.miss_logodds", cfg.base.map.miss_logodds);
  put("map.roi_hit_logodds", cfg.base.map.roi_hit_logodds);
  put("map.roi_miss_logodds", cfg.base.map.roi_miss_logodds);
  put("map.clamp_min", cfg.base.map.clamp_min);
  put("map.clamp_max", cfg.base.map.clamp_max);
  put("map.roi_threshold", cfg.base.map.roi_threshold);
  put("scene.occlusion_density", cfg.base.scene.occlusion_density);
  put("scene.fruit_radius_min", cfg.base.scene.fruit_radius_min);
  put("scene.fruit_radius_max", cfg.base.scene.fruit_radius_max);
  put("scene.leaf_scale", cfg.base.scene.leaf_scale);
  put("scene.ring_radius", cfg.base.scene.ring_radius);
  put("scene.corner_offset", cfg.base.scene.corner_offset);
  put("scene.row_gap", cfg.base.scene.row_gap);
  put("scene.col_gap", cfg.base.scene.col_gap);
  os << "camera.width = " << cfg.base.camera.width << "\n";
  os << "camera.height = " << cfg.base.camera.height << "\n";
  put("camera.hfov_deg", cfg.base.camera.hfov * 180.0 / std::numbers::pi);
  put("camera.vfov_deg", cfg.base.camera.vfov * 180.0 / std::numbers::pi);
  put("camera.min_range", cfg.base.camera.min_range);
  put("camera.max_range", cfg.base.camera.max_range);
  put("array.offset_x", cfg.base.array.offset.x());
  put("array.offset_y", cfg.base.array.offset.y());
  put("array.offset_z", cfg.base.array.offset.z());
  os << "detect.min_cluster_px = " << cfg.base.detect.min_cluster_px << "\n";
  put("detect.match_min_frac", cfg.base.detect.match_min_frac);
  put("mts.delta_thresh", cfg.base.mts.delta_thresh);
  put("mts.step_length", cfg.base.mts.step_length);
  os << "mts.max_moves = " << cfg.base.mts.max_moves << "\n";
  put("planner.alpha", cfg.base.planner.alpha);
  put("planner.d_max", cfg.base.planner.d_max);
  os << "planner.n_vps = " << cfg.base.planner.n_vps << "\n";
  put("planner.utility_thresh", cfg.base.planner.utility_thresh);
  put("planner.sensor_range", cfg.base.planner.sensor_range);
  os << "planner.ig_rays_x = " << cfg.base.planner.ig_rays_x << "\n";
  os << "planner.ig_rays_y = " << cfg.base.planner.ig_rays_y << "\n";
  os << "planner.attempt_factor = " << cfg.base.planner.attempt_factor << "\n";
  return os.str();
}

}  // namespace vpp
