#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "forcetune/bo.hpp"
#include "forcetune/controller.hpp"
#include "forcetune/errors.hpp"
#include "forcetune/math.hpp"
#include "forcetune/plant.hpp"
#include "forcetune/toolpath.hpp"
#include "forcetune/transfer.hpp"

namespace forcetune {

using json = nlohmann::json;

// 20 mm square contour at 100 mm/s, the default print geometry.
inline constexpr const char* kDefaultToolpath =
    "G1 X20 Y0 F6000\n"
    "G1 X20 Y20\n"
    "G1 X0 Y20\n"
    "G1 X0 Y0\n";

namespace detail {

inline void require_known_keys(const json& j, const std::set<std::string>& known,
                               const std::string& scope) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.contains(it.key())) {
      throw ConfigError("config: unknown key '" + scope + it.key() + "'");
    }
  }
}

inline double get_number(const json& j, const std::string& key, double fallback,
                         const std::string& scope) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) throw ConfigError("config: '" + scope + key + "' must be a number");
  return j[key].get<double>();
}

inline std::string get_string(const json& j, const std::string& key, const std::string& fallback,
                              const std::string& scope) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_string()) throw ConfigError("config: '" + scope + key + "' must be a string");
  return j[key].get<std::string>();
}

}  // namespace detail

struct ExperimentConfig {
  std::string mode = "single";  // single | tl | compare
  std::vector<double> ref_forces_n = {0.3};
  double window_s = 10.0;
  double total_s = 600.0;
  double xi = 1e-3;
  double settle_fraction = 0.1;
  std::uint64_t master_seed = 1;
  int runs = 1;
  std::vector<std::uint64_t> seeds;  // explicit list wins over master_seed/runs
  int workers = 1;

  PlantParams plant;
  double tau_fast_s = 0.02;
  double tau_slow_s = 0.5;
  double u_max_mm_s = 25.0;
  std::string u_ff_mode = "steady_state";  // or "manual"
  double u_ff_mm_s = 0.0;

  SearchSpace bounds = SearchSpace::controller_gains();
  CornerDipConfig disturbance;
  std::string toolpath_file;  // empty = built-in square
  std::optional<ControllerGains> initial_gains;
  double force_lower_n = 0.05;  // augmented-space task bounds
  double force_upper_n = 0.5;

  GpFitSettings gp_fit;
  AcquisitionSettings acquisition;

  static ExperimentConfig from_json(const json& j);
  static ExperimentConfig load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path.string() + "'");
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw ConfigError("config: invalid JSON in '" + path.string() + "': " + e.what());
    }
    return from_json(j);
  }

  json to_json() const;

  void validate() const {
    if (mode != "single" && mode != "tl" && mode != "compare") {
      throw ConfigError("config: 'mode' must be single, tl, or compare");
    }
    if (ref_forces_n.empty()) throw ConfigError("config: 'ref_force_n' must not be empty");
    for (double r : ref_forces_n) {
      if (!(r > 0.0)) throw ConfigError("config: 'ref_force_n' entries must be > 0");
    }
    if (!(window_s > 0.0)) throw ConfigError("config: 'window_s' must be > 0");
    if (!(total_s >= window_s)) throw ConfigError("config: 'total_s' must be >= window_s");
    if (!(xi >= 0.0)) throw ConfigError("config: 'xi' must be >= 0");
    if (!(settle_fraction >= 0.0 && settle_fraction < 1.0)) {
      throw ConfigError("config: 'settle_fraction' must be in [0,1)");
    }
    if (runs < 1) throw ConfigError("config: 'runs' must be >= 1");
    if (workers < 1) throw ConfigError("config: 'workers' must be >= 1");
    try {
      plant.validate();
      bounds.validate();
      ControllerConfig{tau_fast_s, tau_slow_s, u_max_mm_s, 0.0}.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    if (bounds.dim() != 4) throw ConfigError("config: 'bounds' must have 4 dimensions");
    if (u_ff_mode != "steady_state" && u_ff_mode != "manual") {
      throw ConfigError("config: 'controller.u_ff_mode' must be steady_state or manual");
    }
    if (!(force_lower_n > 0.0 && force_lower_n < force_upper_n)) {
      throw ConfigError("config: invalid 'force_bounds_n'");
    }
    if (initial_gains) {
      Eigen::Vector4d g(initial_gains->kp, initial_gains->ki, initial_gains->kd,
                        initial_gains->kdd);
      if (!bounds.contains(g)) throw ConfigError("config: 'initial_gains' outside 'bounds'");
    }
    if (!toolpath_file.empty() && !std::filesystem::exists(toolpath_file)) {
      throw ConfigError("config: toolpath file '" + toolpath_file + "' does not exist");
    }
  }

  std::vector<std::uint64_t> resolved_seeds() const {
    if (!seeds.empty()) return seeds;
    std::vector<std::uint64_t> out(runs);
    for (int i = 0; i < runs; ++i) out[i] = derive_seed(master_seed, static_cast<std::uint64_t>(i));
    return out;
  }

  // Feedforward drive speed for a reference force under the current mode.
  double u_ff_for(double ref_force_n) const {
    if (u_ff_mode == "manual") return u_ff_mm_s;
    return std::min(plant.drive_for_force(ref_force_n), u_max_mm_s);
  }

  ControllerConfig controller_for(double ref_force_n) const {
    return ControllerConfig{tau_fast_s, tau_slow_s, u_max_mm_s, u_ff_for(ref_force_n)};
  }

  Toolpath make_toolpath() const {
    if (toolpath_file.empty()) return parse_toolpath(kDefaultToolpath);
    std::ifstream in(toolpath_file);
    if (!in) throw ConfigError("config: cannot open toolpath file '" + toolpath_file + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_toolpath(buffer.str());
  }

  DisturbanceSchedule make_schedule() const {
    Toolpath tp = make_toolpath();
    if (tp.empty()) return DisturbanceSchedule{};
    return schedule_from_toolpath(tp, disturbance);
  }

  ContinuousBoConfig bo_config_for(double ref_force_n) const {
    ContinuousBoConfig c;
    c.ref_force_n = ref_force_n;
    c.window_s = window_s;
    c.total_s = total_s;
    c.xi = xi;
    c.settle_fraction = settle_fraction;
    c.space = bounds;
    c.initial_gains = initial_gains;
    c.fit = gp_fit;
    c.acquisition = acquisition;
    return c;
  }

  AugmentedSpace augmented_space() const {
    AugmentedSpace s;
    s.gains = bounds;
    s.force_lower_n = force_lower_n;
    s.force_upper_n = force_upper_n;
    return s;
  }
};

inline ExperimentConfig ExperimentConfig::from_json(const json& j) {
  using detail::get_number;
  using detail::get_string;
  using detail::require_known_keys;

  if (!j.is_object()) throw ConfigError("config: top level must be a JSON object");
  require_known_keys(j, {"mode", "ref_force_n", "window_s", "total_s", "xi", "settle_fraction",
                         "master_seed", "runs", "seeds", "workers", "plant", "controller",
                         "bounds", "disturbance", "toolpath_file", "initial_gains",
                         "force_bounds_n", "gp", "acquisition"},
                     "");

  ExperimentConfig c;
  c.mode = get_string(j, "mode", c.mode, "");
  if (j.contains("ref_force_n")) {
    const auto& r = j["ref_force_n"];
    if (r.is_number()) {
      c.ref_forces_n = {r.get<double>()};
    } else if (r.is_array() && !r.empty()) {
      c.ref_forces_n.clear();
      for (const auto& v : r) {
        if (!v.is_number()) throw ConfigError("config: 'ref_force_n' entries must be numbers");
        c.ref_forces_n.push_back(v.get<double>());
      }
    } else {
      throw ConfigError("config: 'ref_force_n' must be a number or non-empty array");
    }
  }
  c.window_s = get_number(j, "window_s", c.window_s, "");
  c.total_s = get_number(j, "total_s", c.total_s, "");
  c.xi = get_number(j, "xi", c.xi, "");
  c.settle_fraction = get_number(j, "settle_fraction", c.settle_fraction, "");
  if (j.contains("master_seed")) {
    if (!j["master_seed"].is_number_unsigned() && !j["master_seed"].is_number_integer()) {
      throw ConfigError("config: 'master_seed' must be a non-negative integer");
    }
    c.master_seed = j["master_seed"].get<std::uint64_t>();
  }
  c.runs = static_cast<int>(get_number(j, "runs", c.runs, ""));
  c.workers = static_cast<int>(get_number(j, "workers", c.workers, ""));
  if (j.contains("seeds")) {
    if (!j["seeds"].is_array()) throw ConfigError("config: 'seeds' must be an array");
    for (const auto& s : j["seeds"]) {
      if (!s.is_number_integer() && !s.is_number_unsigned()) {
        throw ConfigError("config: 'seeds' entries must be integers");
      }
      c.seeds.push_back(s.get<std::uint64_t>());
    }
  }

  if (j.contains("plant")) {
    const auto& p = j["plant"];
    if (!p.is_object()) throw ConfigError("config: 'plant' must be an object");
    require_known_keys(p, {"time_constant_s", "gain_coeff", "flow_exponent", "dead_time_s",
                           "force_saturation_n", "noise_std_n", "sample_period_s"},
                       "plant.");
    c.plant.time_constant_s = get_number(p, "time_constant_s", c.plant.time_constant_s, "plant.");
    c.plant.gain_coeff = get_number(p, "gain_coeff", c.plant.gain_coeff, "plant.");
    c.plant.flow_exponent = get_number(p, "flow_exponent", c.plant.flow_exponent, "plant.");
    c.plant.dead_time_s = get_number(p, "dead_time_s", c.plant.dead_time_s, "plant.");
    c.plant.force_saturation_n =
        get_number(p, "force_saturation_n", c.plant.force_saturation_n, "plant.");
    c.plant.noise_std_n = get_number(p, "noise_std_n", c.plant.noise_std_n, "plant.");
    c.plant.sample_period_s =
        get_number(p, "sample_period_s", c.plant.sample_period_s, "plant.");
  }

  if (j.contains("controller")) {
    const auto& k = j["controller"];
    if (!k.is_object()) throw ConfigError("config: 'controller' must be an object");
    require_known_keys(k, {"tau_fast_s", "tau_slow_s", "u_max_mm_s", "u_ff_mode", "u_ff_mm_s"},
                       "controller.");
    c.tau_fast_s = get_number(k, "tau_fast_s", c.tau_fast_s, "controller.");
    c.tau_slow_s = get_number(k, "tau_slow_s", c.tau_slow_s, "controller.");
    c.u_max_mm_s = get_number(k, "u_max_mm_s", c.u_max_mm_s, "controller.");
    c.u_ff_mode = get_string(k, "u_ff_mode", c.u_ff_mode, "controller.");
    c.u_ff_mm_s = get_number(k, "u_ff_mm_s", c.u_ff_mm_s, "controller.");
  }

  if (j.contains("bounds")) {
    const auto& b = j["bounds"];
    if (!b.is_object()) throw ConfigError("config: 'bounds' must be an object");
    require_known_keys(b, {"lower", "upper"}, "bounds.");
    auto read_vec = [&](const char* key) {
      if (!b.contains(key) || !b[key].is_array() || b[key].size() != 4) {
        throw ConfigError(std::string("config: 'bounds.") + key + "' must be a 4-element array");
      }
      std::vector<double> v;
      for (const auto& x : b[key]) {
        if (!x.is_number()) throw ConfigError("config: 'bounds' entries must be numbers");
        v.push_back(x.get<double>());
      }
      return v;
    };
    c.bounds.lower = read_vec("lower");
    c.bounds.upper = read_vec("upper");
  }

  if (j.contains("disturbance")) {
    const auto& d = j["disturbance"];
    if (!d.is_object()) throw ConfigError("config: 'disturbance' must be an object");
    require_known_keys(d, {"angle_threshold_deg", "dip_magnitude", "dip_duration_s"},
                       "disturbance.");
    c.disturbance.angle_threshold_deg =
        get_number(d, "angle_threshold_deg", c.disturbance.angle_threshold_deg, "disturbance.");
    c.disturbance.dip_magnitude =
        get_number(d, "dip_magnitude", c.disturbance.dip_magnitude, "disturbance.");
    c.disturbance.dip_duration_s =
        get_number(d, "dip_duration_s", c.disturbance.dip_duration_s, "disturbance.");
  }

  c.toolpath_file = get_string(j, "toolpath_file", c.toolpath_file, "");

  if (j.contains("initial_gains") && !j["initial_gains"].is_null()) {
    const auto& g = j["initial_gains"];
    if (!g.is_array() || g.size() != 4) {
      throw ConfigError("config: 'initial_gains' must be a 4-element array");
    }
    ControllerGains gains;
    gains.kp = g[0].get<double>();
    gains.ki = g[1].get<double>();
    gains.kd = g[2].get<double>();
    gains.kdd = g[3].get<double>();
    c.initial_gains = gains;
  }

  if (j.contains("force_bounds_n")) {
    const auto& f = j["force_bounds_n"];
    if (!f.is_array() || f.size() != 2 || !f[0].is_number() || !f[1].is_number()) {
      throw ConfigError("config: 'force_bounds_n' must be a 2-element numeric array");
    }
    c.force_lower_n = f[0].get<double>();
    c.force_upper_n = f[1].get<double>();
  }

  if (j.contains("gp")) {
    const auto& g = j["gp"];
    if (!g.is_object()) throw ConfigError("config: 'gp' must be an object");
    require_known_keys(g, {"restarts", "max_iterations"}, "gp.");
    c.gp_fit.restarts = static_cast<int>(get_number(g, "restarts", c.gp_fit.restarts, "gp."));
    c.gp_fit.max_iterations =
        static_cast<int>(get_number(g, "max_iterations", c.gp_fit.max_iterations, "gp."));
  }

  if (j.contains("acquisition")) {
    const auto& a = j["acquisition"];
    if (!a.is_object()) throw ConfigError("config: 'acquisition' must be an object");
    require_known_keys(a, {"candidates", "refine_top", "refine_steps"}, "acquisition.");
    c.acquisition.candidates =
        static_cast<int>(get_number(a, "candidates", c.acquisition.candidates, "acquisition."));
    c.acquisition.refine_top =
        static_cast<int>(get_number(a, "refine_top", c.acquisition.refine_top, "acquisition."));
    c.acquisition.refine_steps = static_cast<int>(
        get_number(a, "refine_steps", c.acquisition.refine_steps, "acquisition."));
  }

  c.validate();
  return c;
}

// Canonical snapshot with every field materialized; hashed for provenance.
inline json ExperimentConfig::to_json() const {
  json j;
  j["mode"] = mode;
  j["ref_force_n"] = ref_forces_n;
  j["window_s"] = window_s;
  j["total_s"] = total_s;
  j["xi"] = xi;
  j["settle_fraction"] = settle_fraction;
  j["master_seed"] = master_seed;
  j["runs"] = runs;
  j["seeds"] = seeds;
  j["workers"] = workers;
  j["plant"] = {{"time_constant_s", plant.time_constant_s},
                {"gain_coeff", plant.gain_coeff},
                {"flow_exponent", plant.flow_exponent},
                {"dead_time_s", plant.dead_time_s},
                {"force_saturation_n", plant.force_saturation_n},
                {"noise_std_n", plant.noise_std_n},
                {"sample_period_s", plant.sample_period_s}};
  j["controller"] = {{"tau_fast_s", tau_fast_s},
                     {"tau_slow_s", tau_slow_s},
                     {"u_max_mm_s", u_max_mm_s},
                     {"u_ff_mode", u_ff_mode},
                     {"u_ff_mm_s", u_ff_mm_s}};
  j["bounds"] = {{"lower", bounds.lower}, {"upper", bounds.upper}};
  j["disturbance"] = {{"angle_threshold_deg", disturbance.angle_threshold_deg},
                      {"dip_magnitude", disturbance.dip_magnitude},
                      {"dip_duration_s", disturbance.dip_duration_s}};
  j["toolpath_file"] = toolpath_file;
  if (initial_gains) {
    j["initial_gains"] = {initial_gains->kp, initial_gains->ki, initial_gains->kd,
                          initial_gains->kdd};
  } else {
    j["initial_gains"] = nullptr;
  }
  j["force_bounds_n"] = {force_lower_n, force_upper_n};
  j["gp"] = {{"restarts", gp_fit.restarts}, {"max_iterations", gp_fit.max_iterations}};
  j["acquisition"] = {{"candidates", acquisition.candidates},
                      {"refine_top", acquisition.refine_top},
                      {"refine_steps", acquisition.refine_steps}};
  return j;
}

inline std::string config_hash_hex(const json& canonical) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(canonical.dump())));
  return buf;
}

}  // namespace forcetune
