#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "forcetune/bo.hpp"
#include "forcetune/config.hpp"
#include "forcetune/errors.hpp"
#include "forcetune/transfer.hpp"
#include "forcetune/version.hpp"

namespace forcetune {

inline constexpr const char* kObservationsCsvHeader =
    "window,kp,ki,kd,kdd,ref_force_n,objective,best_so_far";

// Objective kinds recorded in summary files.
inline constexpr const char* kObjectiveRmse = "rmse_n";
inline constexpr const char* kObjectiveNormalized = "rmse_over_ref";

// 9 significant digits, fixed CSV number format.
inline std::string format_g9(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", value);
  return buf;
}

struct RunArtifact {
  TuningRun run;
  json config_snapshot;
  std::string config_hash;
  std::vector<std::string> source_labels;  // tl provenance
  std::string mode = "single";
};

inline std::string observations_csv_text(const TuningRun& run) {
  std::string out(kObservationsCsvHeader);
  out += "\n";
  for (std::size_t i = 0; i < run.observations.size(); ++i) {
    const Observation& o = run.observations[i];
    out += std::to_string(o.window_index);
    out += ",";
    out += format_g9(o.gains.kp) + "," + format_g9(o.gains.ki) + "," + format_g9(o.gains.kd) +
           "," + format_g9(o.gains.kdd) + ",";
    out += format_g9(run.reference_force_n) + ",";
    out += format_g9(o.objective) + ",";
    out += format_g9(run.best_so_far[i]);
    out += "\n";
  }
  return out;
}

inline void write_observations_csv(const std::filesystem::path& path, const TuningRun& run) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << observations_csv_text(run);
}

struct LoadedRun {
  std::vector<Observation> observations;
  std::vector<double> best_so_far;
  double ref_force_n = 0.0;
  std::optional<std::string> objective_kind;  // from the sibling summary, if any
  std::string label;
  std::filesystem::path path;

  double best_objective() const {
    return best_so_far.empty() ? std::numeric_limits<double>::quiet_NaN() : best_so_far.back();
  }
  double first_objective() const {
    return observations.empty() ? std::numeric_limits<double>::quiet_NaN()
                                : observations.front().objective;
  }
};

namespace detail {

inline double parse_csv_double(const std::string& field, const std::filesystem::path& path,
                               int line_no) {
  char* end = nullptr;
  double v = std::strtod(field.c_str(), &end);
  if (end == field.c_str() || *end != '\0') {
    throw ConfigError("csv '" + path.string() + "' line " + std::to_string(line_no) +
                      ": malformed number '" + field + "'");
  }
  return v;
}

}  // namespace detail

inline LoadedRun read_observations_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open run file '" + path.string() + "'");
  LoadedRun run;
  run.path = path;
  run.label = path.stem().string();

  std::string line;
  if (!std::getline(in, line)) throw ConfigError("csv '" + path.string() + "': empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kObservationsCsvHeader) {
    throw ConfigError("csv '" + path.string() + "': unexpected header");
  }
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 8) {
      throw ConfigError("csv '" + path.string() + "' line " + std::to_string(line_no) +
                        ": expected 8 fields");
    }
    Observation o;
    o.window_index = static_cast<int>(detail::parse_csv_double(fields[0], path, line_no));
    o.gains.kp = detail::parse_csv_double(fields[1], path, line_no);
    o.gains.ki = detail::parse_csv_double(fields[2], path, line_no);
    o.gains.kd = detail::parse_csv_double(fields[3], path, line_no);
    o.gains.kdd = detail::parse_csv_double(fields[4], path, line_no);
    double ref = detail::parse_csv_double(fields[5], path, line_no);
    o.objective = detail::parse_csv_double(fields[6], path, line_no);
    double best = detail::parse_csv_double(fields[7], path, line_no);
    if (run.observations.empty()) {
      run.ref_force_n = ref;
    } else if (ref != run.ref_force_n) {
      throw ConfigError("csv '" + path.string() + "': inconsistent ref_force_n column");
    }
    run.observations.push_back(o);
    run.best_so_far.push_back(best);
  }
  if (run.observations.empty()) {
    throw ConfigError("csv '" + path.string() + "': no data rows");
  }

  std::filesystem::path summary = path;
  summary.replace_extension(".json");
  if (std::filesystem::exists(summary)) {
    std::ifstream sin(summary);
    try {
      json sj;
      sin >> sj;
      if (sj.contains("objective_kind")) {
        run.objective_kind = sj["objective_kind"].get<std::string>();
      }
    } catch (const json::exception&) {
      // A broken sibling summary leaves the kind unknown.
    }
  }
  return run;
}

// Loads a run as a transfer-learning source task. Objectives from plain runs
// are normalized by the task force; already-normalized runs pass through.
inline TaskDataset load_task_dataset(const std::filesystem::path& path) {
  LoadedRun loaded = read_observations_csv(path);
  if (!(loaded.ref_force_n > 0.0)) {
    throw ConfigError("source '" + path.string() + "': reference force must be > 0");
  }
  bool normalized = loaded.objective_kind && *loaded.objective_kind == kObjectiveNormalized;
  TaskDataset dataset;
  dataset.source_label = path.stem().string();
  dataset.observations.reserve(loaded.observations.size());
  for (Observation o : loaded.observations) {
    o.task_ref_force_n = loaded.ref_force_n;
    if (!normalized) o.objective = normalize_objective(o.objective, loaded.ref_force_n);
    dataset.observations.push_back(o);
  }
  return dataset;
}

inline json summary_json(const RunArtifact& artifact) {
  const TuningRun& run = artifact.run;
  json j;
  j["engine_version"] = kEngineVersion;
  j["mode"] = artifact.mode;
  j["seed"] = run.seed;
  j["ref_force_n"] = run.reference_force_n;
  j["objective_kind"] = run.normalized_objective ? kObjectiveNormalized : kObjectiveRmse;
  j["best_gains"] = {{"kp", run.best_gains.kp},
                     {"ki", run.best_gains.ki},
                     {"kd", run.best_gains.kd},
                     {"kdd", run.best_gains.kdd}};
  j["best_objective"] = run.best_objective;
  j["iterations_to_convergence"] = iterations_to_convergence(run);
  j["windows"] = run.observations.size();
  j["sources"] = artifact.source_labels;
  j["config"] = artifact.config_snapshot;
  j["config_hash"] = artifact.config_hash;
  return j;
}

inline void write_summary_json(const std::filesystem::path& path, const RunArtifact& artifact) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << summary_json(artifact).dump(2) << "\n";
}

inline void write_trace_csv(const std::filesystem::path& path, const ForceTrace& trace,
                            const std::vector<double>& commands) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << "time_s,measured_force_n,drive_speed_mm_s\n";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    out << format_g9(trace.time_s[i]) << "," << format_g9(trace.force_n[i]) << ","
        << format_g9(commands[i]) << "\n";
  }
}

}  // namespace forcetune
