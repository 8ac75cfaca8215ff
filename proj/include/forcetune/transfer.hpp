#pragma once

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "forcetune/bo.hpp"
#include "forcetune/errors.hpp"

namespace forcetune {

// Observations from one prior task; objectives are stored normalized
// (RMSE / reference force) and every observation carries its task force.
struct TaskDataset {
  std::vector<Observation> observations;
  std::string source_label;
};

// Gain bounds plus the reference-force interval spanning all tasks.
struct AugmentedSpace {
  SearchSpace gains = SearchSpace::controller_gains();
  double force_lower_n = 0.05;
  double force_upper_n = 0.5;

  void validate() const {
    gains.validate();
    if (!(force_lower_n > 0.0 && force_lower_n < force_upper_n)) {
      throw std::invalid_argument("AugmentedSpace: invalid force bounds");
    }
  }

  double normalize_force(double force_n) const {
    return (force_n - force_lower_n) / (force_upper_n - force_lower_n);
  }

  bool contains_force(double force_n) const {
    return force_n >= force_lower_n && force_n <= force_upper_n;
  }

  // 5-d unit-cube embedding (Kp, Ki, Kd, Kdd, F_r).
  Eigen::VectorXd embed_normalized(const ControllerGains& g, double ref_force_n) const {
    Eigen::VectorXd raw(4);
    raw << g.kp, g.ki, g.kd, g.kdd;
    Eigen::VectorXd z(5);
    z.head(4) = gains.normalize(raw);
    z[4] = normalize_force(ref_force_n);
    return z;
  }
};

inline double normalize_objective(double rmse_n, double ref_force_n) {
  if (!(ref_force_n > 0.0)) {
    throw std::invalid_argument("normalize_objective: reference force must be > 0");
  }
  return rmse_n / ref_force_n;
}

struct MergedDataset {
  Eigen::MatrixXd inputs;      // n x 5, normalized to the unit cube
  Eigen::VectorXd objectives;  // normalized values
};

// Flattens task datasets into one 5-d training set, source order then window
// order preserved.
inline MergedDataset merge_tasks(const std::vector<TaskDataset>& datasets,
                                 const AugmentedSpace& space) {
  space.validate();
  Eigen::Index total = 0;
  for (const auto& d : datasets) total += static_cast<Eigen::Index>(d.observations.size());

  MergedDataset merged;
  merged.inputs.resize(total, 5);
  merged.objectives.resize(total);
  Eigen::Index row = 0;
  for (const auto& dataset : datasets) {
    for (const auto& obs : dataset.observations) {
      if (!(obs.task_ref_force_n > 0.0) || !space.contains_force(obs.task_ref_force_n)) {
        throw SimulationFault("merge_tasks: reference force out of bounds in source '" +
                              dataset.source_label + "'");
      }
      Eigen::VectorXd raw(4);
      raw << obs.gains.kp, obs.gains.ki, obs.gains.kd, obs.gains.kdd;
      if (!space.gains.contains(raw)) {
        throw SimulationFault("merge_tasks: gains out of bounds in source '" +
                              dataset.source_label + "'");
      }
      merged.inputs.row(row) = space.embed_normalized(obs.gains, obs.task_ref_force_n);
      merged.objectives[row] = obs.objective;
      ++row;
    }
  }
  return merged;
}

// Transfer-learning BO: the surrogate lives on the 5-d augmented space, is
// fitted jointly on source plus accumulating target data, and acquisition
// searches the gain slice with the task coordinate frozen at the target
// force. With no sources this reduces exactly to run_continuous_bo with the
// normalized objective.
inline TuningRun run_tl_bo(const std::vector<TaskDataset>& sources, const AugmentedSpace& space,
                           const PlantParams& plant_params, const DisturbanceSchedule& schedule,
                           const ControllerConfig& ctl_config, const ContinuousBoConfig& config,
                           std::uint64_t seed) {
  space.validate();
  if (!space.contains_force(config.ref_force_n)) {
    throw std::invalid_argument("run_tl_bo: target force outside the augmented force bounds");
  }
  ContinuousBoConfig tl_config = config;
  tl_config.space = space.gains;
  tl_config.normalized_objective = true;

  MergedDataset merged = merge_tasks(sources, space);
  if (merged.inputs.rows() == 0) {
    return detail::run_bo_loop(plant_params, schedule, ctl_config, tl_config, seed,
                               Eigen::MatrixXd(0, 4), Eigen::VectorXd(0), std::nullopt);
  }
  return detail::run_bo_loop(plant_params, schedule, ctl_config, tl_config, seed, merged.inputs,
                             merged.objectives, space.normalize_force(config.ref_force_n));
}

struct ImprovementReport {
  double rmse_change_percent = 0.0;
  double iterations_change_percent = 0.0;
  bool valid = true;  // false when the baseline best is zero
};

// Relative change of TL vs baseline, Table-IV style: negative = improvement.
inline ImprovementReport improvement_report(const TuningRun& baseline, const TuningRun& tl,
                                            double tolerance_fraction = 0.05) {
  if (baseline.observations.empty() || tl.observations.empty()) {
    throw std::invalid_argument("improvement_report: runs must be non-empty");
  }
  ImprovementReport report;
  if (baseline.best_objective == 0.0) {
    report.valid = false;
    report.rmse_change_percent = std::numeric_limits<double>::quiet_NaN();
    report.iterations_change_percent = std::numeric_limits<double>::quiet_NaN();
    return report;
  }
  report.rmse_change_percent =
      (tl.best_objective - baseline.best_objective) / baseline.best_objective * 100.0;
  double base_iters = iterations_to_convergence(baseline, tolerance_fraction);
  double tl_iters = iterations_to_convergence(tl, tolerance_fraction);
  report.iterations_change_percent = (tl_iters - base_iters) / base_iters * 100.0;
  return report;
}

}  // namespace forcetune
