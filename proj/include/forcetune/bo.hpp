#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "forcetune/controller.hpp"
#include "forcetune/errors.hpp"
#include "forcetune/gp.hpp"
#include "forcetune/halton.hpp"
#include "forcetune/math.hpp"
#include "forcetune/plant.hpp"

namespace forcetune {

struct SearchSpace {
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<std::string> names;

  static SearchSpace controller_gains() {
    SearchSpace s;
    s.lower = {0.0, 0.0, 0.0, 0.0};
    s.upper = {50.0, 50.0, 100.0, 100.0};
    s.names = {"kp", "ki", "kd", "kdd"};
    return s;
  }

  int dim() const { return static_cast<int>(lower.size()); }

  void validate() const {
    if (lower.size() != upper.size() || lower.empty()) {
      throw std::invalid_argument("SearchSpace: lower/upper size mismatch");
    }
    for (std::size_t i = 0; i < lower.size(); ++i) {
      if (!(lower[i] < upper[i])) {
        throw std::invalid_argument("SearchSpace: lower must be < upper in every dimension");
      }
    }
  }

  Eigen::VectorXd normalize(const Eigen::VectorXd& x) const {
    Eigen::VectorXd z(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      z[i] = (x[i] - lower[i]) / (upper[i] - lower[i]);
    }
    return z;
  }

  Eigen::VectorXd denormalize(const Eigen::VectorXd& z) const {
    Eigen::VectorXd x(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      x[i] = lower[i] + z[i] * (upper[i] - lower[i]);
    }
    return x;
  }

  bool contains(const Eigen::VectorXd& x) const {
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (!(x[i] >= lower[i] && x[i] <= upper[i])) return false;
    }
    return true;
  }
};

// Time-stamped force samples from one deployment window.
struct ForceTrace {
  std::vector<double> time_s;
  std::vector<double> force_n;

  std::size_t size() const { return force_n.size(); }
  bool empty() const { return force_n.empty(); }
  void reserve(std::size_t n) {
    time_s.reserve(n);
    force_n.reserve(n);
  }
  void push(double t, double f) {
    time_s.push_back(t);
    force_n.push_back(f);
  }
};

struct Observation {
  ControllerGains gains;
  double objective = 0.0;
  int window_index = 0;             // 1-based
  double task_ref_force_n = 0.0;    // > 0 when the run is task-tagged (TL mode)

  bool operator==(const Observation&) const = default;
};

// Full record of one continuous-BO session.
struct TuningRun {
  std::vector<Observation> observations;
  std::vector<double> best_so_far;  // per window, non-increasing
  ControllerGains best_gains;
  double best_objective = std::numeric_limits<double>::infinity();
  double reference_force_n = 0.0;
  std::uint64_t seed = 0;
  bool normalized_objective = false;
};

// RMSE of the window trace against the reference after discarding the first
// settle_fraction of samples.
inline double window_objective(const ForceTrace& trace, double ref_force_n,
                               double settle_fraction = 0.1) {
  if (trace.empty()) throw SimulationFault("window_objective: empty trace");
  if (!(ref_force_n > 0.0)) throw std::invalid_argument("window_objective: ref must be > 0");
  if (!(settle_fraction >= 0.0 && settle_fraction < 1.0)) {
    throw std::invalid_argument("window_objective: settle_fraction must be in [0,1)");
  }
  std::size_t skip = static_cast<std::size_t>(settle_fraction * trace.size());
  if (skip >= trace.size()) skip = trace.size() - 1;
  double sum_sq = 0.0;
  for (std::size_t i = skip; i < trace.size(); ++i) {
    double e = trace.force_n[i] - ref_force_n;
    sum_sq += e * e;
  }
  return std::sqrt(sum_sq / static_cast<double>(trace.size() - skip));
}

// Analytic expected improvement for minimization with exploration offset xi.
inline double expected_improvement(double mean, double variance, double best_objective,
                                   double xi) {
  if (!(variance >= 0.0)) throw NumericalFault("expected_improvement: negative variance");
  double delta = best_objective - mean + xi;
  double sigma = std::sqrt(variance);
  if (sigma == 0.0) return std::max(delta, 0.0);
  double z = delta / sigma;
  return std::max(delta * normal_cdf(z) + sigma * normal_pdf(z), 0.0);
}

struct AcquisitionSettings {
  int candidates = 1024;   // quasi-random evaluations
  int refine_top = 10;     // candidates refined by pattern search
  int refine_steps = 100;  // pattern-search iterations
};

struct AcquisitionResult {
  Eigen::VectorXd point;  // in original (unnormalized) coordinates
  bool exploration_fallback = false;
};

// Maximizes EI over `space`. Candidates come from a seeded low-discrepancy
// sequence; the best few are refined by coordinate-wise pattern search with a
// shrinking step. `frozen_suffix` holds extra normalized coordinates appended
// to every query (the task dimension in transfer mode). A degenerate model --
// no data, a noise-dominated fit, or targets whose spread EI cannot resolve
// against xi -- yields a random in-bounds point flagged as fallback.
inline AcquisitionResult maximize_acquisition(const GpModel& model, const SearchSpace& space,
                                              double best_objective, double xi,
                                              std::uint64_t seed,
                                              const AcquisitionSettings& settings = {},
                                              const std::vector<double>& frozen_suffix = {}) {
  space.validate();
  const int d = space.dim();
  if (model.dimension() != d + static_cast<int>(frozen_suffix.size())) {
    throw std::invalid_argument("maximize_acquisition: model/space dimension mismatch");
  }

  Eigen::VectorXd query(model.dimension());
  for (std::size_t i = 0; i < frozen_suffix.size(); ++i) {
    query[d + static_cast<Eigen::Index>(i)] = frozen_suffix[i];
  }
  auto ei_at = [&](const Eigen::VectorXd& z) {
    query.head(d) = z;
    auto [mean, variance] = model.posterior(query);
    return expected_improvement(mean, variance, best_objective, xi);
  };

  std::mt19937_64 rng(derive_seed(seed, 7));
  auto random_point = [&] {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Eigen::VectorXd z(d);
    for (int i = 0; i < d; ++i) z[i] = unit(rng);
    return z;
  };

  // A noise-dominated fit predicts the same value everywhere, and a model
  // whose raw signal scale is below xi cannot resolve any EI difference
  // against the offset (the argmax degenerates to resampling the incumbent).
  // Either way EI carries no information; explore instead.
  const double signal_scale =
      std::sqrt(model.hyperparams().signal_variance) * model.target_scale();
  if (model.sample_count() == 0 || (model.sample_count() > 1 && signal_scale <= xi) ||
      model.hyperparams().signal_variance < 1e-2 * model.hyperparams().noise_variance) {
    return {space.denormalize(random_point()), true};
  }

  HaltonSequence halton(d, derive_seed(seed, 11));
  std::vector<Eigen::VectorXd> candidates(settings.candidates);
  std::vector<double> scores(settings.candidates);
  double score_min = std::numeric_limits<double>::infinity();
  double score_max = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < settings.candidates; ++i) {
    auto p = halton.next();
    candidates[i] = Eigen::Map<Eigen::VectorXd>(p.data(), d);
    scores[i] = ei_at(candidates[i]);
    score_min = std::min(score_min, scores[i]);
    score_max = std::max(score_max, scores[i]);
  }

  // All-equal predictions leave EI flat; fall back to exploration.
  if (!(score_max - score_min > 1e-15 * std::max(1.0, std::abs(score_max)))) {
    return {space.denormalize(random_point()), true};
  }

  std::vector<int> order(candidates.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  int top = std::min<int>(settings.refine_top, static_cast<int>(order.size()));
  std::partial_sort(order.begin(), order.begin() + top, order.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;  // deterministic tie-break: lowest candidate index
  });

  Eigen::VectorXd best_point = candidates[order[0]];
  double best_score = scores[order[0]];
  for (int k = 0; k < top; ++k) {
    Eigen::VectorXd x = candidates[order[k]];
    double fx = scores[order[k]];
    double step = 0.1;
    for (int iter = 0; iter < settings.refine_steps && step >= 1e-5; ++iter) {
      bool improved = false;
      for (int m = 0; m < d; ++m) {
        for (double sign : {1.0, -1.0}) {
          Eigen::VectorXd trial = x;
          trial[m] = std::clamp(trial[m] + sign * step, 0.0, 1.0);
          if (trial[m] == x[m]) continue;
          double ft = ei_at(trial);
          if (ft > fx) {
            x = trial;
            fx = ft;
            improved = true;
          }
        }
      }
      if (!improved) step *= 0.5;
    }
    if (fx > best_score) {
      best_score = fx;
      best_point = x;
    }
  }
  // EI includes xi additively, so a maximum at or below xi means no candidate
  // is expected to beat a plain resample of the incumbent; explore instead.
  if (best_score <= xi) {
    return {space.denormalize(random_point()), true};
  }
  return {space.denormalize(best_point), false};
}

// Smallest 1-based window index whose best-so-far objective is within
// tolerance_fraction of the run's final best.
inline int iterations_to_convergence(const TuningRun& run, double tolerance_fraction = 0.05) {
  if (run.best_so_far.empty()) throw std::invalid_argument("iterations_to_convergence: empty run");
  double target = (1.0 + tolerance_fraction) * run.best_so_far.back();
  for (std::size_t i = 0; i < run.best_so_far.size(); ++i) {
    if (run.best_so_far[i] <= target) return static_cast<int>(i) + 1;
  }
  return static_cast<int>(run.best_so_far.size());
}

struct ContinuousBoConfig {
  double ref_force_n = 0.3;
  double window_s = 10.0;
  double total_s = 600.0;
  double xi = 1e-3;
  double settle_fraction = 0.1;
  SearchSpace space = SearchSpace::controller_gains();
  std::optional<ControllerGains> initial_gains;  // manual baseline; else random
  int refit_full_until = 50;   // refit hyperparameters every window while n <= this
  int refit_every = 5;         // then refit every this many windows
  GpFitSettings fit;
  AcquisitionSettings acquisition;
  bool normalized_objective = false;
  std::function<void(const Observation&)> on_window;  // optional progress hook

  void validate() const {
    if (!(ref_force_n > 0.0)) throw std::invalid_argument("bo: ref_force_n must be > 0");
    if (!(window_s > 0.0)) throw std::invalid_argument("bo: window_s must be > 0");
    if (!(total_s >= window_s)) throw std::invalid_argument("bo: total_s must be >= window_s");
    if (!(xi >= 0.0)) throw std::invalid_argument("bo: xi must be >= 0");
    if (!(settle_fraction >= 0.0 && settle_fraction < 1.0)) {
      throw std::invalid_argument("bo: settle_fraction must be in [0,1)");
    }
    if (refit_full_until < 0 || refit_every < 1) {
      throw std::invalid_argument("bo: invalid refit schedule");
    }
    space.validate();
  }
};

namespace detail {

struct DeploymentRecord {
  ForceTrace trace;
  std::vector<double> commands;
  bool fault = false;
};

// Runs one controller deployment window on a live plant. The plant state is
// not reset; the controller starts clean.
inline DeploymentRecord deploy_window(Plant& plant, const ControllerGains& gains,
                                      const ControllerConfig& ctl_config, double ref_force_n,
                                      int steps) {
  DeploymentRecord record;
  record.trace.reserve(steps);
  record.commands.reserve(steps);
  Controller controller(gains, ctl_config);
  const double ts = plant.params().sample_period_s;
  try {
    double measured = plant.last_measured_n();
    for (int k = 0; k < steps; ++k) {
      double u = controller.step(ref_force_n - measured, ts);
      measured = plant.step(u);
      record.commands.push_back(u);
      record.trace.push(plant.time_s(), measured);
    }
  } catch (const SimulationFault&) {
    record.fault = true;
  }
  return record;
}

// Worst possible window RMSE given the output clamp; assigned to faulted
// windows so unstable candidates stay data instead of crashes.
inline double saturation_cap_rmse(double ref_force_n, double force_saturation_n) {
  return std::max(ref_force_n, force_saturation_n - ref_force_n);
}

// The windowed tuning loop shared by plain and transfer-learning BO.
// `source_inputs` rows are pre-normalized GP points; when `frozen_force_norm`
// is set the GP gains one trailing task dimension held at that value during
// acquisition.
inline TuningRun run_bo_loop(const PlantParams& plant_params,
                             const DisturbanceSchedule& schedule,
                             const ControllerConfig& ctl_config, const ContinuousBoConfig& config,
                             std::uint64_t seed, const Eigen::MatrixXd& source_inputs,
                             const Eigen::VectorXd& source_objectives,
                             std::optional<double> frozen_force_norm) {
  plant_params.validate();
  ctl_config.validate();
  config.validate();
  if (config.space.dim() != 4) {
    throw std::invalid_argument("bo: gain search space must be 4-dimensional");
  }

  const bool augmented = frozen_force_norm.has_value();
  const int gp_dim = config.space.dim() + (augmented ? 1 : 0);
  const Eigen::Index n_sources = source_inputs.rows();
  if (n_sources > 0 && source_inputs.cols() != gp_dim) {
    throw std::invalid_argument("bo: source data dimension mismatch");
  }

  const int num_windows = static_cast<int>(std::floor(config.total_s / config.window_s));
  const int steps_per_window =
      static_cast<int>(std::llround(config.window_s / plant_params.sample_period_s));
  if (steps_per_window < 1) throw std::invalid_argument("bo: window shorter than one sample");

  if (config.initial_gains) {
    Eigen::Vector4d g(config.initial_gains->kp, config.initial_gains->ki,
                      config.initial_gains->kd, config.initial_gains->kdd);
    if (!config.space.contains(g)) {
      throw std::invalid_argument("bo: initial gains outside the search space");
    }
  }

  Plant plant(plant_params, schedule, derive_seed(seed, 0));
  std::mt19937_64 init_rng(derive_seed(seed, 1));

  Eigen::MatrixXd data_inputs(n_sources + num_windows, gp_dim);
  Eigen::VectorXd data_objectives(n_sources + num_windows);
  if (n_sources > 0) {
    data_inputs.topRows(n_sources) = source_inputs;
    data_objectives.head(n_sources) = source_objectives;
  }

  TuningRun run;
  run.reference_force_n = config.ref_force_n;
  run.seed = seed;
  run.normalized_objective = config.normalized_objective;
  run.observations.reserve(num_windows);
  run.best_so_far.reserve(num_windows);

  const double fault_cap_raw =
      saturation_cap_rmse(config.ref_force_n, plant_params.force_saturation_n);
  const double fault_cap =
      config.normalized_objective ? fault_cap_raw / config.ref_force_n : fault_cap_raw;

  std::optional<KernelHyperparams> current_hp;
  // EI incumbent: best target objective, or best source value before any
  // target observation exists.
  double incumbent = std::numeric_limits<double>::infinity();
  if (n_sources > 0) incumbent = data_objectives.head(n_sources).minCoeff();

  std::vector<double> frozen_suffix;
  if (augmented) frozen_suffix.push_back(*frozen_force_norm);

  for (int window = 1; window <= num_windows; ++window) {
    const Eigen::Index n_data = n_sources + (window - 1);

    ControllerGains gains;
    if (window == 1 && n_sources == 0) {
      if (config.initial_gains) {
        gains = *config.initial_gains;
      } else {
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        gains.kp = config.space.lower[0] + unit(init_rng) * (config.space.upper[0] - config.space.lower[0]);
        gains.ki = config.space.lower[1] + unit(init_rng) * (config.space.upper[1] - config.space.lower[1]);
        gains.kd = config.space.lower[2] + unit(init_rng) * (config.space.upper[2] - config.space.lower[2]);
        gains.kdd = config.space.lower[3] + unit(init_rng) * (config.space.upper[3] - config.space.lower[3]);
      }
    } else {
      Eigen::MatrixXd inputs = data_inputs.topRows(n_data);
      Eigen::VectorXd targets = data_objectives.head(n_data);
      bool refit = !current_hp || n_data <= config.refit_full_until ||
                   ((window - 1) % config.refit_every == 0);
      GpModel model = [&] {
        if (refit) {
          GpFitSettings fit = config.fit;
          fit.seed = derive_seed(seed, 1000 + static_cast<std::uint64_t>(window));
          fit.warm_start = current_hp;
          GpModel fitted = GpModel::fit(inputs, targets, fit);
          current_hp = fitted.hyperparams();
          return fitted;
        }
        return GpModel(inputs, targets, *current_hp);
      }();
      auto acq = maximize_acquisition(model, config.space, incumbent, config.xi,
                                      derive_seed(seed, 2000 + static_cast<std::uint64_t>(window)),
                                      config.acquisition, frozen_suffix);
      gains = ControllerGains{acq.point[0], acq.point[1], acq.point[2], acq.point[3]};
    }

    auto record = deploy_window(plant, gains, ctl_config, config.ref_force_n, steps_per_window);
    double objective;
    if (record.fault) {
      objective = fault_cap;
    } else {
      double raw = window_objective(record.trace, config.ref_force_n, config.settle_fraction);
      objective = config.normalized_objective ? raw / config.ref_force_n : raw;
    }

    Observation obs;
    obs.gains = gains;
    obs.objective = objective;
    obs.window_index = window;
    obs.task_ref_force_n = config.normalized_objective ? config.ref_force_n : 0.0;
    run.observations.push_back(obs);
    if (config.on_window) config.on_window(obs);

    if (objective < run.best_objective) {
      run.best_objective = objective;
      run.best_gains = gains;
    }
    run.best_so_far.push_back(run.best_objective);
    // EI incumbent: once target observations exist they alone define it;
    // source values only seed the very first acquisition.
    incumbent = run.best_objective;

    Eigen::VectorXd gains_vec(4);
    gains_vec << gains.kp, gains.ki, gains.kd, gains.kdd;
    Eigen::VectorXd row(gp_dim);
    row.head(4) = config.space.normalize(gains_vec);
    if (augmented) row[4] = *frozen_force_norm;
    data_inputs.row(n_sources + window - 1) = row;
    data_objectives[n_sources + window - 1] = objective;
  }

  return run;
}

}  // namespace detail

// Continuous BO during one uninterrupted simulated print: every window
// deploys one candidate controller, scores its RMSE, and picks the next
// candidate by expected improvement. The plant carries over between windows.
inline TuningRun run_continuous_bo(const PlantParams& plant_params,
                                   const DisturbanceSchedule& schedule,
                                   const ControllerConfig& ctl_config,
                                   const ContinuousBoConfig& config, std::uint64_t seed) {
  return detail::run_bo_loop(plant_params, schedule, ctl_config, config, seed,
                             Eigen::MatrixXd(0, 4), Eigen::VectorXd(0), std::nullopt);
}

}  // namespace forcetune
