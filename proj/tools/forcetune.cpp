// Command-line front end: tune / tl-tune / report / simulate.

#include <CLI11.hpp>
#include <atomic>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "forcetune/bo.hpp"
#include "forcetune/config.hpp"
#include "forcetune/io.hpp"
#include "forcetune/log.hpp"
#include "forcetune/report.hpp"
#include "forcetune/transfer.hpp"
#include "forcetune/version.hpp"

namespace fs = std::filesystem;
using namespace forcetune;

namespace {

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed_override;
  std::string out_dir = "out";
};

std::string ref_tag(double ref) { return format_g9(ref); }

ExperimentConfig load_config(const CommonOptions& opts) {
  ExperimentConfig config = ExperimentConfig::load(opts.config_path);
  if (opts.seed_override) {
    config.seeds = {*opts.seed_override};
  }
  return config;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

// Runs one job per (ref, seed) on up to `workers` threads. Jobs only touch
// their own files, so the schedule does not affect any output.
void run_jobs(const std::vector<std::function<void()>>& jobs, int workers) {
  if (workers <= 1 || jobs.size() <= 1) {
    for (const auto& job : jobs) job();
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure = nullptr;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        jobs[i]();
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  int count = std::min<int>(workers, static_cast<int>(jobs.size()));
  pool.reserve(count);
  for (int i = 0; i < count; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

RunArtifact make_artifact(TuningRun run, const ExperimentConfig& config, const std::string& mode,
                          std::vector<std::string> source_labels = {}) {
  RunArtifact artifact;
  artifact.run = std::move(run);
  artifact.config_snapshot = config.to_json();
  artifact.config_hash = config_hash_hex(artifact.config_snapshot);
  artifact.mode = mode;
  artifact.source_labels = std::move(source_labels);
  return artifact;
}

void print_run_result(const RunArtifact& artifact) {
  const TuningRun& run = artifact.run;
  char line[256];
  std::snprintf(line, sizeof(line),
                "ref %.9g N seed %llu: best %s = %.6g at kp=%.4g ki=%.4g kd=%.4g kdd=%.4g "
                "(converged at window %d of %zu)",
                run.reference_force_n, static_cast<unsigned long long>(run.seed),
                run.normalized_objective ? "rmse/ref" : "rmse_n", run.best_objective,
                run.best_gains.kp, run.best_gains.ki, run.best_gains.kd, run.best_gains.kdd,
                iterations_to_convergence(run), run.observations.size());
  std::cout << line << "\n";
}

int cmd_tune(const CommonOptions& opts) {
  ExperimentConfig config = load_config(opts);
  if (config.mode != "single") {
    throw ConfigError("config: 'tune' requires mode = single (got '" + config.mode + "')");
  }
  fs::create_directories(opts.out_dir);
  const DisturbanceSchedule schedule = config.make_schedule();
  const auto seeds = config.resolved_seeds();

  std::vector<std::function<void()>> jobs;
  std::vector<RunArtifact> artifacts(config.ref_forces_n.size() * seeds.size());
  for (std::size_t r = 0; r < config.ref_forces_n.size(); ++r) {
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      double ref = config.ref_forces_n[r];
      std::uint64_t seed = seeds[s];
      RunArtifact* slot = &artifacts[r * seeds.size() + s];
      jobs.push_back([&, ref, seed, slot] {
        log_info("tune: ref " + format_g9(ref) + " N, seed " + std::to_string(seed));
        TuningRun run = run_continuous_bo(config.plant, schedule, config.controller_for(ref),
                                          config.bo_config_for(ref), seed);
        *slot = make_artifact(std::move(run), config, "single");
        fs::path base = fs::path(opts.out_dir) /
                        ("tune_ref" + ref_tag(ref) + "_seed" + std::to_string(seed));
        write_observations_csv(base.string() + ".csv", slot->run);
        write_summary_json(base.string() + ".json", *slot);
      });
    }
  }
  run_jobs(jobs, config.workers);
  for (const auto& artifact : artifacts) print_run_result(artifact);
  return 0;
}

int cmd_tl_tune(const CommonOptions& opts, const std::vector<std::string>& source_paths) {
  ExperimentConfig config = load_config(opts);
  if (config.mode != "tl") {
    throw ConfigError("config: 'tl-tune' requires mode = tl (got '" + config.mode + "')");
  }
  if (config.ref_forces_n.size() != 1) {
    throw ConfigError("config: tl mode needs exactly one target 'ref_force_n'");
  }
  fs::create_directories(opts.out_dir);

  std::vector<TaskDataset> sources;
  std::vector<std::string> labels;
  for (const auto& p : source_paths) {
    sources.push_back(load_task_dataset(p));
    labels.push_back(sources.back().source_label);
  }

  const double target_ref = config.ref_forces_n.front();
  const DisturbanceSchedule schedule = config.make_schedule();
  const AugmentedSpace space = config.augmented_space();
  const auto seeds = config.resolved_seeds();

  std::vector<std::function<void()>> jobs;
  std::vector<RunArtifact> artifacts(seeds.size());
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    std::uint64_t seed = seeds[s];
    RunArtifact* slot = &artifacts[s];
    jobs.push_back([&, seed, slot] {
      log_info("tl-tune: target " + format_g9(target_ref) + " N, seed " + std::to_string(seed) +
               ", " + std::to_string(sources.size()) + " source task(s)");
      TuningRun run = run_tl_bo(sources, space, config.plant, schedule,
                                config.controller_for(target_ref),
                                config.bo_config_for(target_ref), seed);
      *slot = make_artifact(std::move(run), config, "tl", labels);
      fs::path base = fs::path(opts.out_dir) /
                      ("tl_ref" + ref_tag(target_ref) + "_seed" + std::to_string(seed));
      write_observations_csv(base.string() + ".csv", slot->run);
      write_summary_json(base.string() + ".json", *slot);
    });
  }
  run_jobs(jobs, config.workers);
  for (const auto& artifact : artifacts) {
    print_run_result(artifact);
    std::cout << "  sources:";
    if (artifact.source_labels.empty()) std::cout << " (none)";
    for (const auto& l : artifact.source_labels) std::cout << " " << l;
    std::cout << "\n";
  }
  return 0;
}

int cmd_report(const std::vector<std::string>& run_paths,
               const std::vector<std::string>& baseline_paths, const std::string& out_dir) {
  std::vector<LoadedRun> runs, baselines;
  for (const auto& p : run_paths) runs.push_back(read_observations_csv(p));
  for (const auto& p : baseline_paths) baselines.push_back(read_observations_csv(p));
  if (!baselines.empty() && baselines.size() != runs.size()) {
    throw ConfigError("report: --baseline count must match the number of run files");
  }

  // Refuse tables mixing normalized and unnormalized objectives.
  std::optional<std::string> kind;
  auto check_kind = [&](const LoadedRun& r) {
    if (!r.objective_kind) return;
    if (kind && *kind != *r.objective_kind) {
      throw ConfigError("report: mixed normalized/unnormalized objectives ('" + *kind +
                        "' vs '" + *r.objective_kind + "' in " + r.label + ")");
    }
    kind = r.objective_kind;
  };
  for (const auto& r : runs) check_kind(r);
  for (const auto& b : baselines) check_kind(b);

  fs::create_directories(out_dir);
  std::vector<LoadedRun> all = runs;
  all.insert(all.end(), baselines.begin(), baselines.end());
  write_file(fs::path(out_dir) / "convergence.svg", render_convergence_svg(all));

  std::string tables;
  tables += "== before/after (first window vs best) ==\n";
  tables += render_before_after_table(runs);
  if (!baselines.empty()) {
    tables += "\n== improvement vs baseline ==\n";
    tables += render_improvement_table(runs, baselines);
  }
  write_file(fs::path(out_dir) / "tables.txt", tables);
  std::cout << tables;
  std::cout << "wrote " << (fs::path(out_dir) / "convergence.svg").string() << "\n";
  return 0;
}

int cmd_simulate(const CommonOptions& opts, const std::optional<std::vector<double>>& gains_flag) {
  ExperimentConfig config = load_config(opts);
  ControllerGains gains;
  if (gains_flag) {
    if (gains_flag->size() != 4) throw ConfigError("simulate: --gains needs 4 values");
    gains = ControllerGains{(*gains_flag)[0], (*gains_flag)[1], (*gains_flag)[2],
                            (*gains_flag)[3]};
  } else if (config.initial_gains) {
    gains = *config.initial_gains;
  } else {
    throw ConfigError("simulate: provide --gains or 'initial_gains' in the config");
  }
  {
    Eigen::Vector4d g(gains.kp, gains.ki, gains.kd, gains.kdd);
    if (!config.bounds.contains(g)) throw ConfigError("simulate: gains outside 'bounds'");
  }
  if (config.ref_forces_n.size() != 1) {
    throw ConfigError("simulate: needs exactly one 'ref_force_n'");
  }
  fs::create_directories(opts.out_dir);

  const double ref = config.ref_forces_n.front();
  const std::uint64_t seed = config.resolved_seeds().front();
  Plant plant(config.plant, config.make_schedule(), derive_seed(seed, 0));
  const int steps_per_window =
      static_cast<int>(std::llround(config.window_s / config.plant.sample_period_s));
  const int num_windows = static_cast<int>(std::floor(config.total_s / config.window_s));

  ForceTrace full_trace;
  std::vector<double> full_commands;
  for (int w = 1; w <= num_windows; ++w) {
    auto record =
        detail::deploy_window(plant, gains, config.controller_for(ref), ref, steps_per_window);
    double rmse = record.fault
                      ? detail::saturation_cap_rmse(ref, config.plant.force_saturation_n)
                      : window_objective(record.trace, ref, config.settle_fraction);
    char line[128];
    std::snprintf(line, sizeof(line), "window %d: rmse = %.6g N%s", w, rmse,
                  record.fault ? " (fault, saturation cap)" : "");
    std::cout << line << "\n";
    for (std::size_t i = 0; i < record.trace.size(); ++i) {
      full_trace.push(record.trace.time_s[i], record.trace.force_n[i]);
    }
    full_commands.insert(full_commands.end(), record.commands.begin(), record.commands.end());
  }
  fs::path out = fs::path(opts.out_dir) /
                 ("trace_ref" + ref_tag(ref) + "_seed" + std::to_string(seed) + ".csv");
  write_trace_csv(out, full_trace, full_commands);
  std::cout << "wrote " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"forcetune: continuous Bayesian-optimization auto-tuning for force-controlled "
               "extrusion (simulated plant)"};
  app.set_version_flag("--version", std::string(kEngineVersion));
  app.require_subcommand(1);

  CommonOptions tune_opts, tl_opts, sim_opts;
  std::vector<std::string> source_paths, run_paths, baseline_paths;
  std::string report_out = "out";
  std::optional<std::vector<double>> gains_flag;
  std::vector<double> gains_values;

  auto seed_parser = [](CommonOptions& opts) {
    return [&opts](const CLI::results_t& r) {
      try {
        opts.seed_override = std::stoull(r.front());
        return true;
      } catch (const std::exception&) {
        return false;
      }
    };
  };

  auto* tune = app.add_subcommand("tune", "run single-task continuous BO");
  tune->add_option("--config", tune_opts.config_path, "experiment config JSON")->required();
  tune->add_option("--seed", seed_parser(tune_opts), "override: run only this seed");
  tune->add_option("--out", tune_opts.out_dir, "output directory");

  auto* tl = app.add_subcommand("tl-tune", "run transfer-learning BO from source datasets");
  tl->add_option("--config", tl_opts.config_path, "experiment config JSON")->required();
  tl->add_option("--seed", seed_parser(tl_opts), "override: run only this seed");
  tl->add_option("--out", tl_opts.out_dir, "output directory");
  tl->add_option("--sources", source_paths, "source observation CSV files");

  auto* report = app.add_subcommand("report", "tables and convergence plots from run files");
  report->add_option("runs", run_paths, "observation CSV files")->required();
  report->add_option("--baseline", baseline_paths, "baseline observation CSV files");
  report->add_option("--out", report_out, "output directory");

  auto* simulate = app.add_subcommand("simulate", "deploy one controller and record the trace");
  simulate->add_option("--config", sim_opts.config_path, "experiment config JSON")->required();
  simulate->add_option("--seed", seed_parser(sim_opts), "override: run only this seed");
  simulate->add_option("--out", sim_opts.out_dir, "output directory");
  simulate->add_option("--gains", gains_values, "kp ki kd kdd")->expected(4);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (tune->parsed()) return cmd_tune(tune_opts);
    if (tl->parsed()) return cmd_tl_tune(tl_opts, source_paths);
    if (report->parsed()) return cmd_report(run_paths, baseline_paths, report_out);
    if (simulate->parsed()) {
      if (!gains_values.empty()) gains_flag = gains_values;
      return cmd_simulate(sim_opts, gains_flag);
    }
  } catch (const ConfigError& e) {
    log_error(e.what());
    return 2;
  } catch (const ParseError& e) {
    log_error(e.what());
    return 2;
  } catch (const std::exception& e) {
    log_error(e.what());
    return 3;
  }
  return 0;
}
