#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "forcetune/toolpath.hpp"
#include "forcetune/transfer.hpp"

using namespace forcetune;

namespace {

PlantParams quiet_plant() {
  PlantParams p;
  p.noise_std_n = 0.002;
  return p;
}

DisturbanceSchedule square_schedule() {
  Toolpath tp = parse_toolpath("G1 X20 Y0 F6000\nG1 X20 Y20\nG1 X0 Y20\nG1 X0 Y0");
  return schedule_from_toolpath(tp, CornerDipConfig{});
}

ControllerConfig feedforward_controller(const PlantParams& plant, double ref) {
  ControllerConfig c;
  c.u_ff_mm_s = plant.drive_for_force(ref);
  return c;
}

ContinuousBoConfig small_bo(double ref, double total_s = 2.0, double window_s = 0.5) {
  ContinuousBoConfig c;
  c.ref_force_n = ref;
  c.window_s = window_s;
  c.total_s = total_s;
  c.acquisition.candidates = 128;
  c.acquisition.refine_top = 4;
  c.acquisition.refine_steps = 25;
  c.fit.restarts = 3;
  c.fit.max_iterations = 60;
  return c;
}

TaskDataset synthetic_source(double task_ref, int count, std::uint64_t seed,
                             const std::string& label) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  TaskDataset dataset;
  dataset.source_label = label;
  for (int i = 0; i < count; ++i) {
    Observation obs;
    obs.gains = {50.0 * u(rng), 50.0 * u(rng), 100.0 * u(rng), 100.0 * u(rng)};
    obs.objective = 0.05 + 1.2 * u(rng);  // normalized values
    obs.window_index = i + 1;
    obs.task_ref_force_n = task_ref;
    dataset.observations.push_back(obs);
  }
  return dataset;
}

}  // namespace

TEST_CASE("normalize objective") {
  CHECK(normalize_objective(0.06, 0.3) == Catch::Approx(0.2));
  CHECK(normalize_objective(0.0, 0.123) == 0.0);
  CHECK_THROWS_AS(normalize_objective(0.1, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(normalize_objective(0.1, -0.2), std::invalid_argument);
}

TEST_CASE("normalization is scale invariant") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.01, 10.0);
  for (int t = 0; t < 200; ++t) {
    double rmse = u(rng), ref = u(rng), c = u(rng);
    CHECK(std::abs(normalize_objective(c * rmse, c * ref) - normalize_objective(rmse, ref)) <
          1e-12);
  }
}

TEST_CASE("merge embeds gains losslessly") {
  AugmentedSpace space;
  TaskDataset d = synthetic_source(0.4, 10, 1, "a");
  MergedDataset merged = merge_tasks({d}, space);
  REQUIRE(merged.inputs.rows() == 10);
  REQUIRE(merged.inputs.cols() == 5);
  for (int i = 0; i < 10; ++i) {
    Eigen::VectorXd gains = space.gains.denormalize(merged.inputs.row(i).head(4).transpose());
    CHECK(gains[0] == Catch::Approx(d.observations[i].gains.kp).margin(1e-12));
    CHECK(gains[1] == Catch::Approx(d.observations[i].gains.ki).margin(1e-12));
    CHECK(gains[2] == Catch::Approx(d.observations[i].gains.kd).margin(1e-12));
    CHECK(gains[3] == Catch::Approx(d.observations[i].gains.kdd).margin(1e-12));
    CHECK(merged.inputs(i, 4) == Catch::Approx(space.normalize_force(0.4)));
    CHECK(merged.objectives[i] == d.observations[i].objective);
  }
}

TEST_CASE("merging two 60-observation tasks gives 120 points in order") {
  AugmentedSpace space;
  TaskDataset a = synthetic_source(0.4, 60, 3, "task04");
  TaskDataset b = synthetic_source(0.3, 60, 4, "task03");
  MergedDataset merged = merge_tasks({a, b}, space);
  REQUIRE(merged.inputs.rows() == 120);
  CHECK(merged.objectives[0] == a.observations[0].objective);
  CHECK(merged.objectives[60] == b.observations[0].objective);
  CHECK(merged.objectives[119] == b.observations[59].objective);
}

TEST_CASE("empty dataset list merges to an empty dataset") {
  MergedDataset merged = merge_tasks({}, AugmentedSpace{});
  CHECK(merged.inputs.rows() == 0);
}

TEST_CASE("out-of-bounds force names the offending source") {
  AugmentedSpace space;  // force bounds [0.05, 0.5]
  TaskDataset bad = synthetic_source(0.9, 3, 5, "too_hot");
  CHECK_THROWS_WITH(merge_tasks({bad}, space),
                    Catch::Matchers::ContainsSubstring("too_hot"));
}

TEST_CASE("tl with no sources reduces exactly to normalized continuous bo") {
  PlantParams plant = quiet_plant();
  DisturbanceSchedule schedule = square_schedule();
  ControllerConfig ctl = feedforward_controller(plant, 0.3);

  ContinuousBoConfig cfg = small_bo(0.3);
  AugmentedSpace space;

  TuningRun tl = run_tl_bo({}, space, plant, schedule, ctl, cfg, 77);

  ContinuousBoConfig plain_cfg = cfg;
  plain_cfg.normalized_objective = true;
  TuningRun plain = run_continuous_bo(plant, schedule, ctl, plain_cfg, 77);

  REQUIRE(tl.observations.size() == plain.observations.size());
  CHECK(tl.observations == plain.observations);
  CHECK(tl.best_so_far == plain.best_so_far);
  CHECK(tl.best_gains == plain.best_gains);
  CHECK(tl.normalized_objective);
}

TEST_CASE("tl deployments stay on the target-force slice") {
  PlantParams plant = quiet_plant();
  AugmentedSpace space;
  const double target = 0.3;
  std::vector<TaskDataset> sources = {synthetic_source(0.4, 12, 8, "src04")};
  ContinuousBoConfig cfg = small_bo(target);
  TuningRun run = run_tl_bo(sources, space, plant, square_schedule(),
                            feedforward_controller(plant, target), cfg, 9);
  REQUIRE(run.observations.size() == 4);
  for (const auto& obs : run.observations) {
    CHECK(obs.task_ref_force_n == target);
    Eigen::VectorXd embedded = space.embed_normalized(obs.gains, obs.task_ref_force_n);
    CHECK(embedded[4] == space.normalize_force(target));  // exact
    Eigen::Vector4d g(obs.gains.kp, obs.gains.ki, obs.gains.kd, obs.gains.kdd);
    CHECK(space.gains.contains(g));
  }
  // Best-so-far only tracks target-task observations and is non-increasing.
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < run.observations.size(); ++i) {
    best = std::min(best, run.observations[i].objective);
    CHECK(run.best_so_far[i] == best);
  }
}

TEST_CASE("tl first window is informed by the sources") {
  PlantParams plant = quiet_plant();
  AugmentedSpace space;
  ContinuousBoConfig cfg = small_bo(0.3, 0.5, 0.5);
  // Same seed with and without sources: the no-source run starts from the
  // seeded random draw, the sourced run from the source-informed acquisition.
  TuningRun with_sources = run_tl_bo({synthetic_source(0.4, 15, 11, "s")}, space, plant,
                                     square_schedule(), feedforward_controller(plant, 0.3), cfg,
                                     123);
  TuningRun without = run_tl_bo({}, space, plant, square_schedule(),
                                feedforward_controller(plant, 0.3), cfg, 123);
  REQUIRE(with_sources.observations.size() == 1);
  REQUIRE(without.observations.size() == 1);
  CHECK(with_sources.observations[0].gains != without.observations[0].gains);
}

TEST_CASE("target force must lie inside the augmented bounds") {
  PlantParams plant = quiet_plant();
  AugmentedSpace space;
  ContinuousBoConfig cfg = small_bo(0.7);  // outside [0.05, 0.5]
  CHECK_THROWS_AS(run_tl_bo({}, space, plant, square_schedule(),
                            feedforward_controller(plant, 0.7), cfg, 1),
                  std::invalid_argument);
}

TEST_CASE("improvement report reproduces the published arithmetic") {
  TuningRun baseline, tl;
  baseline.observations.resize(20);
  baseline.best_objective = 0.047;
  for (int w = 1; w <= 20; ++w) {
    baseline.best_so_far.push_back(w < 14 ? 1.0 : 0.047);
  }
  tl.observations.resize(20);
  tl.best_objective = 0.033;
  tl.best_so_far.assign(20, 0.033);

  ImprovementReport report = improvement_report(baseline, tl);
  REQUIRE(report.valid);
  CHECK(report.rmse_change_percent == Catch::Approx(-29.8).margin(0.05));
  CHECK(report.iterations_change_percent == Catch::Approx(-92.8).margin(0.1));
}

TEST_CASE("identical runs report zero change") {
  TuningRun run;
  run.observations.resize(5);
  run.best_objective = 0.25;
  run.best_so_far.assign(5, 0.25);
  ImprovementReport report = improvement_report(run, run);
  REQUIRE(report.valid);
  CHECK(report.rmse_change_percent == 0.0);
  CHECK(report.iterations_change_percent == 0.0);
}

TEST_CASE("zero baseline best is flagged undefined") {
  TuningRun baseline, tl;
  baseline.observations.resize(2);
  baseline.best_objective = 0.0;
  baseline.best_so_far = {0.0, 0.0};
  tl.observations.resize(2);
  tl.best_objective = 0.1;
  tl.best_so_far = {0.1, 0.1};
  ImprovementReport report = improvement_report(baseline, tl);
  CHECK_FALSE(report.valid);
  CHECK(std::isnan(report.rmse_change_percent));
}
