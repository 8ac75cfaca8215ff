#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <vector>

#include "forcetune/bo.hpp"
#include "forcetune/toolpath.hpp"

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

// Small-budget loop configuration that still exercises fit + acquisition.
ContinuousBoConfig small_bo(double total_s = 4.0, double window_s = 0.5) {
  ContinuousBoConfig c;
  c.ref_force_n = 0.3;
  c.window_s = window_s;
  c.total_s = total_s;
  c.acquisition.candidates = 128;
  c.acquisition.refine_top = 4;
  c.acquisition.refine_steps = 25;
  c.fit.restarts = 3;
  c.fit.max_iterations = 60;
  return c;
}

}  // namespace

TEST_CASE("window objective examples") {
  ForceTrace trace;
  SECTION("zero error") {
    for (int i = 0; i < 3; ++i) trace.push(i * 0.01, 0.3);
    CHECK(window_objective(trace, 0.3, 0.0) == 0.0);
  }
  SECTION("hand-computed two-sample rmse") {
    trace.push(0.0, 0.4);
    trace.push(0.01, 0.2);
    CHECK(window_objective(trace, 0.3, 0.0) == Catch::Approx(0.1));
  }
  SECTION("constant offset") {
    for (int i = 0; i < 50; ++i) trace.push(i * 0.01, 0.45);
    CHECK(window_objective(trace, 0.3) == Catch::Approx(0.15));
  }
  SECTION("empty trace faults") {
    CHECK_THROWS_AS(window_objective(trace, 0.3), SimulationFault);
  }
  SECTION("settle fraction discards the head") {
    trace.push(0.0, 10.0);  // transient sample
    for (int i = 0; i < 9; ++i) trace.push(0.01 * (i + 1), 0.3);
    CHECK(window_objective(trace, 0.3, 0.1) == 0.0);
  }
}

TEST_CASE("expected improvement examples") {
  const double xi = 1e-3;
  SECTION("deterministic improvement") {
    CHECK(expected_improvement(0.2, 0.0, 0.3, xi) == Catch::Approx(0.1 + xi));
  }
  SECTION("deterministic non-improvement") {
    CHECK(expected_improvement(1.3, 0.0, 0.3, xi) == 0.0);
  }
  SECTION("zero-mean-gap value is the normal density at zero") {
    double ei = expected_improvement(0.3 + xi, 1.0, 0.3, xi);
    CHECK(ei == Catch::Approx(1.0 / std::sqrt(2.0 * M_PI)).epsilon(1e-12));
    CHECK(ei == Catch::Approx(0.39894).margin(1e-5));
  }
  SECTION("negative variance faults") {
    CHECK_THROWS_AS(expected_improvement(0.0, -1.0, 0.0, xi), NumericalFault);
  }
}

TEST_CASE("expected improvement is non-negative and zero exactly when hopeless") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::uniform_real_distribution<double> s(0.0, 1.5);
  for (int t = 0; t < 500; ++t) {
    double ei = expected_improvement(u(rng), s(rng), u(rng), 1e-3);
    CHECK(ei >= 0.0);
  }
  CHECK(expected_improvement(0.301, 0.0, 0.3, 1e-3) == 0.0);  // mean == best + xi
  CHECK(expected_improvement(0.5, 0.0, 0.3, 1e-3) == 0.0);
  CHECK(expected_improvement(0.2999, 0.0, 0.3, 1e-3) > 0.0);
}

TEST_CASE("analytic ei matches a quick monte-carlo estimate") {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> value(-1.0, 1.0);
  std::uniform_real_distribution<double> sigma(0.05, 1.0);
  const double xi = 1e-3;
  for (int t = 0; t < 5; ++t) {
    double mean = value(rng), best = value(rng), sd = sigma(rng);
    double analytic = expected_improvement(mean, sd * sd, best, xi);
    std::mt19937_64 mc(200 + t);
    std::normal_distribution<double> normal(0.0, 1.0);
    double sum = 0.0;
    const int samples = 200000;
    for (int i = 0; i < samples / 2; ++i) {
      double z = normal(mc);
      sum += std::max(best - (mean + sd * z) + xi, 0.0);
      sum += std::max(best - (mean - sd * z) + xi, 0.0);
    }
    CHECK(analytic == Catch::Approx(sum / samples).margin(5e-3));
  }
}

TEST_CASE("acquisition maximizer finds the interior ei peak on a 1-d problem") {
  Eigen::MatrixXd x(3, 1);
  x << 0.15, 0.4, 0.85;
  Eigen::VectorXd y(3);
  y << 0.6, 0.3, 0.9;
  KernelHyperparams hp;
  hp.signal_variance = 1.0;
  hp.lengthscales = Eigen::VectorXd::Constant(1, 0.2);
  hp.noise_variance = 1e-4;
  GpModel model(x, y, hp);

  SearchSpace space;
  space.lower = {0.0};
  space.upper = {1.0};
  space.names = {"x"};

  const double best = 0.3, xi = 1e-3;
  // Dense grid oracle over 10^4 points.
  double oracle_x = 0.0, oracle_ei = -1.0;
  for (int i = 0; i < 10000; ++i) {
    Eigen::VectorXd q(1);
    q << i / 9999.0;
    auto [m, v] = model.posterior(q);
    double ei = expected_improvement(m, v, best, xi);
    if (ei > oracle_ei) {
      oracle_ei = ei;
      oracle_x = q[0];
    }
  }

  auto result = maximize_acquisition(model, space, best, xi, 42);
  CHECK_FALSE(result.exploration_fallback);
  CHECK(std::abs(result.point[0] - oracle_x) < 1e-2);
}

TEST_CASE("acquisition on a prior model falls back to exploration inside bounds") {
  GpModel model(4);
  SearchSpace space = SearchSpace::controller_gains();
  auto result = maximize_acquisition(model, space, 1.0, 1e-3, 7);
  CHECK(result.exploration_fallback);
  CHECK(space.contains(result.point));
}

TEST_CASE("acquisition respects bounds exactly when the peak sits on the boundary") {
  Eigen::MatrixXd x(3, 1);
  x << 0.1, 0.5, 0.9;
  Eigen::VectorXd y(3);
  y << 0.9, 0.5, 0.1;  // improving toward the upper bound
  KernelHyperparams hp;
  hp.signal_variance = 1.0;
  hp.lengthscales = Eigen::VectorXd::Constant(1, 0.4);
  hp.noise_variance = 1e-4;
  GpModel model(x, y, hp);

  SearchSpace space;
  space.lower = {0.0};
  space.upper = {100.0};
  space.names = {"g"};

  auto result = maximize_acquisition(model, space, 0.1, 1e-3, 3);
  CHECK(result.point[0] >= 0.0);
  CHECK(result.point[0] <= 100.0);
  CHECK(result.point[0] > 95.0);  // the walk reaches the boundary region
}

TEST_CASE("iterations to convergence") {
  TuningRun run;
  SECTION("final best reached at window 21") {
    for (int w = 1; w <= 60; ++w) {
      double best = (w < 21) ? 1.0 - 0.02 * w : 0.2;
      run.best_so_far.push_back(best);
    }
    // window 20 gives 0.6, far from 0.2; window 21 hits the final best
    CHECK(iterations_to_convergence(run) == 21);
  }
  SECTION("best found immediately") {
    run.best_so_far = {0.5, 0.5, 0.5};
    CHECK(iterations_to_convergence(run) == 1);
  }
  SECTION("constant sequence") {
    run.best_so_far = {1.0, 1.0};
    CHECK(iterations_to_convergence(run) == 1);
  }
  SECTION("within-tolerance early window counts") {
    run.best_so_far = {1.0, 0.104, 0.1};
    CHECK(iterations_to_convergence(run, 0.05) == 2);
    CHECK(iterations_to_convergence(run, 0.03) == 3);
  }
}

TEST_CASE("budget exactness across window/total combinations") {
  PlantParams plant = quiet_plant();
  DisturbanceSchedule schedule = square_schedule();
  for (auto [total, window] : std::vector<std::pair<double, double>>{
           {0.5, 0.5}, {1.7, 0.5}, {2.0, 0.5}, {3.99, 0.5}}) {
    ContinuousBoConfig cfg = small_bo(total, window);
    TuningRun run = run_continuous_bo(plant, schedule, feedforward_controller(plant, 0.3), cfg, 1);
    int expected = static_cast<int>(std::floor(total / window));
    INFO("total " << total << " window " << window);
    CHECK(static_cast<int>(run.observations.size()) == expected);
    CHECK(static_cast<int>(run.best_so_far.size()) == expected);
  }
}

TEST_CASE("single-window run returns that observation as best") {
  PlantParams plant = quiet_plant();
  ContinuousBoConfig cfg = small_bo(0.5, 0.5);
  TuningRun run =
      run_continuous_bo(plant, square_schedule(), feedforward_controller(plant, 0.3), cfg, 3);
  REQUIRE(run.observations.size() == 1);
  CHECK(run.best_objective == run.observations[0].objective);
  CHECK(run.best_gains == run.observations[0].gains);
}

TEST_CASE("same seed reproduces the run field for field") {
  PlantParams plant = quiet_plant();
  DisturbanceSchedule schedule = square_schedule();
  ContinuousBoConfig cfg = small_bo();
  ControllerConfig ctl = feedforward_controller(plant, 0.3);
  TuningRun a = run_continuous_bo(plant, schedule, ctl, cfg, 99);
  TuningRun b = run_continuous_bo(plant, schedule, ctl, cfg, 99);
  REQUIRE(a.observations.size() == b.observations.size());
  CHECK(a.observations == b.observations);
  CHECK(a.best_so_far == b.best_so_far);
  CHECK(a.best_objective == b.best_objective);
  CHECK(a.best_gains == b.best_gains);

  TuningRun c = run_continuous_bo(plant, schedule, ctl, cfg, 100);
  CHECK(a.observations != c.observations);
}

TEST_CASE("best-so-far is non-increasing and gains stay in bounds") {
  PlantParams plant = quiet_plant();
  ContinuousBoConfig cfg = small_bo(5.0, 0.5);
  TuningRun run =
      run_continuous_bo(plant, square_schedule(), feedforward_controller(plant, 0.3), cfg, 17);
  for (std::size_t i = 1; i < run.best_so_far.size(); ++i) {
    CHECK(run.best_so_far[i] <= run.best_so_far[i - 1]);
  }
  for (const auto& obs : run.observations) {
    Eigen::Vector4d g(obs.gains.kp, obs.gains.ki, obs.gains.kd, obs.gains.kdd);
    CHECK(cfg.space.contains(g));
  }
}

TEST_CASE("manual initial gains are deployed in the first window") {
  PlantParams plant = quiet_plant();
  ContinuousBoConfig cfg = small_bo(1.0, 0.5);
  cfg.initial_gains = ControllerGains{5.0, 2.0, 1.0, 0.5};
  TuningRun run =
      run_continuous_bo(plant, square_schedule(), feedforward_controller(plant, 0.3), cfg, 5);
  CHECK(run.observations[0].gains == *cfg.initial_gains);

  cfg.initial_gains = ControllerGains{500.0, 0.0, 0.0, 0.0};  // out of bounds
  CHECK_THROWS_AS(
      run_continuous_bo(plant, square_schedule(), feedforward_controller(plant, 0.3), cfg, 5),
      std::invalid_argument);
}

TEST_CASE("destabilizing gains complete the run with bounded objectives") {
  PlantParams plant = quiet_plant();
  ContinuousBoConfig cfg = small_bo(3.0, 0.5);
  cfg.initial_gains = ControllerGains{50.0, 50.0, 100.0, 100.0};
  TuningRun run =
      run_continuous_bo(plant, square_schedule(), feedforward_controller(plant, 0.3), cfg, 21);
  double cap = detail::saturation_cap_rmse(cfg.ref_force_n, plant.force_saturation_n);
  REQUIRE(run.observations.size() == 6);
  for (const auto& obs : run.observations) {
    CHECK(std::isfinite(obs.objective));
    CHECK(obs.objective >= 0.0);
    CHECK(obs.objective <= cap + 1e-12);
  }
}

TEST_CASE("a faulted window records the saturation-cap objective") {
  PlantParams plant = quiet_plant();
  Plant live(plant, square_schedule(), 5);
  ControllerConfig poisoned;
  poisoned.u_ff_mm_s = std::numeric_limits<double>::quiet_NaN();  // bypasses validate()
  auto record = detail::deploy_window(live, ControllerGains{}, poisoned, 0.3, 100);
  CHECK(record.fault);
  CHECK(detail::saturation_cap_rmse(0.3, 1.0) == Catch::Approx(0.7));
  CHECK(detail::saturation_cap_rmse(0.8, 1.0) == Catch::Approx(0.8));
}

TEST_CASE("plant state carries across windows") {
  // With a perfect feedforward controller the force stays near the reference
  // at a window boundary instead of restarting from zero.
  PlantParams plant = quiet_plant();
  plant.noise_std_n = 0.0;
  Plant live(plant, DisturbanceSchedule{}, 0);
  ControllerConfig ctl = feedforward_controller(plant, 0.3);
  auto first = detail::deploy_window(live, ControllerGains{}, ctl, 0.3, 500);
  auto second = detail::deploy_window(live, ControllerGains{}, ctl, 0.3, 50);
  CHECK(std::abs(second.trace.force_n.front() - 0.3) < 0.01);
  CHECK(first.trace.force_n.front() < 0.01);  // the very first sample started cold
}
