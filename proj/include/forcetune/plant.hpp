#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <random>
#include <stdexcept>

#include "forcetune/errors.hpp"
#include "forcetune/toolpath.hpp"

namespace forcetune {

// First-order extrusion-force model: tau * dF/dt = -F + k_f * u^beta * d(t),
// with command dead time, output saturation, and additive measurement noise.
struct PlantParams {
  double time_constant_s = 0.15;   // melt-pressure lag tau
  double gain_coeff = 0.05;        // k_f, N per (mm/s)^flow_exponent
  double flow_exponent = 0.8;      // beta, sub-linear flow response
  double dead_time_s = 0.05;       // command-to-force delay
  double force_saturation_n = 1.0; // physical cap
  double noise_std_n = 0.005;      // measurement noise; 0 = noise-free mode
  double sample_period_s = 0.01;   // Ts

  void validate() const {
    if (!(time_constant_s > 0.0)) throw std::invalid_argument("plant: time_constant_s must be > 0");
    if (!(dead_time_s >= 0.0)) throw std::invalid_argument("plant: dead_time_s must be >= 0");
    if (!(force_saturation_n > 0.0)) {
      throw std::invalid_argument("plant: force_saturation_n must be > 0");
    }
    if (!(sample_period_s > 0.0)) throw std::invalid_argument("plant: sample_period_s must be > 0");
    if (!(flow_exponent > 0.0 && flow_exponent <= 1.0)) {
      throw std::invalid_argument("plant: flow_exponent must be in (0,1]");
    }
    if (!(noise_std_n >= 0.0)) throw std::invalid_argument("plant: noise_std_n must be >= 0");
    // Explicit Euler stability bound.
    if (!(sample_period_s < 2.0 * time_constant_s)) {
      throw std::invalid_argument("plant: sample_period_s must be < 2*time_constant_s");
    }
  }

  double steady_state_force(double drive_speed_mm_s) const {
    return gain_coeff * std::pow(drive_speed_mm_s, flow_exponent);
  }

  // Inverse of the noiseless steady-state map.
  double drive_for_force(double force_n) const {
    if (force_n <= 0.0) return 0.0;
    return std::pow(force_n / gain_coeff, 1.0 / flow_exponent);
  }
};

class Plant {
 public:
  Plant(PlantParams params, DisturbanceSchedule schedule, std::uint64_t seed)
      : params_(params), schedule_(std::move(schedule)), rng_(seed) {
    params_.validate();
    auto delay_steps =
        static_cast<std::size_t>(std::llround(params_.dead_time_s / params_.sample_period_s));
    command_queue_.assign(delay_steps, 0.0);
  }

  // Advances one sample period and returns the measured (noisy) force.
  double step(double drive_speed_mm_s) {
    if (!std::isfinite(drive_speed_mm_s) || drive_speed_mm_s < 0.0) {
      throw SimulationFault("plant: drive speed must be finite and non-negative");
    }
    double delayed = drive_speed_mm_s;
    if (!command_queue_.empty()) {
      delayed = command_queue_.front();
      command_queue_.pop_front();
      command_queue_.push_back(drive_speed_mm_s);
    }
    double dip = schedule_.dip_factor(time_s_);
    double target = params_.steady_state_force(delayed) * dip;
    force_n_ += params_.sample_period_s / params_.time_constant_s * (target - force_n_);
    force_n_ = std::clamp(force_n_, 0.0, params_.force_saturation_n);

    double measured = force_n_;
    if (params_.noise_std_n > 0.0) {
      measured += std::normal_distribution<double>(0.0, params_.noise_std_n)(rng_);
    }
    measured = std::clamp(measured, 0.0, params_.force_saturation_n);
    measured_n_ = measured;
    time_s_ += params_.sample_period_s;
    return measured;
  }

  double time_s() const { return time_s_; }
  double noiseless_force_n() const { return force_n_; }
  double last_measured_n() const { return measured_n_; }
  const PlantParams& params() const { return params_; }

 private:
  PlantParams params_;
  DisturbanceSchedule schedule_;
  std::deque<double> command_queue_;  // length = round(dead_time/Ts)
  double force_n_ = 0.0;
  double time_s_ = 0.0;
  double measured_n_ = 0.0;
  std::mt19937_64 rng_;
};

}  // namespace forcetune
