#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "forcetune/errors.hpp"

namespace forcetune {

// The four tunable gains the optimizer searches over.
struct ControllerGains {
  double kp = 0.0;   // mm/s per N
  double ki = 0.0;   // mm/s per N*s
  double kd = 0.0;   // mm/s per N/s, fast branch
  double kdd = 0.0;  // mm/s per N/s, slow branch

  std::array<double, 4> as_array() const { return {kp, ki, kd, kdd}; }
  static ControllerGains from_array(const std::array<double, 4>& a) {
    return {a[0], a[1], a[2], a[3]};
  }
  bool operator==(const ControllerGains&) const = default;
};

struct ControllerConfig {
  double tau_fast_s = 0.02;  // machine-motion scale derivative filter
  double tau_slow_s = 0.5;   // extrusion-system scale derivative filter
  double u_max_mm_s = 25.0;
  double u_ff_mm_s = 0.0;    // feedforward drive speed

  void validate() const {
    if (!(tau_fast_s > 0.0)) throw std::invalid_argument("controller: tau_fast_s must be > 0");
    if (!(tau_slow_s > 0.0)) throw std::invalid_argument("controller: tau_slow_s must be > 0");
    if (!(u_max_mm_s > 0.0)) throw std::invalid_argument("controller: u_max_mm_s must be > 0");
    if (!std::isfinite(u_ff_mm_s) || u_ff_mm_s < 0.0) {
      throw std::invalid_argument("controller: u_ff_mm_s must be finite and >= 0");
    }
  }
};

// PID with two differently filtered derivative branches. Each branch low-pass
// filters the backward-difference derivative of the error with its own time
// constant; the integrator is clamped so ki*integrator stays within +-u_max.
class Controller {
 public:
  Controller(ControllerGains gains, ControllerConfig config)
      : gains_(gains), config_(config) {}

  double step(double error_n, double ts_s) {
    if (!std::isfinite(error_n)) throw SimulationFault("controller: non-finite error");
    if (!(ts_s > 0.0)) throw std::invalid_argument("controller: ts_s must be > 0");
    if (!initialized_) {
      prev_error_ = error_n;  // derivatives start at 0
      initialized_ = true;
    }
    integrator_ += error_n * ts_s;
    if (gains_.ki > 0.0) {
      double limit = config_.u_max_mm_s / gains_.ki;
      integrator_ = std::clamp(integrator_, -limit, limit);
    }
    double diff = (error_n - prev_error_) / ts_s;
    double alpha_fast = ts_s / (config_.tau_fast_s + ts_s);
    double alpha_slow = ts_s / (config_.tau_slow_s + ts_s);
    deriv_fast_ = (1.0 - alpha_fast) * deriv_fast_ + alpha_fast * diff;
    deriv_slow_ = (1.0 - alpha_slow) * deriv_slow_ + alpha_slow * diff;
    prev_error_ = error_n;

    double u = config_.u_ff_mm_s + gains_.kp * error_n + gains_.ki * integrator_ +
               gains_.kd * deriv_fast_ + gains_.kdd * deriv_slow_;
    if (!std::isfinite(u)) throw SimulationFault("controller: non-finite output");
    return std::clamp(u, 0.0, config_.u_max_mm_s);
  }

  void reset() {
    integrator_ = 0.0;
    deriv_fast_ = 0.0;
    deriv_slow_ = 0.0;
    prev_error_ = 0.0;
    initialized_ = false;
  }

  double integrator() const { return integrator_; }
  double deriv_fast() const { return deriv_fast_; }
  double deriv_slow() const { return deriv_slow_; }
  bool initialized() const { return initialized_; }
  const ControllerGains& gains() const { return gains_; }
  const ControllerConfig& config() const { return config_; }

 private:
  ControllerGains gains_;
  ControllerConfig config_;
  double integrator_ = 0.0;
  double deriv_fast_ = 0.0;
  double deriv_slow_ = 0.0;
  double prev_error_ = 0.0;
  bool initialized_ = false;
};

}  // namespace forcetune
