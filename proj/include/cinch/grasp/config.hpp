#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

namespace cinch::grasp {

struct GraspConfig {
  double reference_current_ma = 100.0;
  double current_band_ma = 10.0;
  double velocity_epsilon_rpm = 0.5;
  double hold_window_ms = 200.0;
  double enclose_timeout_ms = 5000.0;
  std::optional<double> empty_closure_position_rev;  // from calibration
  double release_backoff_rev = 0.02;  // opener travel below this counts as "did not move"
  double opener_open_current_ma = 60.0;
  double loop_rate_hz = 50.0;
  double slip_delta_rev = 0.05;
  double calibration_margin = 0.05;
  double detach_timeout_ms = 10000.0;
  double current_cap_ma = 150.0;

  double period_s() const { return 1.0 / loop_rate_hz; }
  int hold_samples() const { return static_cast<int>(std::lround(hold_window_ms * loop_rate_hz / 1000.0)); }

  void validate() const {
    if (!(loop_rate_hz > 0.0)) throw std::invalid_argument("loop_rate must be > 0");
    if (!(reference_current_ma > 0.0) || reference_current_ma > current_cap_ma) {
      throw std::invalid_argument("reference_current must be in (0, " + std::to_string(current_cap_ma) + "] mA");
    }
    if (!(velocity_epsilon_rpm > 0.0)) throw std::invalid_argument("velocity_epsilon must be > 0");
    if (hold_window_ms < 2000.0 / loop_rate_hz) throw std::invalid_argument("hold_window must cover >= 2 loop periods");
    if (!(current_band_ma > 0.0)) throw std::invalid_argument("current_band must be > 0");
    if (!(enclose_timeout_ms > 0.0)) throw std::invalid_argument("enclose_timeout must be > 0");
    if (opener_open_current_ma < 0.0 || opener_open_current_ma > current_cap_ma) {
      throw std::invalid_argument("opener_open_current out of range");
    }
    if (empty_closure_position_rev && !(*empty_closure_position_rev > 0.0)) {
      throw std::invalid_argument("empty_closure_position must be > 0");
    }
    if (!(slip_delta_rev > 0.0)) throw std::invalid_argument("slip_delta must be > 0");
    if (calibration_margin < 0.0 || calibration_margin >= 1.0) {
      throw std::invalid_argument("calibration_margin must be in [0, 1)");
    }
  }
};

}  // namespace cinch::grasp
