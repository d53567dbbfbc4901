#pragma once

#include <optional>
#include <string_view>

#include "cinch/grasp/types.hpp"

namespace cinch::telemetry {

inline constexpr int kSchemaVersion = 1;

struct MotorSample {
  double current_ma = 0.0;
  double velocity_rpm = 0.0;
  double position_rev = 0.0;

  friend bool operator==(const MotorSample&, const MotorSample&) = default;
};

/// One control-loop sample. Force fields only exist on simulated runs.
struct TelemetrySample {
  double time = 0.0;  // s
  grasp::GraspPhase phase;
  MotorSample closer;
  MotorSample opener;
  std::optional<double> contact_force;  // N
  std::optional<double> pull_force;     // N

  friend bool operator==(const TelemetrySample&, const TelemetrySample&) = default;
};

enum class FruitClass : std::uint8_t { Medium, Small, Other };
std::string_view to_string(FruitClass c);
std::optional<FruitClass> parse_fruit_class(std::string_view text);

struct HarvestRecord {
  FruitClass fruit_class = FruitClass::Other;
  std::optional<double> fruit_diameter_mm;
  grasp::OutcomeResult outcome = grasp::OutcomeResult::Timeout;
  std::optional<double> peak_pull_force;  // N, sim only
  bool damaged_on_harvest = false;
  std::optional<bool> bruised_day5;  // unknown until inspected
  bool detached = false;
  std::optional<double> peak_current_deviation_ma;  // hardware proxy for pull
  std::optional<double> peak_contact_force;         // N, sim only

  friend bool operator==(const HarvestRecord&, const HarvestRecord&) = default;
};

}  // namespace cinch::telemetry
