#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cinch/bus/motor_bus.hpp"
#include "cinch/grasp/config.hpp"
#include "cinch/grasp/types.hpp"
#include "cinch/sim/plant.hpp"
#include "cinch/telemetry/types.hpp"

namespace cinch::sim {

inline constexpr int kScenarioSchemaVersion = 1;

/// Parse failure with the offending line (1-based, 0 if unknown) and the
/// dotted field path, e.g. "plant.fruit.diameter_mm".
class ScenarioParseError : public std::runtime_error {
 public:
  ScenarioParseError(const std::string& source, std::size_t line, const std::string& field, const std::string& message);
  std::size_t line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

struct PullSpec {
  double force = 10.0;  // N target
  double ramp = 5.0;    // N/s
};

struct Step {
  enum class Kind { Open, AlignConfirm, Grasp, Hold, Detach, Pull, Wait, Abort, Release, SetCurrent, TorqueOff };
  Kind kind = Kind::Open;
  double seconds = 0.0;     // Hold, Wait
  PullSpec pull;            // Detach, Pull
  double current_ma = 0.0;  // SetCurrent
  bus::MotorRole motor = bus::MotorRole::Closer;  // TorqueOff
  std::size_t line = 0;
};

std::string_view to_string(Step::Kind kind);

struct Expectation {
  std::optional<grasp::OutcomeResult> outcome;
  std::optional<bool> detached;
  std::optional<bool> damaged;

  bool empty() const { return !outcome && !detached && !damaged; }
};

struct Scenario {
  std::string name = "scenario";
  std::string source = "<memory>";
  telemetry::FruitClass fruit_class = telemetry::FruitClass::Other;
  PlantConfig plant;
  grasp::GraspConfig grasp;
  bus::BusConfig bus;
  bool auto_calibrate = true;  // empty_closure_position: auto
  std::vector<Step> script = default_script();
  Expectation expect;

  static std::vector<Step> default_script();
};

Scenario parse_scenario(const std::string& text, const std::string& source = "<memory>");
Scenario load_scenario(const std::filesystem::path& path);

}  // namespace cinch::sim
