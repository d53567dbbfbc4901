#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cinch/grasp/controller.hpp"
#include "cinch/sim/scenario.hpp"
#include "cinch/sim/sim_clock.hpp"
#include "cinch/sim/virtual_bus.hpp"
#include "cinch/telemetry/types.hpp"

namespace cinch::sim {

/// Virtual bus, motor bus, sim clock and controller wired together. The
/// controller publishes plant contact and pull forces in every sample.
class SimRig {
 public:
  SimRig(const PlantConfig& plant, const grasp::GraspConfig& grasp, const bus::BusConfig& bus);

  VirtualBus& plant() { return *plant_; }
  bus::MotorBus& bus() { return bus_; }
  SimClock& clock() { return clock_; }
  grasp::GraspController& controller() { return controller_; }

 private:
  SimRig(std::unique_ptr<VirtualBus> plant, const grasp::GraspConfig& grasp, const bus::BusConfig& bus);

  VirtualBus* plant_;  // owned by bus_
  bus::MotorBus bus_;
  SimClock clock_;
  grasp::GraspController controller_;
};

struct RunOptions {
  std::function<void(const telemetry::TelemetrySample&)> on_sample;
  std::function<void(const grasp::ControllerEvent&)> on_event;
  bool keep_samples = true;
  /// Skips calibration when the value is already known (batches share one).
  std::optional<double> empty_closure_position_rev;
};

struct ScenarioResult {
  std::string name;
  std::vector<telemetry::TelemetrySample> samples;
  std::vector<grasp::ControllerEvent> events;
  std::optional<telemetry::HarvestRecord> record;  // last completed record
  std::vector<telemetry::HarvestRecord> records;
  std::optional<grasp::GraspOutcome> outcome;
  std::optional<grasp::CalibrationResult> calibration;
  PlantState final_state;
  std::uint64_t antagonism_violations = 0;
  std::vector<std::string> notes;    // skipped steps and similar
  std::optional<std::string> error;  // e.g. LostDuringDetach
  std::vector<std::string> mismatches;

  bool expectation_met() const { return mismatches.empty(); }
};

/// Closes once on empty air with the scenario's hardware and returns the
/// settle position less the calibration margin. The plant is used as given,
/// so an object left in the pockets makes calibration fail with NotSettled.
grasp::CalibrationResult calibrate(const PlantConfig& plant, const grasp::GraspConfig& grasp,
                                   const bus::BusConfig& bus);

/// Same, on a copy of the scenario's plant with the fruit removed.
grasp::CalibrationResult calibrate_empty(const Scenario& scenario);

ScenarioResult run_scenario(const Scenario& scenario, const RunOptions& options = {});

/// Telemetry log of a run as JSONL text, byte-for-byte what the CLI writes.
std::string log_text(const std::vector<telemetry::TelemetrySample>& samples);
std::string events_text(const std::vector<grasp::ControllerEvent>& events);

}  // namespace cinch::sim
