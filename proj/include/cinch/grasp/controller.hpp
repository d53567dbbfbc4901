#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cinch/bus/motor_bus.hpp"
#include "cinch/grasp/config.hpp"
#include "cinch/grasp/types.hpp"
#include "cinch/telemetry/types.hpp"

namespace cinch::grasp {

/// Time source and pacing for the control loop.
class ControlClock {
 public:
  virtual ~ControlClock() = default;
  virtual double now() = 0;  // s, strictly increasing across periods
  /// Blocks (or simulates) until the next tick boundary.
  virtual void wait_period(double period_s) = 0;
};

/// Paces ticks against the steady clock.
class WallClock : public ControlClock {
 public:
  WallClock();
  double now() override;
  void wait_period(double period_s) override;

 private:
  std::chrono::steady_clock::time_point start_;
  std::chrono::steady_clock::time_point next_;
};

class PhaseError : public std::runtime_error {
 public:
  PhaseError(GraspPhase phase, const std::string& what) : std::runtime_error(what), phase_(phase) {}
  GraspPhase phase() const { return phase_; }

 private:
  GraspPhase phase_;
};

class GraspError : public std::runtime_error {
 public:
  enum class Kind { Timeout, LostDuringDetach, DetachTimeout, NotSettled, Bus, Aborted };
  GraspError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct ControllerEvent {
  enum class Type { Transition, Ack, Reject, Hold, Warning, Outcome, Record, BusFault };

  Type type = Type::Warning;
  double time = 0.0;
  GraspPhase from;
  GraspPhase phase;  // phase after the event
  std::optional<std::uint64_t> request_id;
  std::optional<CommandKind> command;
  std::optional<HoldEvent> hold;
  std::optional<GraspOutcome> outcome;
  std::optional<telemetry::HarvestRecord> record;
  std::string message;
};

std::string_view to_string(ControllerEvent::Type type);

struct ControllerSnapshot {
  GraspPhase phase;
  double time = 0.0;
  bus::MotorState closer;
  bus::MotorState opener;
  double reference_current_ma = 0.0;
  double current_cap_ma = 0.0;
  std::uint64_t ticks = 0;
};

struct CalibrationResult {
  double settle_position_rev = 0.0;
  double empty_closure_position_rev = 0.0;
};

/// Five-phase harvest state machine. One thread drives tick(); commands from
/// any thread are queued by submit() and applied at the next tick boundary.
class GraspController {
 public:
  using SampleSink = std::function<void(const telemetry::TelemetrySample&)>;
  using EventSink = std::function<void(const ControllerEvent&)>;
  /// Adds sim-only fields to a sample before publication.
  using SampleDecorator = std::function<void(telemetry::TelemetrySample&)>;
  /// Reports whether the fruit has separated from the stem (sim).
  using DetachProbe = std::function<bool()>;

  GraspController(bus::MotorBus& bus, ControlClock& clock, GraspConfig config = {});

  const GraspConfig& config() const { return config_; }
  void set_empty_closure_position(std::optional<double> rev);
  void set_sample_decorator(SampleDecorator d) { decorator_ = std::move(d); }
  void set_detach_probe(DetachProbe p) { detach_probe_ = std::move(p); }

  int subscribe_samples(SampleSink sink);
  int subscribe_events(EventSink sink);
  void unsubscribe(int id);

  /// Torque off, current mode, zero goals, torque on for both motors.
  void initialize();

  /// Thread-safe. Returns the request id (assigned if zero).
  std::uint64_t submit(Command command);

  /// Reads state, applies queued commands, advances the phase logic, publishes
  /// one sample, then waits one period on the clock.
  void tick();

  // Blocking helpers for the loop owner. Each one drives tick().
  void open_gripper();
  void confirm_align();
  GraspOutcome close_grasp();
  std::vector<HoldEvent> monitor_secured(double seconds);
  /// `start_pull` is called once Detaching is entered (operator or sim script).
  telemetry::HarvestRecord detach_and_release(const std::function<void()>& start_pull);
  void abort();
  CalibrationResult calibrate_empty_closure();
  /// Torque switch with a warning when the grip would be dropped.
  void torque(bus::MotorRole motor, bool on);

  GraspPhase phase() const;
  ControllerSnapshot snapshot() const;
  std::optional<GraspOutcome> last_outcome() const;
  std::vector<telemetry::HarvestRecord> records() const;
  std::uint64_t ticks() const { return ticks_; }

 private:
  enum class Activity { None, Opening, Enclosing, Calibrating };

  void apply(const Command& cmd, double t);
  void reject(const Command& cmd, double t, const std::string& why);
  void ack(const Command& cmd, double t);
  void transition(GraspPhase to, double t, std::optional<std::uint64_t> request_id = std::nullopt,
                  std::string note = {});
  void emit(ControllerEvent e);
  void warn(double t, std::string message);

  void set_goals(double closer_ma, double opener_ma, double t);
  void zero_goals(double t);

  void begin_opening(double t);
  void begin_enclosing(double t, bool calibrating);
  void begin_detaching(double t);
  void begin_releasing(double t, std::optional<std::uint64_t> request_id = std::nullopt);
  void update_opening(double t);
  void update_enclosing(double t);
  void update_monitor(double t);
  void finish_outcome(OutcomeResult result, double t);
  void finalize_record(double t);
  void fault(FaultReason reason, double t, std::optional<std::uint64_t> request_id = std::nullopt);

  template <typename Pred>
  void run_until(Pred done, double max_seconds, const char* what);

  bus::MotorBus& bus_;
  ControlClock& clock_;
  GraspConfig config_;
  SampleDecorator decorator_;
  DetachProbe detach_probe_;

  mutable std::mutex mutex_;  // phase, snapshot, records, queue, sinks
  std::deque<Command> queue_;
  std::uint64_t next_request_id_ = 1;
  std::map<int, SampleSink> sample_sinks_;
  std::map<int, EventSink> event_sinks_;
  int next_sink_id_ = 1;

  GraspPhase phase_;
  bus::MotorState closer_;
  bus::MotorState opener_;
  double now_ = 0.0;
  std::uint64_t ticks_ = 0;
  double goal_closer_ = 0.0;
  double goal_opener_ = 0.0;

  Activity activity_ = Activity::None;
  double activity_start_ = 0.0;
  double start_position_ = 0.0;  // opener at open start, closer at enclose start
  int settle_count_ = 0;
  int band_count_ = 0;
  double slip_reference_ = 0.0;
  std::vector<HoldEvent> hold_log_;
  std::optional<HoldEvent> last_hold_;
  std::optional<double> calibration_settle_;
  bool detach_requested_ = false;

  std::optional<GraspOutcome> last_outcome_;
  std::optional<telemetry::HarvestRecord> pending_;
  std::vector<telemetry::HarvestRecord> records_;
  std::optional<double> peak_deviation_;  // set once Detaching is entered
  std::optional<double> peak_pull_;
  std::optional<double> peak_contact_;
};

}  // namespace cinch::grasp
