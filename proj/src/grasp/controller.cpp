#include "cinch/grasp/controller.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>

namespace cinch::grasp {
namespace {

using K = GraspPhase::Kind;
using bus::MotorRole;

constexpr double kAntagonismLimitMa = 10.0;

std::string fmt(double v, int precision = 3) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(precision);
  os << v;
  return os.str();
}

}  // namespace

std::string_view to_string(ControllerEvent::Type type) {
  using T = ControllerEvent::Type;
  switch (type) {
    case T::Transition: return "transition";
    case T::Ack: return "ack";
    case T::Reject: return "reject";
    case T::Hold: return "hold";
    case T::Warning: return "warning";
    case T::Outcome: return "outcome";
    case T::Record: return "record";
    case T::BusFault: return "bus_fault";
  }
  return "?";
}

WallClock::WallClock() : start_(std::chrono::steady_clock::now()), next_(start_) {}

double WallClock::now() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
}

void WallClock::wait_period(double period_s) {
  next_ += std::chrono::duration_cast<std::chrono::steady_clock::duration>(std::chrono::duration<double>(period_s));
  const auto now = std::chrono::steady_clock::now();
  if (next_ < now) next_ = now;  // overran: skip rather than burst
  std::this_thread::sleep_until(next_);
}

GraspController::GraspController(bus::MotorBus& bus, ControlClock& clock, GraspConfig config)
    : bus_(bus), clock_(clock), config_(std::move(config)) {
  config_.current_cap_ma = std::min(config_.current_cap_ma, bus_.config().current_cap_ma);
  config_.validate();
  now_ = clock_.now();
}

void GraspController::set_empty_closure_position(std::optional<double> rev) {
  GraspConfig next = config_;
  next.empty_closure_position_rev = rev;
  next.validate();
  config_ = next;
}

int GraspController::subscribe_samples(SampleSink sink) {
  std::lock_guard lock(mutex_);
  const int id = next_sink_id_++;
  sample_sinks_.emplace(id, std::move(sink));
  return id;
}

int GraspController::subscribe_events(EventSink sink) {
  std::lock_guard lock(mutex_);
  const int id = next_sink_id_++;
  event_sinks_.emplace(id, std::move(sink));
  return id;
}

void GraspController::unsubscribe(int id) {
  std::lock_guard lock(mutex_);
  sample_sinks_.erase(id);
  event_sinks_.erase(id);
}

void GraspController::initialize() {
  for (MotorRole role : {MotorRole::Closer, MotorRole::Opener}) {
    bus_.torque(role, false);
    bus_.set_operating_mode(role, bus::OperatingMode::CurrentControl);
    bus_.set_goal_current(role, 0.0);
  }
  goal_closer_ = goal_opener_ = 0.0;
  for (MotorRole role : {MotorRole::Closer, MotorRole::Opener}) bus_.torque(role, true);
  const auto c = bus_.read_state(MotorRole::Closer);
  const auto o = bus_.read_state(MotorRole::Opener);
  std::lock_guard lock(mutex_);
  closer_ = c;
  opener_ = o;
}

std::uint64_t GraspController::submit(Command command) {
  std::lock_guard lock(mutex_);
  if (command.request_id == 0) command.request_id = next_request_id_++;
  else next_request_id_ = std::max(next_request_id_, command.request_id + 1);
  queue_.push_back(command);
  return command.request_id;
}

GraspPhase GraspController::phase() const {
  std::lock_guard lock(mutex_);
  return phase_;
}

ControllerSnapshot GraspController::snapshot() const {
  std::lock_guard lock(mutex_);
  return {phase_, now_, closer_, opener_, config_.reference_current_ma, config_.current_cap_ma, ticks_};
}

std::optional<GraspOutcome> GraspController::last_outcome() const {
  std::lock_guard lock(mutex_);
  return last_outcome_;
}

std::vector<telemetry::HarvestRecord> GraspController::records() const {
  std::lock_guard lock(mutex_);
  return records_;
}

// --- events -------------------------------------------------------------

void GraspController::emit(ControllerEvent e) {
  std::vector<EventSink> sinks;
  {
    std::lock_guard lock(mutex_);
    sinks.reserve(event_sinks_.size());
    for (const auto& [id, sink] : event_sinks_) sinks.push_back(sink);
  }
  for (const auto& sink : sinks) sink(e);
}

void GraspController::warn(double t, std::string message) {
  ControllerEvent e;
  e.type = ControllerEvent::Type::Warning;
  e.time = t;
  e.from = e.phase = phase_;
  e.message = std::move(message);
  emit(std::move(e));
}

void GraspController::transition(GraspPhase to, double t, std::optional<std::uint64_t> request_id, std::string note) {
  if (!transition_allowed(phase_, to)) {
    throw std::logic_error("illegal transition " + to_string(phase_) + " -> " + to_string(to));
  }
  ControllerEvent e;
  e.type = ControllerEvent::Type::Transition;
  e.time = t;
  e.from = phase_;
  e.phase = to;
  e.request_id = request_id;
  e.message = std::move(note);
  {
    std::lock_guard lock(mutex_);
    phase_ = to;
  }
  emit(std::move(e));
}

void GraspController::ack(const Command& cmd, double t) {
  ControllerEvent e;
  e.type = ControllerEvent::Type::Ack;
  e.time = t;
  e.from = e.phase = phase_;
  e.request_id = cmd.request_id;
  e.command = cmd.kind;
  emit(std::move(e));
}

void GraspController::reject(const Command& cmd, double t, const std::string& why) {
  ControllerEvent e;
  e.type = ControllerEvent::Type::Reject;
  e.time = t;
  e.from = e.phase = phase_;
  e.request_id = cmd.request_id;
  e.command = cmd.kind;
  e.message = why;
  emit(std::move(e));
}

// --- actuation ----------------------------------------------------------

void GraspController::set_goals(double closer_ma, double opener_ma, double t) {
  if (closer_ma > kAntagonismLimitMa && opener_ma > kAntagonismLimitMa) {
    throw std::logic_error("both motors commanded to pull");
  }
  // Release the antagonist before loading the agonist.
  const bool closer_first = closer_ma <= goal_closer_;
  const std::pair<MotorRole, double> order[2] = {
      closer_first ? std::pair{MotorRole::Closer, closer_ma} : std::pair{MotorRole::Opener, opener_ma},
      closer_first ? std::pair{MotorRole::Opener, opener_ma} : std::pair{MotorRole::Closer, closer_ma},
  };
  for (const auto& [role, ma] : order) {
    try {
      bus_.set_goal_current(role, ma);
    } catch (const bus::BusError& err) {
      ControllerEvent e;
      e.type = ControllerEvent::Type::BusFault;
      e.time = t;
      e.from = e.phase = phase_;
      e.message = std::string(bus::to_string(role)) + ": " + err.what();
      emit(std::move(e));
    }
    // Track the commanded value even on failure so ordering stays conservative.
    (role == MotorRole::Closer ? goal_closer_ : goal_opener_) = ma;
  }
}

void GraspController::zero_goals(double t) { set_goals(0.0, 0.0, t); }

// --- commands -----------------------------------------------------------

void GraspController::apply(const Command& cmd, double t) {
  if (!command_allowed(phase_, cmd.kind)) {
    reject(cmd, t, std::string(to_string(cmd.kind)) + " not allowed in " + to_string(phase_));
    return;
  }
  switch (cmd.kind) {
    case CommandKind::Abort:
      ack(cmd, t);
      if (phase_.is(K::Idle) && activity_ == Activity::None) return;
      if (phase_.is(K::Fault)) {
        activity_ = Activity::None;
        zero_goals(t);
        transition(GraspPhase{K::Idle}, t, cmd.request_id, "acknowledged");
        return;
      }
      zero_goals(t);
      if (activity_ == Activity::Enclosing) finish_outcome(OutcomeResult::Aborted, t);
      if (pending_) {
        pending_->outcome = OutcomeResult::Aborted;
        finalize_record(t);
      }
      fault(FaultReason::Aborted, t, cmd.request_id);
      return;
    case CommandKind::Open:
      ack(cmd, t);
      begin_opening(t);
      return;
    case CommandKind::AlignConfirm:
      ack(cmd, t);
      transition(GraspPhase{K::AlignPending}, t, cmd.request_id);
      return;
    case CommandKind::Grasp:
      ack(cmd, t);
      begin_enclosing(t, false);
      return;
    case CommandKind::Release:
      ack(cmd, t);
      if (phase_.is(K::Secured)) {
        begin_detaching(t);
      } else if (phase_.is(K::Detaching)) {
        detach_requested_ = true;
      } else {
        begin_releasing(t, cmd.request_id);
      }
      return;
    case CommandKind::SetCurrent:
      if (!(cmd.current_ma > 0.0) || cmd.current_ma > config_.current_cap_ma) {
        reject(cmd, t, "current " + fmt(cmd.current_ma, 1) + " mA outside (0, " + fmt(config_.current_cap_ma, 1) + "]");
        return;
      }
      ack(cmd, t);
      {
        std::lock_guard lock(mutex_);
        config_.reference_current_ma = cmd.current_ma;
      }
      if (phase_.is(K::Enclosing) || phase_.is(K::Secured) || phase_.is(K::Detaching)) {
        set_goals(cmd.current_ma, 0.0, t);
      }
      return;
  }
}

// --- phase logic --------------------------------------------------------

void GraspController::begin_opening(double t) {
  set_goals(0.0, config_.opener_open_current_ma, t);
  activity_ = Activity::Opening;
  activity_start_ = t;
  start_position_ = opener_.position_rev;
  settle_count_ = 0;
}

void GraspController::begin_enclosing(double t, bool calibrating) {
  set_goals(config_.reference_current_ma, 0.0, t);
  activity_ = calibrating ? Activity::Calibrating : Activity::Enclosing;
  activity_start_ = t;
  start_position_ = closer_.position_rev;
  settle_count_ = band_count_ = 0;
  calibration_settle_.reset();
  peak_pull_.reset();
  peak_contact_.reset();
  peak_deviation_.reset();
  transition(GraspPhase{K::Enclosing}, t, std::nullopt, calibrating ? "calibration" : "");
}

void GraspController::begin_detaching(double t) {
  transition(GraspPhase{K::Detaching}, t);
  activity_start_ = t;
  detach_requested_ = false;
  peak_deviation_ = 0.0;  // a stalled closer can hold the reference exactly
}

void GraspController::begin_releasing(double t, std::optional<std::uint64_t> request_id) {
  transition(GraspPhase{K::Releasing}, t, request_id);
  begin_opening(t);
}

void GraspController::fault(FaultReason reason, double t, std::optional<std::uint64_t> request_id) {
  activity_ = Activity::None;
  if (phase_.is(K::Fault)) return;
  transition(GraspPhase::fault(reason), t, request_id);
}

void GraspController::update_opening(double t) {
  const int n = config_.hold_samples();
  settle_count_ = std::abs(opener_.velocity_rpm) < config_.velocity_epsilon_rpm ? settle_count_ + 1 : 0;
  if (settle_count_ >= n) {
    activity_ = Activity::None;
    const double travel = std::abs(opener_.position_rev - start_position_);
    // Re-open from Open (possibly confirmed meanwhile): nothing to report.
    if (!phase_.is(K::Idle) && !phase_.is(K::Releasing)) return;
    if (travel < config_.release_backoff_rev) {
      warn(t, "opener settled after " + fmt(travel, 4) + " rev; check for a jam");
    }
    transition(GraspPhase{K::Open}, t);
    finalize_record(t);
    return;
  }
  if ((t - activity_start_) * 1000.0 >= config_.enclose_timeout_ms) {
    zero_goals(t);
    fault(FaultReason::Timeout, t);
  }
}

void GraspController::update_enclosing(double t) {
  const int n = config_.hold_samples();
  const double travel = closer_.position_rev - start_position_;
  const bool settled = std::abs(closer_.velocity_rpm) < config_.velocity_epsilon_rpm;
  const bool in_band = std::abs(closer_.current_ma - config_.reference_current_ma) <= config_.current_band_ma;
  settle_count_ = settled ? settle_count_ + 1 : 0;
  band_count_ = settled && in_band ? band_count_ + 1 : 0;

  if (activity_ == Activity::Calibrating) {
    if (settle_count_ >= n) {
      calibration_settle_ = travel;
      zero_goals(t);
      fault(FaultReason::EmptyClosure, t);
      return;
    }
  } else if (settle_count_ >= n && config_.empty_closure_position_rev &&
             travel >= *config_.empty_closure_position_rev) {
    finish_outcome(OutcomeResult::EmptyClosure, t);
    return;
  } else if (band_count_ >= n) {
    finish_outcome(OutcomeResult::Secured, t);
    return;
  }

  if ((t - activity_start_) * 1000.0 >= config_.enclose_timeout_ms) {
    // Still creeping at the deadline means the pockets could not envelop it.
    const OutcomeResult result = settle_count_ > 0 ? OutcomeResult::Timeout : OutcomeResult::Oversize;
    if (activity_ == Activity::Calibrating) {
      zero_goals(t);
      fault(result == OutcomeResult::Oversize ? FaultReason::Oversize : FaultReason::Timeout, t);
      return;
    }
    finish_outcome(result, t);
  }
}

void GraspController::finish_outcome(OutcomeResult result, double t) {
  GraspOutcome outcome;
  outcome.result = result;
  outcome.steady_current_ma = closer_.current_ma;
  outcome.closure_position_rev = closer_.position_rev - start_position_;
  outcome.elapsed_ms = (t - activity_start_) * 1000.0;
  {
    std::lock_guard lock(mutex_);
    last_outcome_ = outcome;
  }
  activity_ = Activity::None;

  ControllerEvent e;
  e.type = ControllerEvent::Type::Outcome;
  e.time = t;
  e.from = e.phase = phase_;
  e.outcome = outcome;
  emit(std::move(e));

  telemetry::HarvestRecord record;
  record.outcome = result;
  pending_ = record;

  switch (result) {
    case OutcomeResult::Secured:
      slip_reference_ = closer_.position_rev;
      last_hold_.reset();
      transition(GraspPhase{K::Secured}, t);
      return;
    case OutcomeResult::EmptyClosure:
    case OutcomeResult::Oversize:
    case OutcomeResult::Timeout:
      zero_goals(t);
      finalize_record(t);
      fault(result == OutcomeResult::EmptyClosure ? FaultReason::EmptyClosure
            : result == OutcomeResult::Oversize   ? FaultReason::Oversize
                                                  : FaultReason::Timeout,
            t);
      return;
    case OutcomeResult::Aborted:
      return;  // caller finalises and faults
  }
}

void GraspController::update_monitor(double t) {
  const double travel = closer_.position_rev - start_position_;
  HoldEvent ev = HoldEvent::Holding;
  if (config_.empty_closure_position_rev && travel >= *config_.empty_closure_position_rev) {
    ev = HoldEvent::Lost;
  } else if (closer_.position_rev - slip_reference_ > config_.slip_delta_rev) {
    ev = HoldEvent::SlipWarning;
    slip_reference_ = closer_.position_rev;
  }
  hold_log_.push_back(ev);
  if (ev != HoldEvent::Holding || last_hold_ != ev) {
    ControllerEvent e;
    e.type = ControllerEvent::Type::Hold;
    e.time = t;
    e.from = e.phase = phase_;
    e.hold = ev;
    e.message = "travel " + fmt(travel, 4) + " rev";
    emit(std::move(e));
  }
  last_hold_ = ev;

  if (ev == HoldEvent::Lost) {
    zero_goals(t);
    finalize_record(t);
    fault(FaultReason::Lost, t);
    return;
  }
  if (!phase_.is(K::Detaching)) return;

  peak_deviation_ = std::max(peak_deviation_.value_or(0.0), std::abs(closer_.current_ma - config_.reference_current_ma));
  const bool detached = detach_requested_ || (detach_probe_ && detach_probe_());
  if (detached) {
    if (pending_) pending_->detached = true;
    begin_releasing(t);
  } else if ((t - activity_start_) * 1000.0 >= config_.detach_timeout_ms) {
    warn(t, "no stem separation within " + fmt(config_.detach_timeout_ms, 0) + " ms; releasing");
    begin_releasing(t);
  }
}

void GraspController::finalize_record(double) {
  if (!pending_) return;
  telemetry::HarvestRecord record = *pending_;
  pending_.reset();
  record.peak_pull_force = peak_pull_;
  record.peak_contact_force = peak_contact_;
  record.peak_current_deviation_ma = peak_deviation_;
  {
    std::lock_guard lock(mutex_);
    records_.push_back(record);
  }
  ControllerEvent e;
  e.type = ControllerEvent::Type::Record;
  e.time = now_;
  e.from = e.phase = phase_;
  e.record = record;
  emit(std::move(e));
}

// --- loop ---------------------------------------------------------------

void GraspController::tick() {
  const double t = clock_.now();
  bool read_ok = true;
  try {
    const auto c = bus_.read_state(MotorRole::Closer);
    const auto o = bus_.read_state(MotorRole::Opener);
    std::lock_guard lock(mutex_);
    closer_ = c;
    opener_ = o;
    now_ = t;
  } catch (const bus::BusError& err) {
    read_ok = false;
    {
      std::lock_guard lock(mutex_);
      now_ = t;
    }
    ControllerEvent e;
    e.type = ControllerEvent::Type::BusFault;
    e.time = t;
    e.from = e.phase = phase_;
    e.message = err.what();
    emit(std::move(e));
    if (!phase_.is(K::Fault)) {
      zero_goals(t);
      if (activity_ == Activity::Enclosing) finish_outcome(OutcomeResult::Aborted, t);
      finalize_record(t);
      fault(FaultReason::BusError, t);
    }
  }

  std::deque<Command> commands;
  {
    std::lock_guard lock(mutex_);
    commands.swap(queue_);
  }
  for (const auto& cmd : commands) apply(cmd, t);

  if (read_ok) {
    switch (activity_) {
      case Activity::Opening: update_opening(t); break;
      case Activity::Enclosing:
      case Activity::Calibrating: update_enclosing(t); break;
      case Activity::None:
        if (phase_.is(K::Secured) || phase_.is(K::Detaching)) update_monitor(t);
        break;
    }
  }

  telemetry::TelemetrySample s;
  s.time = t;
  s.phase = phase_;
  s.closer = {closer_.current_ma, closer_.velocity_rpm, closer_.position_rev};
  s.opener = {opener_.current_ma, opener_.velocity_rpm, opener_.position_rev};
  if (decorator_) decorator_(s);
  if (phase_.is(K::Enclosing) || phase_.is(K::Secured) || phase_.is(K::Detaching)) {
    if (s.contact_force) peak_contact_ = std::max(peak_contact_.value_or(0.0), *s.contact_force);
    if (s.pull_force) peak_pull_ = std::max(peak_pull_.value_or(0.0), *s.pull_force);
  }

  std::vector<SampleSink> sinks;
  {
    std::lock_guard lock(mutex_);
    ++ticks_;
    sinks.reserve(sample_sinks_.size());
    for (const auto& [id, sink] : sample_sinks_) sinks.push_back(sink);
  }
  for (const auto& sink : sinks) sink(s);

  clock_.wait_period(config_.period_s());
}

template <typename Pred>
void GraspController::run_until(Pred done, double max_seconds, const char* what) {
  const double deadline = clock_.now() + max_seconds;
  while (!done()) {
    if (clock_.now() > deadline) throw GraspError(GraspError::Kind::Timeout, std::string(what) + " timed out");
    tick();
  }
}

// --- blocking helpers ---------------------------------------------------

void GraspController::open_gripper() {
  if (!command_allowed(phase_, CommandKind::Open)) {
    throw PhaseError(phase_, "open not allowed in " + to_string(phase_));
  }
  apply(Command{CommandKind::Open, 0.0, 0}, clock_.now());
  run_until([&] { return activity_ != Activity::Opening; }, config_.enclose_timeout_ms / 1000.0 + 1.0, "open");
  if (!phase_.is(K::Open)) throw GraspError(GraspError::Kind::Timeout, "opener never settled");
}

void GraspController::confirm_align() {
  if (!command_allowed(phase_, CommandKind::AlignConfirm)) {
    throw PhaseError(phase_, "align-confirm not allowed in " + to_string(phase_));
  }
  apply(Command{CommandKind::AlignConfirm, 0.0, 0}, clock_.now());
}

GraspOutcome GraspController::close_grasp() {
  if (!command_allowed(phase_, CommandKind::Grasp)) {
    throw PhaseError(phase_, "grasp not allowed in " + to_string(phase_));
  }
  apply(Command{CommandKind::Grasp, 0.0, 0}, clock_.now());
  run_until([&] { return activity_ != Activity::Enclosing; }, config_.enclose_timeout_ms / 1000.0 + 1.0, "grasp");
  if (phase_.is(K::Fault) && phase_.reason == FaultReason::BusError) {
    throw GraspError(GraspError::Kind::Bus, "bus failure during grasp");
  }
  return *last_outcome();
}

std::vector<HoldEvent> GraspController::monitor_secured(double seconds) {
  if (!phase_.is(K::Secured) && !phase_.is(K::Detaching)) {
    throw PhaseError(phase_, "monitor requires Secured, not " + to_string(phase_));
  }
  hold_log_.clear();
  const auto ticks = static_cast<long>(std::lround(seconds * config_.loop_rate_hz));
  for (long i = 0; i < ticks && (phase_.is(K::Secured) || phase_.is(K::Detaching)); ++i) tick();
  return hold_log_;
}

telemetry::HarvestRecord GraspController::detach_and_release(const std::function<void()>& start_pull) {
  if (!phase_.is(K::Secured)) throw PhaseError(phase_, "detach requires Secured, not " + to_string(phase_));
  apply(Command{CommandKind::Release, 0.0, 0}, clock_.now());
  if (start_pull) start_pull();
  const std::size_t before = records().size();
  run_until([&] { return records().size() > before || phase_.is(K::Fault); },
            (config_.detach_timeout_ms + config_.enclose_timeout_ms) / 1000.0 + 1.0, "detach");
  const auto all = records();
  if (phase_.is(K::Fault) && phase_.reason == FaultReason::Lost) {
    throw GraspError(GraspError::Kind::LostDuringDetach, "fruit lost before stem separation");
  }
  if (all.size() == before) throw GraspError(GraspError::Kind::Bus, "detach ended without a record");
  return all.back();
}

void GraspController::abort() { apply(Command{CommandKind::Abort, 0.0, 0}, clock_.now()); }

CalibrationResult GraspController::calibrate_empty_closure() {
  if (!phase_.is(K::Open) && !phase_.is(K::AlignPending)) {
    throw PhaseError(phase_, "calibration requires Open, not " + to_string(phase_));
  }
  begin_enclosing(clock_.now(), true);
  run_until([&] { return activity_ != Activity::Calibrating; }, config_.enclose_timeout_ms / 1000.0 + 1.0,
            "calibration");
  if (!calibration_settle_) {
    throw GraspError(GraspError::Kind::NotSettled, "calibration close did not settle within " +
                                                       fmt(config_.enclose_timeout_ms, 0) + " ms");
  }
  CalibrationResult result;
  result.settle_position_rev = *calibration_settle_;
  result.empty_closure_position_rev = *calibration_settle_ * (1.0 - config_.calibration_margin);
  set_empty_closure_position(result.empty_closure_position_rev);
  begin_releasing(clock_.now());
  run_until([&] { return activity_ != Activity::Opening; }, config_.enclose_timeout_ms / 1000.0 + 1.0, "reopen");
  return result;
}

void GraspController::torque(MotorRole motor, bool on) {
  if (!on && (phase_.is(K::Secured) || phase_.is(K::Detaching))) {
    warn(now_, std::string("torque off on ") + std::string(bus::to_string(motor)) + " while holding a fruit");
  }
  bus_.torque(motor, on);
}

}  // namespace cinch::grasp
