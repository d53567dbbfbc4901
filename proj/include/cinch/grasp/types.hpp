#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace cinch::grasp {

enum class FaultReason : std::uint8_t { None, Aborted, EmptyClosure, Oversize, Timeout, Lost, BusError };

/// Phase of the harvest cycle: approach/align -> enclose -> secure -> detach.
struct GraspPhase {
  enum class Kind : std::uint8_t { Idle, Open, AlignPending, Enclosing, Secured, Detaching, Releasing, Fault };

  Kind kind = Kind::Idle;
  FaultReason reason = FaultReason::None;  // only meaningful for Fault

  static GraspPhase fault(FaultReason r) { return {Kind::Fault, r}; }

  bool is(Kind k) const { return kind == k; }
  friend bool operator==(const GraspPhase&, const GraspPhase&) = default;
};

std::string_view to_string(GraspPhase::Kind kind);
std::string_view to_string(FaultReason reason);
/// "Fault(Aborted)" style for faults, the bare kind otherwise.
std::string to_string(const GraspPhase& phase);
std::optional<GraspPhase> parse_phase(std::string_view text);

/// Documented transition graph:
///
///   Idle -> Open -> AlignPending -> Enclosing -> Secured -> Detaching -> Releasing -> Open
///   Open -> Enclosing (align skipped), any phase -> Fault, Fault -> Idle | Releasing
bool transition_allowed(const GraspPhase& from, const GraspPhase& to);

enum class OutcomeResult : std::uint8_t { Secured, EmptyClosure, Oversize, Timeout, Aborted };

std::string_view to_string(OutcomeResult result);
std::optional<OutcomeResult> parse_outcome(std::string_view text);

struct GraspOutcome {
  OutcomeResult result = OutcomeResult::Timeout;
  double steady_current_ma = 0.0;
  double closure_position_rev = 0.0;  // closer travel since enclose start
  double elapsed_ms = 0.0;
};

enum class CommandKind : std::uint8_t { Open, AlignConfirm, Grasp, Release, Abort, SetCurrent };

std::string_view to_string(CommandKind kind);
std::optional<CommandKind> parse_command(std::string_view text);

struct Command {
  CommandKind kind = CommandKind::Open;
  double current_ma = 0.0;  // SetCurrent only
  std::uint64_t request_id = 0;
};

/// Whether `command` may be issued in `phase`. Abort is always allowed.
bool command_allowed(const GraspPhase& phase, CommandKind command);

enum class HoldEvent : std::uint8_t { Holding, SlipWarning, Lost };
std::string_view to_string(HoldEvent event);

}  // namespace cinch::grasp
