#include "cinch/grasp/types.hpp"

#include <array>

namespace cinch::grasp {
namespace {

using K = GraspPhase::Kind;

constexpr std::array<K, 8> kKinds{K::Idle,    K::Open,      K::AlignPending, K::Enclosing,
                                  K::Secured, K::Detaching, K::Releasing,    K::Fault};
constexpr std::array<FaultReason, 6> kReasons{FaultReason::Aborted, FaultReason::EmptyClosure, FaultReason::Oversize,
                                              FaultReason::Timeout, FaultReason::Lost,         FaultReason::BusError};
constexpr std::array<OutcomeResult, 5> kOutcomes{OutcomeResult::Secured, OutcomeResult::EmptyClosure,
                                                 OutcomeResult::Oversize, OutcomeResult::Timeout,
                                                 OutcomeResult::Aborted};
constexpr std::array<CommandKind, 6> kCommands{CommandKind::Open,    CommandKind::AlignConfirm, CommandKind::Grasp,
                                               CommandKind::Release, CommandKind::Abort,        CommandKind::SetCurrent};

}  // namespace

std::string_view to_string(GraspPhase::Kind kind) {
  switch (kind) {
    case K::Idle: return "Idle";
    case K::Open: return "Open";
    case K::AlignPending: return "AlignPending";
    case K::Enclosing: return "Enclosing";
    case K::Secured: return "Secured";
    case K::Detaching: return "Detaching";
    case K::Releasing: return "Releasing";
    case K::Fault: return "Fault";
  }
  return "?";
}

std::string_view to_string(FaultReason reason) {
  switch (reason) {
    case FaultReason::None: return "None";
    case FaultReason::Aborted: return "Aborted";
    case FaultReason::EmptyClosure: return "EmptyClosure";
    case FaultReason::Oversize: return "Oversize";
    case FaultReason::Timeout: return "Timeout";
    case FaultReason::Lost: return "Lost";
    case FaultReason::BusError: return "BusError";
  }
  return "?";
}

std::string to_string(const GraspPhase& phase) {
  if (phase.kind != K::Fault) return std::string(to_string(phase.kind));
  return "Fault(" + std::string(to_string(phase.reason)) + ")";
}

std::optional<GraspPhase> parse_phase(std::string_view text) {
  for (K k : kKinds) {
    if (k != K::Fault && text == to_string(k)) return GraspPhase{k, FaultReason::None};
  }
  if (text.starts_with("Fault(") && text.ends_with(")")) {
    const auto inner = text.substr(6, text.size() - 7);
    for (FaultReason r : kReasons) {
      if (inner == to_string(r)) return GraspPhase::fault(r);
    }
  }
  return std::nullopt;
}

bool transition_allowed(const GraspPhase& from, const GraspPhase& to) {
  if (to.kind == K::Fault) return from.kind != K::Fault && to.reason != FaultReason::None;
  switch (from.kind) {
    case K::Idle: return to.kind == K::Open;
    case K::Open: return to.kind == K::AlignPending || to.kind == K::Enclosing;
    case K::AlignPending: return to.kind == K::Enclosing;
    case K::Enclosing: return to.kind == K::Secured;
    case K::Secured: return to.kind == K::Detaching;
    case K::Detaching: return to.kind == K::Releasing;
    case K::Releasing: return to.kind == K::Open;
    case K::Fault: return to.kind == K::Idle || to.kind == K::Releasing;
  }
  return false;
}

std::string_view to_string(OutcomeResult result) {
  switch (result) {
    case OutcomeResult::Secured: return "Secured";
    case OutcomeResult::EmptyClosure: return "EmptyClosure";
    case OutcomeResult::Oversize: return "Oversize";
    case OutcomeResult::Timeout: return "Timeout";
    case OutcomeResult::Aborted: return "Aborted";
  }
  return "?";
}

std::optional<OutcomeResult> parse_outcome(std::string_view text) {
  for (OutcomeResult r : kOutcomes) {
    if (text == to_string(r)) return r;
  }
  return std::nullopt;
}

std::string_view to_string(CommandKind kind) {
  switch (kind) {
    case CommandKind::Open: return "Open";
    case CommandKind::AlignConfirm: return "AlignConfirm";
    case CommandKind::Grasp: return "Grasp";
    case CommandKind::Release: return "Release";
    case CommandKind::Abort: return "Abort";
    case CommandKind::SetCurrent: return "SetCurrent";
  }
  return "?";
}

std::optional<CommandKind> parse_command(std::string_view text) {
  for (CommandKind c : kCommands) {
    if (text == to_string(c)) return c;
  }
  return std::nullopt;
}

bool command_allowed(const GraspPhase& phase, CommandKind command) {
  switch (command) {
    case CommandKind::Abort: return true;
    case CommandKind::Open: return phase.is(K::Idle) || phase.is(K::Releasing) || phase.is(K::Open);
    case CommandKind::AlignConfirm: return phase.is(K::Open);
    case CommandKind::Grasp: return phase.is(K::Open) || phase.is(K::AlignPending);
    case CommandKind::Release: return phase.is(K::Secured) || phase.is(K::Detaching) || phase.is(K::Fault);
    case CommandKind::SetCurrent: return !phase.is(K::Fault);
  }
  return false;
}

std::string_view to_string(HoldEvent event) {
  switch (event) {
    case HoldEvent::Holding: return "Holding";
    case HoldEvent::SlipWarning: return "SlipWarning";
    case HoldEvent::Lost: return "Lost";
  }
  return "?";
}

}  // namespace cinch::grasp
