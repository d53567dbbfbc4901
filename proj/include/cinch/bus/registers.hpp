// Control table subset of the XL330-M288T used by this stack.
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

namespace cinch::bus {

enum class Access : std::uint8_t { RO, RW };

enum class Register : std::uint8_t {
  ModelNumber,
  FirmwareVersion,
  Id,
  BaudRate,
  OperatingMode,
  CurrentLimit,
  TorqueEnable,
  HardwareErrorStatus,
  GoalCurrent,
  GoalPosition,
  Moving,
  PresentCurrent,
  PresentVelocity,
  PresentPosition,
};

struct RegisterSpec {
  Register reg;
  std::string_view name;
  std::uint16_t address;
  std::uint8_t width;
  Access access;
  bool eeprom;  // writable only while torque is disabled
};

inline constexpr std::array<RegisterSpec, 14> kRegisterMap{{
    {Register::ModelNumber, "ModelNumber", 0, 2, Access::RO, true},
    {Register::FirmwareVersion, "FirmwareVersion", 6, 1, Access::RO, true},
    {Register::Id, "ID", 7, 1, Access::RW, true},
    {Register::BaudRate, "BaudRate", 8, 1, Access::RW, true},
    {Register::OperatingMode, "OperatingMode", 11, 1, Access::RW, true},
    {Register::CurrentLimit, "CurrentLimit", 38, 2, Access::RW, true},
    {Register::TorqueEnable, "TorqueEnable", 64, 1, Access::RW, false},
    {Register::HardwareErrorStatus, "HardwareErrorStatus", 70, 1, Access::RO, false},
    {Register::GoalCurrent, "GoalCurrent", 102, 2, Access::RW, false},
    {Register::GoalPosition, "GoalPosition", 116, 4, Access::RW, false},
    {Register::Moving, "Moving", 122, 1, Access::RO, false},
    {Register::PresentCurrent, "PresentCurrent", 126, 2, Access::RO, false},
    {Register::PresentVelocity, "PresentVelocity", 128, 4, Access::RO, false},
    {Register::PresentPosition, "PresentPosition", 132, 4, Access::RO, false},
}};

constexpr const RegisterSpec& spec(Register reg) {
  for (const auto& s : kRegisterMap) {
    if (s.reg == reg) return s;
  }
  return kRegisterMap[0];  // unreachable: every enumerator is in the map
}

constexpr std::optional<RegisterSpec> find_register(std::uint16_t address) {
  for (const auto& s : kRegisterMap) {
    if (s.address == address) return s;
  }
  return std::nullopt;
}

inline constexpr std::uint16_t kXl330ModelNumber = 1200;
inline constexpr std::uint16_t kXl330CurrentLimitMa = 1750;

// Present{Current,Velocity,Position} are contiguous: one read covers all.
inline constexpr std::uint16_t kStateBlockAddress = 126;
inline constexpr std::uint16_t kStateBlockLength = 10;

/// Operating-mode register values.
enum class OperatingMode : std::uint8_t {
  CurrentControl = 0,
  VelocityControl = 1,
  PositionControl = 3,
  ExtendedPosition = 4,
  CurrentBasedPosition = 5,
  Pwm = 16,
};

}  // namespace cinch::bus
