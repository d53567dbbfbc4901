#include "cinch/sim/virtual_bus.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cinch/bus/registers.hpp"
#include "cinch/bus/units.hpp"

namespace cinch::sim {
namespace {

using dxl::ResultCode;
namespace units = bus::units;

constexpr std::size_t kTableSize = 148;
constexpr std::size_t kNoMotor = 2;
constexpr std::uint8_t kFirmwareVersion = 46;
constexpr std::uint8_t kBaudIndex57600 = 1;

double rad_to_rev(double rad) { return rad / (2.0 * std::numbers::pi); }
double rad_s_to_rpm(double w) { return w * 60.0 / (2.0 * std::numbers::pi); }

bool supported_mode(std::uint32_t raw) {
  return raw == 0 || raw == 3 || raw == 4 || raw == 5;
}

}  // namespace

VirtualBus::VirtualBus(PlantConfig config, bus::MotorIds ids)
    : config_(std::move(config)), ids_(ids), state_(initial_state(config_)), rng_(config_.seed) {
  if (ids_.closer == ids_.opener) throw std::invalid_argument("virtual devices need distinct ids");
}

std::size_t VirtualBus::motor_index(std::uint8_t id) const {
  if (id == ids_.closer) return kCloser;
  if (id == ids_.opener) return kOpener;
  return kNoMotor;
}

void VirtualBus::write(std::span<const std::uint8_t> bytes) {
  std::lock_guard lock(mutex_);
  auto decoded = dxl::decode_frames(decoder_, bytes);
  for (const auto& frame : decoded.frames) {
    auto packet = dxl::to_instruction(frame);
    if (!packet) continue;
    dxl::Bytes out = execute(*packet);
    if (silent_) continue;
    if (corrupt_ > 0 && !out.empty()) {
      out.back() ^= 0xFF;
      --corrupt_;
    }
    mailbox_.insert(mailbox_.end(), out.begin(), out.end());
  }
}

std::size_t VirtualBus::read(std::span<std::uint8_t> out, bus::Clock::time_point) {
  // Replies are produced synchronously; an empty mailbox stays empty.
  std::lock_guard lock(mutex_);
  const std::size_t n = std::min(out.size(), mailbox_.size());
  std::copy_n(mailbox_.begin(), n, out.begin());
  mailbox_.erase(mailbox_.begin(), mailbox_.begin() + static_cast<std::ptrdiff_t>(n));
  return n;
}

void VirtualBus::flush() {
  std::lock_guard lock(mutex_);
  mailbox_.clear();
}

void VirtualBus::advance(std::uint64_t steps) {
  std::lock_guard lock(mutex_);
  for (std::uint64_t i = 0; i < steps; ++i) state_ = step(state_, config_);
}

void VirtualBus::advance_seconds(double seconds) {
  advance(static_cast<std::uint64_t>(std::llround(seconds / config_.dt)));
}

PlantState VirtualBus::state() const {
  std::lock_guard lock(mutex_);
  return state_;
}

void VirtualBus::apply_pull(double force, double ramp) {
  std::lock_guard lock(mutex_);
  state_ = sim::apply_pull(state_, force, ramp);
}

void VirtualBus::set_silent(bool silent) {
  std::lock_guard lock(mutex_);
  silent_ = silent;
}

void VirtualBus::corrupt_next_replies(int count) {
  std::lock_guard lock(mutex_);
  corrupt_ = count;
}

std::uint64_t VirtualBus::antagonism_violations() const {
  std::lock_guard lock(mutex_);
  return antagonism_violations_;
}

std::uint64_t VirtualBus::unmapped_writes() const {
  std::lock_guard lock(mutex_);
  return unmapped_writes_;
}

dxl::Bytes VirtualBus::reply(std::uint8_t id, ResultCode code, dxl::Bytes params) {
  return dxl::encode_status({id, static_cast<std::uint8_t>(code), std::move(params)});
}

dxl::Bytes VirtualBus::control_table(std::size_t motor) {
  const MotorSimState& m = state_.motors[motor];
  dxl::Bytes table(kTableSize, 0);
  auto put = [&](bus::Register reg, std::uint32_t value) {
    const auto& s = bus::spec(reg);
    for (std::size_t i = 0; i < s.width; ++i) table[s.address + i] = static_cast<std::uint8_t>(value >> (8 * i));
  };
  const double current_ma = m.current * 1000.0 +
                            (config_.current_noise_ma > 0.0 ? config_.current_noise_ma * noise_(rng_) : 0.0);
  const std::int32_t velocity = units::velocity_raw(rad_s_to_rpm(m.omega));

  put(bus::Register::ModelNumber, bus::kXl330ModelNumber);
  put(bus::Register::FirmwareVersion, kFirmwareVersion);
  put(bus::Register::Id, motor == kCloser ? ids_.closer : ids_.opener);
  put(bus::Register::BaudRate, kBaudIndex57600);
  put(bus::Register::OperatingMode, static_cast<std::uint8_t>(m.mode));
  put(bus::Register::CurrentLimit, static_cast<std::uint16_t>(std::lround(config_.motor.current_limit * 1000.0)));
  put(bus::Register::TorqueEnable, m.torque_enabled ? 1 : 0);
  put(bus::Register::HardwareErrorStatus, 0);
  put(bus::Register::GoalCurrent, static_cast<std::uint16_t>(units::current_raw(m.goal_current * 1000.0)));
  put(bus::Register::GoalPosition, static_cast<std::uint32_t>(units::position_raw(rad_to_rev(m.goal_position))));
  put(bus::Register::Moving, velocity != 0 ? 1 : 0);
  put(bus::Register::PresentCurrent, static_cast<std::uint16_t>(units::current_raw(current_ma)));
  put(bus::Register::PresentVelocity, static_cast<std::uint32_t>(velocity));
  put(bus::Register::PresentPosition, static_cast<std::uint32_t>(units::position_raw(rad_to_rev(m.angle))));
  return table;
}

ResultCode VirtualBus::write_register(std::size_t motor, std::uint16_t address, dxl::ByteView data) {
  const auto found = bus::find_register(address);
  if (!found) {
    ++unmapped_writes_;
    return ResultCode::AccessError;
  }
  const bus::RegisterSpec s = *found;
  if (s.access == bus::Access::RO) return ResultCode::AccessError;
  if (data.size() != s.width) return ResultCode::DataLengthError;
  MotorSimState& m = state_.motors[motor];
  if (s.eeprom && m.torque_enabled) return ResultCode::AccessError;

  const std::uint32_t raw = dxl::get_le(data, 0, s.width);
  switch (s.reg) {
    case bus::Register::OperatingMode:
      if (!supported_mode(raw)) return ResultCode::DataRangeError;
      m.mode = static_cast<bus::OperatingMode>(raw);
      break;
    case bus::Register::TorqueEnable:
      if (raw > 1) return ResultCode::DataRangeError;
      m.torque_enabled = raw == 1;
      if (!m.torque_enabled) m.integrator = 0.0;
      break;
    case bus::Register::GoalCurrent: {
      const double ma = static_cast<std::int16_t>(raw);
      if (std::abs(ma) > config_.motor.current_limit * 1000.0) return ResultCode::DataLimitError;
      m.goal_current = ma / 1000.0;
      break;
    }
    case bus::Register::GoalPosition:
      m.goal_position = units::position_rev(static_cast<std::int32_t>(raw)) * 2.0 * std::numbers::pi;
      break;
    case bus::Register::CurrentLimit:
      if (raw > bus::kXl330CurrentLimitMa) return ResultCode::DataRangeError;
      config_.motor.current_limit = raw / 1000.0;
      break;
    case bus::Register::Id:
    case bus::Register::BaudRate:
      // Accepted but not emulated: the virtual devices keep their address and rate.
      break;
    default:
      return ResultCode::AccessError;
  }
  return ResultCode::Ok;
}

void VirtualBus::check_antagonism() {
  const auto& c = state_.motors[kCloser];
  const auto& o = state_.motors[kOpener];
  auto pulling = [](const MotorSimState& m) {
    return m.torque_enabled && m.mode == bus::OperatingMode::CurrentControl &&
           m.goal_current * 1000.0 > kAntagonismLimitMa;
  };
  if (pulling(c) && pulling(o)) ++antagonism_violations_;
}

dxl::Bytes VirtualBus::execute(const dxl::InstructionPacket& packet) {
  dxl::Bytes out;
  std::vector<std::size_t> targets;
  if (packet.id == dxl::kBroadcastId) {
    targets = {kCloser, kOpener};
  } else if (std::size_t idx = motor_index(packet.id); idx != kNoMotor) {
    targets = {idx};
  } else {
    return out;
  }
  const bool broadcast = packet.id == dxl::kBroadcastId;
  std::sort(targets.begin(), targets.end(), [&](std::size_t a, std::size_t b) {
    return (a == kCloser ? ids_.closer : ids_.opener) < (b == kCloser ? ids_.closer : ids_.opener);
  });

  for (std::size_t motor : targets) {
    const std::uint8_t id = motor == kCloser ? ids_.closer : ids_.opener;
    dxl::Bytes r;
    switch (packet.instruction) {
      case dxl::Instruction::Ping: {
        dxl::Bytes params;
        dxl::put_le(params, bus::kXl330ModelNumber, 2);
        params.push_back(kFirmwareVersion);
        r = reply(id, ResultCode::Ok, std::move(params));
        break;
      }
      case dxl::Instruction::Read: {
        if (packet.params.size() != 4) {
          r = reply(id, ResultCode::DataLengthError);
          break;
        }
        const std::size_t address = dxl::get_le(packet.params, 0, 2);
        const std::size_t length = dxl::get_le(packet.params, 2, 2);
        if (length == 0 || address + length > kTableSize) {
          r = reply(id, ResultCode::DataRangeError);
          break;
        }
        const dxl::Bytes table = control_table(motor);
        r = reply(id, ResultCode::Ok,
                  dxl::Bytes(table.begin() + static_cast<std::ptrdiff_t>(address),
                             table.begin() + static_cast<std::ptrdiff_t>(address + length)));
        break;
      }
      case dxl::Instruction::Write: {
        if (packet.params.size() < 3) {
          r = reply(id, ResultCode::DataLengthError);
          break;
        }
        const auto address = static_cast<std::uint16_t>(dxl::get_le(packet.params, 0, 2));
        const ResultCode code =
            write_register(motor, address, dxl::ByteView(packet.params).subspan(2));
        check_antagonism();
        r = reply(id, code);
        break;
      }
      default:
        r = reply(id, ResultCode::InstructionError);
        break;
    }
    // Only Ping answers a broadcast.
    if (broadcast && packet.instruction != dxl::Instruction::Ping) continue;
    out.insert(out.end(), r.begin(), r.end());
  }
  return out;
}

}  // namespace cinch::sim
