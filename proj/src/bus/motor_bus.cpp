#include "cinch/bus/motor_bus.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "cinch/bus/units.hpp"

namespace cinch::bus {

std::string_view to_string(BusError::Kind kind) {
  switch (kind) {
    case BusError::Kind::Timeout: return "Timeout";
    case BusError::Kind::DeviceError: return "DeviceError";
    case BusError::Kind::CrcGiveUp: return "CrcGiveUp";
    case BusError::Kind::OutOfRange: return "OutOfRange";
    case BusError::Kind::ModeChangeWhileTorqued: return "ModeChangeWhileTorqued";
    case BusError::Kind::VerifyFailed: return "VerifyFailed";
    case BusError::Kind::ReadOnlyRegister: return "ReadOnlyRegister";
    case BusError::Kind::MalformedReply: return "MalformedReply";
  }
  return "?";
}

std::string_view to_string(MotorRole role) { return role == MotorRole::Closer ? "closer" : "opener"; }

MotorBus::MotorBus(std::unique_ptr<Transport> transport, BusConfig config)
    : transport_(std::move(transport)), config_(config) {
  if (!transport_) throw std::invalid_argument("MotorBus needs a transport");
  if (config_.ids.closer == config_.ids.opener) throw std::invalid_argument("closer and opener need distinct bus ids");
  if (config_.retries < 0) throw std::invalid_argument("retries must be >= 0");
}

std::uint64_t MotorBus::transaction_count() const {
  std::lock_guard lock(mutex_);
  return transactions_;
}

dxl::StatusPacket MotorBus::transact(const dxl::InstructionPacket& packet, std::chrono::milliseconds deadline) {
  const dxl::Bytes frame = dxl::encode(packet);
  std::lock_guard lock(mutex_);
  ++transactions_;

  std::array<std::uint8_t, 256> chunk{};
  for (int attempt = 0; attempt <= config_.retries; ++attempt) {
    transport_->flush();
    transport_->write(frame);
    const auto until = Clock::now() + deadline;
    dxl::DecoderState decoder;
    bool crc_seen = false;
    while (true) {
      const std::size_t n = transport_->read(chunk, until);
      if (n == 0) break;
      auto decoded = dxl::decode_step(decoder, std::span<const std::uint8_t>(chunk.data(), n));
      crc_seen = crc_seen || std::any_of(decoded.errors.begin(), decoded.errors.end(), [](const auto& e) {
                   return e.kind == dxl::DecodeError::Kind::CrcMismatch;
                 });
      for (auto& status : decoded.packets) {
        if (status.id != packet.id && packet.id != dxl::kBroadcastId) continue;
        if (status.error != 0) {
          throw BusError(BusError::Kind::DeviceError,
                         "device " + std::to_string(status.id) + " reported error " +
                             std::to_string(status.error),
                         status.error);
        }
        return std::move(status);
      }
    }
    if (!crc_seen) {
      throw BusError(BusError::Kind::Timeout, "no reply from id " + std::to_string(packet.id));
    }
  }
  throw BusError(BusError::Kind::CrcGiveUp,
                 "CRC errors on every attempt for id " + std::to_string(packet.id));
}

dxl::StatusPacket MotorBus::ping(MotorRole motor) {
  return transact({config_.ids.of(motor), dxl::Instruction::Ping, {}});
}

std::uint32_t MotorBus::read_register(MotorRole motor, Register reg) {
  const RegisterSpec& s = spec(reg);
  dxl::InstructionPacket p{config_.ids.of(motor), dxl::Instruction::Read, {}};
  dxl::put_le(p.params, s.address, 2);
  dxl::put_le(p.params, s.width, 2);
  const auto status = transact(p);
  if (status.params.size() != s.width) {
    throw BusError(BusError::Kind::MalformedReply, std::string("short read of ") + std::string(s.name));
  }
  return dxl::get_le(status.params, 0, s.width);
}

void MotorBus::write_register(MotorRole motor, Register reg, std::uint32_t value) {
  const RegisterSpec& s = spec(reg);
  if (s.access == Access::RO) {
    throw BusError(BusError::Kind::ReadOnlyRegister, std::string(s.name) + " is read-only");
  }
  dxl::InstructionPacket p{config_.ids.of(motor), dxl::Instruction::Write, {}};
  dxl::put_le(p.params, s.address, 2);
  dxl::put_le(p.params, value, s.width);
  transact(p);
}

MotorState MotorBus::read_state(MotorRole motor) {
  dxl::InstructionPacket p{config_.ids.of(motor), dxl::Instruction::Read, {}};
  dxl::put_le(p.params, kStateBlockAddress, 2);
  dxl::put_le(p.params, kStateBlockLength, 2);
  const auto status = transact(p);
  if (status.params.size() != kStateBlockLength) {
    throw BusError(BusError::Kind::MalformedReply, "short state read");
  }
  const auto cur = static_cast<std::int16_t>(dxl::get_le(status.params, 0, 2));
  const auto vel = static_cast<std::int32_t>(dxl::get_le(status.params, 2, 4));
  const auto pos = static_cast<std::int32_t>(dxl::get_le(status.params, 6, 4));
  return {units::position_rev(pos), units::velocity_rpm(vel), units::current_ma(cur)};
}

void MotorBus::set_goal_current(MotorRole motor, double current_ma) {
  if (!std::isfinite(current_ma) || std::abs(current_ma) > config_.current_cap_ma) {
    throw BusError(BusError::Kind::OutOfRange, "goal current " + std::to_string(current_ma) +
                                                   " mA exceeds cap " + std::to_string(config_.current_cap_ma));
  }
  const auto limit = static_cast<std::int16_t>(kXl330CurrentLimitMa);
  const std::int16_t raw = std::clamp<std::int16_t>(units::current_raw(current_ma), -limit, limit);
  write_register(motor, Register::GoalCurrent, static_cast<std::uint16_t>(raw));
}

void MotorBus::set_operating_mode(MotorRole motor, OperatingMode mode) {
  if (read_register(motor, Register::TorqueEnable) != 0) {
    throw BusError(BusError::Kind::ModeChangeWhileTorqued,
                   std::string("torque is enabled on the ") + std::string(to_string(motor)));
  }
  write_register(motor, Register::OperatingMode, static_cast<std::uint8_t>(mode));
  const auto readback = read_register(motor, Register::OperatingMode);
  if (readback != static_cast<std::uint8_t>(mode)) {
    throw BusError(BusError::Kind::VerifyFailed, "operating mode readback " + std::to_string(readback));
  }
}

void MotorBus::torque(MotorRole motor, bool on) { write_register(motor, Register::TorqueEnable, on ? 1 : 0); }

}  // namespace cinch::bus
