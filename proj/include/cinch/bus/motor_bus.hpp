#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>

#include "cinch/bus/registers.hpp"
#include "cinch/bus/transport.hpp"
#include "cinch/dxl/protocol.hpp"

namespace cinch::bus {

class BusError : public std::runtime_error {
 public:
  enum class Kind {
    Timeout,
    DeviceError,
    CrcGiveUp,
    OutOfRange,
    ModeChangeWhileTorqued,
    VerifyFailed,
    ReadOnlyRegister,
    MalformedReply,
  };

  BusError(Kind kind, const std::string& what, std::uint8_t device_code = 0)
      : std::runtime_error(what), kind_(kind), device_code_(device_code) {}

  Kind kind() const { return kind_; }
  std::uint8_t device_code() const { return device_code_; }

 private:
  Kind kind_;
  std::uint8_t device_code_;
};

std::string_view to_string(BusError::Kind kind);

enum class MotorRole : std::uint8_t { Closer, Opener };
std::string_view to_string(MotorRole role);

struct MotorIds {
  std::uint8_t closer = 1;
  std::uint8_t opener = 2;

  std::uint8_t of(MotorRole role) const { return role == MotorRole::Closer ? closer : opener; }
};

/// Snapshot of one servo in engineering units.
struct MotorState {
  double position_rev = 0.0;
  double velocity_rpm = 0.0;
  double current_ma = 0.0;

  friend bool operator==(const MotorState&, const MotorState&) = default;
};

struct BusConfig {
  std::uint32_t baud = 57600;
  std::chrono::milliseconds deadline{20};
  int retries = 2;
  double current_cap_ma = 150.0;
  MotorIds ids{};
};

/// Owns a transport and serialises every transaction on it.
class MotorBus {
 public:
  MotorBus(std::unique_ptr<Transport> transport, BusConfig config = {});

  const BusConfig& config() const { return config_; }
  Transport& transport() { return *transport_; }

  /// Sends `packet` and waits for the matching status. Retries on CRC errors.
  dxl::StatusPacket transact(const dxl::InstructionPacket& packet, std::chrono::milliseconds deadline);
  dxl::StatusPacket transact(const dxl::InstructionPacket& packet) { return transact(packet, config_.deadline); }

  dxl::StatusPacket ping(MotorRole motor);

  std::uint32_t read_register(MotorRole motor, Register reg);
  void write_register(MotorRole motor, Register reg, std::uint32_t value);

  MotorState read_state(MotorRole motor);
  void set_goal_current(MotorRole motor, double current_ma);
  void set_operating_mode(MotorRole motor, OperatingMode mode);
  void torque(MotorRole motor, bool on);

  /// Number of transactions completed (successfully or not).
  std::uint64_t transaction_count() const;

 private:
  std::unique_ptr<Transport> transport_;
  BusConfig config_;
  mutable std::mutex mutex_;
  std::uint64_t transactions_ = 0;
};

}  // namespace cinch::bus
