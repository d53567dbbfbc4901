#pragma once

#include <cstdint>
#include <deque>
#include <mutex>
#include <random>

#include "cinch/bus/motor_bus.hpp"
#include "cinch/bus/transport.hpp"
#include "cinch/dxl/protocol.hpp"
#include "cinch/sim/plant.hpp"

namespace cinch::sim {

/// Transport emulating the two servos on top of the plant. Instruction frames
/// are executed synchronously on write(); replies wait in a mailbox until
/// read(). Physics only advances through advance().
class VirtualBus : public bus::Transport {
 public:
  explicit VirtualBus(PlantConfig config, bus::MotorIds ids = {});

  void write(std::span<const std::uint8_t> bytes) override;
  std::size_t read(std::span<std::uint8_t> out, bus::Clock::time_point deadline) override;
  void flush() override;

  /// Steps the plant `steps` times.
  void advance(std::uint64_t steps);
  void advance_seconds(double seconds);

  PlantState state() const;
  const PlantConfig& config() const { return config_; }
  bus::MotorIds ids() const { return ids_; }

  void apply_pull(double force, double ramp);

  // Fault injection.
  void set_silent(bool silent);
  void corrupt_next_replies(int count);

  /// Writes that left both motors with a goal current above 10 mA while
  /// both were torqued in current mode.
  std::uint64_t antagonism_violations() const;
  /// Write instructions aimed at addresses outside the register map.
  std::uint64_t unmapped_writes() const;

  static constexpr double kAntagonismLimitMa = 10.0;

 private:
  dxl::Bytes execute(const dxl::InstructionPacket& packet);
  dxl::Bytes reply(std::uint8_t id, dxl::ResultCode code, dxl::Bytes params = {});
  dxl::Bytes control_table(std::size_t motor);
  dxl::ResultCode write_register(std::size_t motor, std::uint16_t address, dxl::ByteView data);
  std::size_t motor_index(std::uint8_t id) const;
  void check_antagonism();

  PlantConfig config_;
  bus::MotorIds ids_;
  mutable std::mutex mutex_;
  PlantState state_;
  dxl::DecoderState decoder_;
  std::deque<std::uint8_t> mailbox_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> noise_{0.0, 1.0};
  bool silent_ = false;
  int corrupt_ = 0;
  std::uint64_t antagonism_violations_ = 0;
  std::uint64_t unmapped_writes_ = 0;
};

}  // namespace cinch::sim
