#pragma once

#include <cstdint>
#include <string>

#include "cinch/bus/transport.hpp"

namespace cinch::bus {

/// POSIX serial port (8N1, raw mode), e.g. a U2D2 adapter at /dev/ttyUSB0.
class SerialTransport : public Transport {
 public:
  SerialTransport(const std::string& device, std::uint32_t baud);
  ~SerialTransport() override;

  SerialTransport(const SerialTransport&) = delete;
  SerialTransport& operator=(const SerialTransport&) = delete;

  void write(std::span<const std::uint8_t> bytes) override;
  std::size_t read(std::span<std::uint8_t> out, Clock::time_point deadline) override;
  void flush() override;

  static bool supported_baud(std::uint32_t baud);

 private:
  int fd_ = -1;
  std::string device_;
};

}  // namespace cinch::bus
