#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <span>

namespace cinch::bus {

using Clock = std::chrono::steady_clock;

/// Byte-stream link to the motor bus (serial adapter, virtual bus, test
/// double). Implementations must never block in read() past `deadline`.
class Transport {
 public:
  virtual ~Transport() = default;

  virtual void write(std::span<const std::uint8_t> bytes) = 0;

  /// Copies up to out.size() available bytes into `out`, waiting at most
  /// until `deadline` for the first byte. Returns 0 on deadline.
  virtual std::size_t read(std::span<std::uint8_t> out, Clock::time_point deadline) = 0;

  /// Discards any unread input.
  virtual void flush() = 0;
};

}  // namespace cinch::bus
