#pragma once

#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <vector>

#include "cinch/bus/transport.hpp"
#include "cinch/dxl/protocol.hpp"

namespace cinch::bus {

/// In-memory transport that answers each write from a script.
///
/// Every write pops the next scripted reply (which may be empty: silence).
/// When the script is exhausted the optional responder is asked instead.
/// All written frames are recorded for inspection.
class LoopbackTransport : public Transport {
 public:
  using Responder = std::function<dxl::Bytes(const dxl::Bytes& written)>;

  void script(dxl::Bytes reply);
  void set_responder(Responder responder);

  /// Bytes that arrive without being asked for.
  void inject(const dxl::Bytes& bytes);

  void write(std::span<const std::uint8_t> bytes) override;
  std::size_t read(std::span<std::uint8_t> out, Clock::time_point deadline) override;
  void flush() override;

  std::vector<dxl::Bytes> written() const;
  std::size_t pending_script() const;

  /// Set when a write arrived while unread reply bytes were still pending
  /// from the previous write, i.e. two transactions overlapped.
  bool overlap_detected() const;

 private:
  mutable std::mutex mutex_;
  std::deque<dxl::Bytes> script_;
  Responder responder_;
  std::deque<std::uint8_t> rx_;
  std::vector<dxl::Bytes> written_;
  bool overlap_ = false;
};

}  // namespace cinch::bus
