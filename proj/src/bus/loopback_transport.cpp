#include "cinch/bus/loopback_transport.hpp"

#include <algorithm>
#include <thread>

namespace cinch::bus {

void LoopbackTransport::script(dxl::Bytes reply) {
  std::lock_guard lock(mutex_);
  script_.push_back(std::move(reply));
}

void LoopbackTransport::set_responder(Responder responder) {
  std::lock_guard lock(mutex_);
  responder_ = std::move(responder);
}

void LoopbackTransport::inject(const dxl::Bytes& bytes) {
  std::lock_guard lock(mutex_);
  rx_.insert(rx_.end(), bytes.begin(), bytes.end());
}

void LoopbackTransport::write(std::span<const std::uint8_t> bytes) {
  std::lock_guard lock(mutex_);
  if (!rx_.empty()) overlap_ = true;
  dxl::Bytes frame(bytes.begin(), bytes.end());
  dxl::Bytes reply;
  if (!script_.empty()) {
    reply = std::move(script_.front());
    script_.pop_front();
  } else if (responder_) {
    reply = responder_(frame);
  }
  written_.push_back(std::move(frame));
  rx_.insert(rx_.end(), reply.begin(), reply.end());
}

std::size_t LoopbackTransport::read(std::span<std::uint8_t> out, Clock::time_point deadline) {
  {
    std::lock_guard lock(mutex_);
    if (!rx_.empty()) {
      const std::size_t n = std::min(out.size(), rx_.size());
      std::copy_n(rx_.begin(), n, out.begin());
      rx_.erase(rx_.begin(), rx_.begin() + static_cast<std::ptrdiff_t>(n));
      return n;
    }
  }
  // Nothing can arrive later without another write: silence until the deadline.
  std::this_thread::sleep_until(deadline);
  return 0;
}

void LoopbackTransport::flush() {
  std::lock_guard lock(mutex_);
  if (!rx_.empty()) overlap_ = true;
  rx_.clear();
}

std::vector<dxl::Bytes> LoopbackTransport::written() const {
  std::lock_guard lock(mutex_);
  return written_;
}

std::size_t LoopbackTransport::pending_script() const {
  std::lock_guard lock(mutex_);
  return script_.size();
}

bool LoopbackTransport::overlap_detected() const {
  std::lock_guard lock(mutex_);
  return overlap_;
}

}  // namespace cinch::bus
