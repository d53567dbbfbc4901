#include "cinch/bus/serial_transport.hpp"

#include <fcntl.h>
#include <poll.h>
#include <termios.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <stdexcept>
#include <system_error>

namespace cinch::bus {
namespace {

speed_t to_speed(std::uint32_t baud) {
  switch (baud) {
    case 9600: return B9600;
    case 57600: return B57600;
    case 115200: return B115200;
    case 230400: return B230400;
    case 460800: return B460800;
    case 500000: return B500000;
    case 576000: return B576000;
    case 921600: return B921600;
    case 1000000: return B1000000;
    default: return B0;
  }
}

[[noreturn]] void throw_errno(const std::string& what) {
  throw std::system_error(errno, std::generic_category(), what);
}

}  // namespace

bool SerialTransport::supported_baud(std::uint32_t baud) { return to_speed(baud) != B0; }

SerialTransport::SerialTransport(const std::string& device, std::uint32_t baud) : device_(device) {
  const speed_t speed = to_speed(baud);
  if (speed == B0) throw std::invalid_argument("unsupported baud rate " + std::to_string(baud));

  fd_ = ::open(device.c_str(), O_RDWR | O_NOCTTY | O_NONBLOCK);
  if (fd_ < 0) throw_errno("open " + device);

  termios tio{};
  if (::tcgetattr(fd_, &tio) != 0) {
    ::close(fd_);
    throw_errno("tcgetattr " + device);
  }
  ::cfmakeraw(&tio);
  tio.c_cflag |= CLOCAL | CREAD;
  tio.c_cflag &= ~(CSTOPB | PARENB | CRTSCTS);
  tio.c_cflag = (tio.c_cflag & ~CSIZE) | CS8;
  tio.c_cc[VMIN] = 0;
  tio.c_cc[VTIME] = 0;
  ::cfsetispeed(&tio, speed);
  ::cfsetospeed(&tio, speed);
  if (::tcsetattr(fd_, TCSANOW, &tio) != 0) {
    ::close(fd_);
    throw_errno("tcsetattr " + device);
  }
}

SerialTransport::~SerialTransport() {
  if (fd_ >= 0) ::close(fd_);
}

void SerialTransport::write(std::span<const std::uint8_t> bytes) {
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t n = ::write(fd_, bytes.data() + sent, bytes.size() - sent);
    if (n < 0) {
      if (errno == EAGAIN || errno == EINTR) {
        pollfd pfd{fd_, POLLOUT, 0};
        ::poll(&pfd, 1, 10);
        continue;
      }
      throw_errno("write " + device_);
    }
    sent += static_cast<std::size_t>(n);
  }
}

std::size_t SerialTransport::read(std::span<std::uint8_t> out, Clock::time_point deadline) {
  while (true) {
    const auto now = Clock::now();
    const auto remaining = std::chrono::ceil<std::chrono::milliseconds>(deadline - now).count();
    pollfd pfd{fd_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, remaining > 0 ? static_cast<int>(remaining) : 0);
    if (ready < 0) {
      if (errno == EINTR) continue;
      throw_errno("poll " + device_);
    }
    if (ready == 0) return 0;
    const ssize_t n = ::read(fd_, out.data(), out.size());
    if (n > 0) return static_cast<std::size_t>(n);
    if (n < 0 && errno != EAGAIN && errno != EINTR) throw_errno("read " + device_);
    if (Clock::now() >= deadline) return 0;
  }
}

void SerialTransport::flush() { ::tcflush(fd_, TCIFLUSH); }

}  // namespace cinch::bus
