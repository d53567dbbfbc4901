#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <json.hpp>

#include "cinch/grasp/controller.hpp"
#include "cinch/sim/runner.hpp"
#include "cinch/sim/scenario.hpp"

namespace httplib {
class Server;
}

namespace cinch::service {

class BindError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SimBackend {
  std::filesystem::path scenario;  // empty: built-in defaults, no fruit
  double speed = 1.0;              // sim seconds per wall second
};

struct SerialBackend {
  std::string device;
  std::uint32_t baud = 57600;
};

struct GraspOverrides {
  std::optional<double> reference_current_ma;
  std::optional<double> current_cap_ma;
};

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::variant<SimBackend, SerialBackend> transport = SimBackend{};
  GraspOverrides grasp;
  std::optional<std::string> token;
  std::optional<std::filesystem::path> calibration;  // file from `cinch calibrate`
  std::size_t stream_queue = 256;                    // per-subscriber backlog before dropping
};

/// Applies CINCH_LISTEN (host:port) and CINCH_TOKEN when set.
void apply_env(ServiceConfig& config);

/// Parses "host:port" or ":port".
std::pair<std::string, int> parse_listen(const std::string& text);

/// One message on the /telemetry stream.
struct StreamMessage {
  std::string event;  // "sample" or "event"
  std::string data;   // compact JSON
};

/// Bounded per-subscriber queue. A full queue drops its oldest sample first so
/// controller events (acks, transitions) survive a stalled reader.
class StreamQueue {
 public:
  explicit StreamQueue(std::size_t capacity) : capacity_(capacity) {}
  void push(StreamMessage m);
  /// Waits up to `timeout` for a message.
  std::optional<StreamMessage> pop(std::chrono::milliseconds timeout);
  void close();
  bool closed() const;
  std::uint64_t dropped() const;

 private:
  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<StreamMessage> items_;
  std::uint64_t dropped_ = 0;
  bool closed_ = false;
};

/// Long-running control service: one loop thread ticks the controller, HTTP
/// handlers only queue commands and read snapshots.
class Service {
 public:
  explicit Service(ServiceConfig config);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds, initializes the gripper and starts the loop. Throws BindError or
  /// TransportError.
  void start();
  void stop();
  /// Blocks until stop() is called from another thread or a signal handler.
  void wait();

  int port() const { return port_; }
  const std::string& host() const { return config_.host; }
  grasp::GraspController& controller() { return *controller_; }
  sim::VirtualBus* plant() { return rig_ ? &rig_->plant() : nullptr; }

  nlohmann::json state_json() const;
  nlohmann::json records_json() const;

  struct CommandReply {
    int status = 202;
    nlohmann::json body;
  };
  /// Validates and queues one CommandEnvelope. Same path as POST /command.
  CommandReply command(const nlohmann::json& envelope);

  std::shared_ptr<StreamQueue> subscribe();
  void unsubscribe(const std::shared_ptr<StreamQueue>& q);

 private:
  void open_transport();
  void routes();
  void loop();
  void broadcast(StreamMessage m);

  ServiceConfig config_;
  int port_ = 0;

  std::unique_ptr<sim::SimRig> rig_;
  std::unique_ptr<bus::MotorBus> bus_;
  std::unique_ptr<grasp::ControlClock> clock_;
  grasp::GraspController* controller_ = nullptr;
  std::unique_ptr<grasp::GraspController> owned_controller_;
  sim::PullSpec pull_;

  std::unique_ptr<httplib::Server> http_;
  std::thread http_thread_;
  std::thread loop_thread_;
  std::atomic<bool> running_{false};
  std::mutex stop_mutex_;
  std::condition_variable stop_cv_;

  std::mutex subscribers_mutex_;
  std::list<std::shared_ptr<StreamQueue>> subscribers_;
};

}  // namespace cinch::service
