#include "cinch/service/service.hpp"

#include <cctype>
#include <cstdlib>
#include <iostream>

#include <httplib.h>

#include "cinch/bus/serial_transport.hpp"
#include "cinch/service/calibration.hpp"
#include "cinch/telemetry/log.hpp"

namespace cinch::service {

using nlohmann::json;
using namespace std::chrono_literals;

namespace {

constexpr int kSchemaVersion = telemetry::kSchemaVersion;
constexpr double kMaxStreamHz = 100.0;

json motor_json(const bus::MotorState& m) {
  return {{"current_ma", m.current_ma}, {"velocity_rpm", m.velocity_rpm}, {"position_rev", m.position_rev}};
}

// "align-confirm", "align_confirm" and "AlignConfirm" all name the same command.
std::optional<grasp::CommandKind> command_from_text(const std::string& text) {
  std::string key;
  for (char c : text) {
    if (c != '-' && c != '_') key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  for (auto kind : {grasp::CommandKind::Open, grasp::CommandKind::AlignConfirm, grasp::CommandKind::Grasp,
                    grasp::CommandKind::Release, grasp::CommandKind::Abort, grasp::CommandKind::SetCurrent}) {
    std::string name;
    for (char c : grasp::to_string(kind)) name.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (name == key) return kind;
  }
  return std::nullopt;
}

json error_body(const std::string& error, const std::string& message) {
  return {{"schema_version", kSchemaVersion}, {"error", error}, {"message", message}};
}

}  // namespace

std::pair<std::string, int> parse_listen(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos) throw std::invalid_argument("listen address must be host:port, got '" + text + "'");
  std::string host = text.substr(0, colon);
  if (host.empty()) host = "127.0.0.1";
  int port = 0;
  try {
    std::size_t used = 0;
    port = std::stoi(text.substr(colon + 1), &used);
    if (used != text.size() - colon - 1) throw std::invalid_argument("trailing characters");
  } catch (const std::exception&) {
    throw std::invalid_argument("bad port in listen address '" + text + "'");
  }
  if (port < 0 || port > 65535) throw std::invalid_argument("port out of range in '" + text + "'");
  return {host, port};
}

void apply_env(ServiceConfig& config) {
  if (const char* listen = std::getenv("CINCH_LISTEN"); listen && *listen) {
    std::tie(config.host, config.port) = parse_listen(listen);
  }
  if (const char* token = std::getenv("CINCH_TOKEN"); token && *token) config.token = token;
}

void StreamQueue::push(StreamMessage m) {
  {
    std::lock_guard lock(mutex_);
    if (closed_) return;
    if (items_.size() >= capacity_) {
      auto victim = std::find_if(items_.begin(), items_.end(), [](const auto& i) { return i.event == "sample"; });
      if (victim == items_.end()) victim = items_.begin();
      items_.erase(victim);
      ++dropped_;
    }
    items_.push_back(std::move(m));
  }
  cv_.notify_one();
}

std::optional<StreamMessage> StreamQueue::pop(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mutex_);
  cv_.wait_for(lock, timeout, [&] { return closed_ || !items_.empty(); });
  if (items_.empty()) return std::nullopt;
  StreamMessage m = std::move(items_.front());
  items_.pop_front();
  return m;
}

void StreamQueue::close() {
  {
    std::lock_guard lock(mutex_);
    closed_ = true;
  }
  cv_.notify_all();
}

bool StreamQueue::closed() const {
  std::lock_guard lock(mutex_);
  return closed_;
}

std::uint64_t StreamQueue::dropped() const {
  std::lock_guard lock(mutex_);
  return dropped_;
}

Service::Service(ServiceConfig config) : config_(std::move(config)) {
  if (config_.stream_queue == 0) throw std::invalid_argument("stream_queue must be > 0");
  if (const auto* sim = std::get_if<SimBackend>(&config_.transport); sim && !(sim->speed > 0.0)) {
    throw std::invalid_argument("sim speed must be > 0");
  }
}

Service::~Service() { stop(); }

void Service::open_transport() {
  auto tune = [&](grasp::GraspConfig& g, bus::BusConfig& b) {
    if (config_.grasp.current_cap_ma) b.current_cap_ma = g.current_cap_ma = *config_.grasp.current_cap_ma;
    if (config_.grasp.reference_current_ma) g.reference_current_ma = *config_.grasp.reference_current_ma;
    g.validate();
  };

  std::optional<double> empty;
  if (config_.calibration) empty = load_calibration(*config_.calibration).empty_closure_position_rev;

  if (const auto* sim = std::get_if<SimBackend>(&config_.transport)) {
    sim::Scenario scenario;
    if (!sim->scenario.empty()) scenario = sim::load_scenario(sim->scenario);
    tune(scenario.grasp, scenario.bus);
    if (scenario.grasp.loop_rate_hz * sim->speed > kMaxStreamHz) {
      throw std::invalid_argument("loop rate x sim speed exceeds the 100 Hz stream limit");
    }
    for (const auto& step : scenario.script) {
      if (step.kind == sim::Step::Kind::Detach) pull_ = step.pull;
    }
    if (!empty && scenario.auto_calibrate) empty = sim::calibrate_empty(scenario).empty_closure_position_rev;
    rig_ = std::make_unique<sim::SimRig>(scenario.plant, scenario.grasp, scenario.bus);
    controller_ = &rig_->controller();
    // The loop thread owns the plant, so the pull starts inside the tick that enters Detaching.
    controller_->subscribe_events([this](const grasp::ControllerEvent& e) {
      if (e.type == grasp::ControllerEvent::Type::Transition && e.phase.is(grasp::GraspPhase::Kind::Detaching)) {
        rig_->plant().apply_pull(pull_.force, pull_.ramp);
      }
    });
  } else {
    const auto& serial = std::get<SerialBackend>(config_.transport);
    grasp::GraspConfig g;
    bus::BusConfig b;
    b.baud = serial.baud;
    tune(g, b);
    try {
      bus_ = std::make_unique<bus::MotorBus>(std::make_unique<bus::SerialTransport>(serial.device, serial.baud), b);
    } catch (const std::exception& e) {
      throw TransportError(e.what());
    }
    clock_ = std::make_unique<grasp::WallClock>();
    owned_controller_ = std::make_unique<grasp::GraspController>(*bus_, *clock_, g);
    controller_ = owned_controller_.get();
  }
  controller_->set_empty_closure_position(empty);
  try {
    controller_->initialize();
  } catch (const bus::BusError& e) {
    throw TransportError(std::string("gripper did not initialize: ") + e.what());
  }
  controller_->subscribe_samples(
      [this](const telemetry::TelemetrySample& s) { broadcast({"sample", telemetry::to_line(s)}); });
  controller_->subscribe_events(
      [this](const grasp::ControllerEvent& e) { broadcast({"event", telemetry::to_json(e).dump()}); });
}

json Service::state_json() const {
  const auto snap = controller_->snapshot();
  return {{"schema_version", kSchemaVersion},
          {"phase", grasp::to_string(snap.phase)},
          {"time", snap.time},
          {"ticks", snap.ticks},
          {"reference_current_ma", snap.reference_current_ma},
          {"current_cap_ma", snap.current_cap_ma},
          {"transport", std::holds_alternative<SimBackend>(config_.transport) ? "sim" : "serial"},
          {"closer", motor_json(snap.closer)},
          {"opener", motor_json(snap.opener)}};
}

json Service::records_json() const {
  json list = json::array();
  for (const auto& r : controller_->records()) list.push_back(telemetry::to_json(r));
  return {{"schema_version", kSchemaVersion}, {"records", list}};
}

Service::CommandReply Service::command(const json& envelope) {
  if (!envelope.is_object()) return {400, error_body("BadRequest", "envelope must be a JSON object")};
  if (envelope.contains("schema_version") && envelope["schema_version"] != kSchemaVersion) {
    return {400, error_body("SchemaMismatch", "schema_version must be " + std::to_string(kSchemaVersion))};
  }
  const auto name = envelope.find("command");
  if (name == envelope.end() || !name->is_string()) return {400, error_body("BadRequest", "missing command")};
  const auto kind = command_from_text(name->get<std::string>());
  if (!kind) return {400, error_body("BadRequest", "unknown command '" + name->get<std::string>() + "'")};

  grasp::Command cmd{*kind, 0.0, 0};
  if (auto id = envelope.find("request_id"); id != envelope.end()) {
    if (!id->is_number_unsigned() || id->get<std::uint64_t>() == 0) {
      return {400, error_body("BadRequest", "request_id must be a positive integer")};
    }
    cmd.request_id = id->get<std::uint64_t>();
  }
  if (*kind == grasp::CommandKind::SetCurrent) {
    const auto ma = envelope.find("current_ma");
    if (ma == envelope.end() || !ma->is_number()) return {400, error_body("BadRequest", "SetCurrent needs current_ma")};
    cmd.current_ma = ma->get<double>();
    const double cap = controller_->snapshot().current_cap_ma;
    if (!(cmd.current_ma > 0.0) || cmd.current_ma > cap) {
      return {400, error_body("OutOfRange", "current_ma must be in (0, " + std::to_string(cap) + "]")};
    }
  }

  const auto phase = controller_->phase();
  if (!grasp::command_allowed(phase, *kind)) {
    json body = error_body("PhaseError", std::string(grasp::to_string(*kind)) + " not allowed in " + grasp::to_string(phase));
    body["phase"] = grasp::to_string(phase);
    return {409, body};
  }
  // The phase may still move before the next tick; the controller then emits a Reject event with this id.
  const auto id = controller_->submit(cmd);
  json body = {{"schema_version", kSchemaVersion}, {"request_id", id}, {"phase", grasp::to_string(phase)}};
  if (auto at = envelope.find("issued_at"); at != envelope.end()) body["issued_at"] = *at;
  return {202, body};
}

std::shared_ptr<StreamQueue> Service::subscribe() {
  auto q = std::make_shared<StreamQueue>(config_.stream_queue);
  std::lock_guard lock(subscribers_mutex_);
  subscribers_.push_back(q);
  return q;
}

void Service::unsubscribe(const std::shared_ptr<StreamQueue>& q) {
  q->close();
  std::lock_guard lock(subscribers_mutex_);
  subscribers_.remove(q);
}

void Service::broadcast(StreamMessage m) {
  std::lock_guard lock(subscribers_mutex_);
  for (auto& q : subscribers_) q->push(m);
}

void Service::routes() {
  auto& svr = *http_;
  auto reply = [](httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  };

  svr.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  svr.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type, Authorization");
    res.status = 204;
  });

  svr.Get("/state", [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, 200, state_json()); });
  svr.Get("/records", [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, 200, records_json()); });

  svr.Post("/command", [this, reply](const httplib::Request& req, httplib::Response& res) {
    if (config_.token && req.get_header_value("Authorization") != "Bearer " + *config_.token) {
      reply(res, 401, error_body("Unauthorized", "missing or wrong bearer token"));
      return;
    }
    json envelope;
    try {
      envelope = json::parse(req.body);
    } catch (const json::parse_error& e) {
      reply(res, 400, error_body("BadRequest", e.what()));
      return;
    }
    const auto r = command(envelope);
    reply(res, r.status, r.body);
  });

  svr.Get("/telemetry", [this](const httplib::Request&, httplib::Response& res) {
    auto q = subscribe();
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider(
        "text/event-stream",
        [this, q, reported = std::uint64_t{0}](std::size_t, httplib::DataSink& sink) mutable {
          if (!running_ || q->closed()) return false;
          const auto m = q->pop(500ms);
          std::string out;
          if (const auto lost = q->dropped(); lost > reported) {
            reported = lost;
            out = "event: dropped\ndata: " + json{{"schema_version", kSchemaVersion}, {"dropped", lost}}.dump() + "\n\n";
          }
          out += m ? "event: " + m->event + "\ndata: " + m->data + "\n\n" : std::string(": idle\n\n");
          return sink.write(out.data(), out.size());
        },
        [this, q](bool) { unsubscribe(q); });
  });
}

void Service::loop() {
  const double period = controller_->config().period_s();
  const auto* sim = std::get_if<SimBackend>(&config_.transport);
  auto next = std::chrono::steady_clock::now();
  while (running_) {
    try {
      controller_->tick();
    } catch (const std::exception& e) {
      std::cerr << "control tick failed: " << e.what() << '\n';
    }
    if (sim) {
      // SimClock advances instantly; pace it against the wall here.
      next += std::chrono::duration_cast<std::chrono::steady_clock::duration>(
          std::chrono::duration<double>(period / sim->speed));
      std::this_thread::sleep_until(next);
    }
  }
}

void Service::start() {
  if (running_) return;
  open_transport();
  http_ = std::make_unique<httplib::Server>();
  // The library default adds SO_REUSEPORT, which lets a second instance share the port.
  http_->set_socket_options([](socket_t sock) {
    int yes = 1;
    ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
  });
  routes();
  if (config_.port == 0) {
    port_ = http_->bind_to_any_port(config_.host);
    if (port_ <= 0) throw BindError("cannot bind " + config_.host);
  } else {
    if (!http_->bind_to_port(config_.host, config_.port)) {
      throw BindError("cannot bind " + config_.host + ":" + std::to_string(config_.port));
    }
    port_ = config_.port;
  }
  running_ = true;
  loop_thread_ = std::thread([this] { loop(); });
  http_thread_ = std::thread([this] { http_->listen_after_bind(); });
  http_->wait_until_ready();
}

void Service::stop() {
  if (!running_.exchange(false)) return;
  {
    std::lock_guard lock(subscribers_mutex_);
    for (auto& q : subscribers_) q->close();
  }
  if (http_) http_->stop();
  if (http_thread_.joinable()) http_thread_.join();
  if (loop_thread_.joinable()) loop_thread_.join();
  if (controller_) {
    // Leave the gripper slack.
    try {
      controller_->submit({grasp::CommandKind::Abort, 0.0, 0});
      if (std::holds_alternative<SerialBackend>(config_.transport)) controller_->tick();
    } catch (const std::exception&) {
    }
  }
  std::lock_guard lock(stop_mutex_);
  stop_cv_.notify_all();
}

void Service::wait() {
  std::unique_lock lock(stop_mutex_);
  stop_cv_.wait(lock, [&] { return !running_; });
}

}  // namespace cinch::service
