#include <gtest/gtest.h>

#include <httplib.h>

#include <atomic>
#include <cstdlib>
#include <random>
#include <set>
#include <thread>

#include "cinch/service/service.hpp"
#include "cinch/telemetry/log.hpp"

using namespace cinch;
using namespace cinch::service;
using namespace std::chrono_literals;
using nlohmann::json;

namespace {

const std::filesystem::path kScenarios = CINCH_SCENARIO_DIR;

ServiceConfig sim_config(const std::string& scenario = "medium_tomato.yaml") {
  ServiceConfig c;
  c.port = 0;
  c.transport = SimBackend{kScenarios / scenario, 2.0};
  return c;
}

json post(httplib::Client& cli, const json& body, const httplib::Headers& headers = {}) {
  auto res = cli.Post("/command", headers, body.dump(), "application/json");
  if (!res) return json{{"status", -1}};
  json out = json::parse(res->body, nullptr, false);
  out["__status"] = res->status;
  return out;
}

std::string phase_of(httplib::Client& cli) {
  auto res = cli.Get("/state");
  return res ? json::parse(res->body)["phase"].get<std::string>() : "";
}

bool wait_phase(httplib::Client& cli, const std::string& phase, std::chrono::milliseconds limit = 10s) {
  const auto end = std::chrono::steady_clock::now() + limit;
  while (std::chrono::steady_clock::now() < end) {
    if (phase_of(cli) == phase) return true;
    std::this_thread::sleep_for(20ms);
  }
  return false;
}

/// Reads /telemetry in a thread and splits the stream into messages.
class SseReader {
 public:
  SseReader(int port) : cli_("127.0.0.1", port) {
    cli_.set_read_timeout(5, 0);
    thread_ = std::thread([this] {
      std::string buf;
      cli_.Get("/telemetry", [&](const char* data, std::size_t n) {
        buf.append(data, n);
        std::size_t end;
        while ((end = buf.find("\n\n")) != std::string::npos) {
          parse(buf.substr(0, end));
          buf.erase(0, end + 2);
        }
        return !stop_;
      });
    });
  }
  ~SseReader() { close(); }

  void close() {
    stop_ = true;
    if (thread_.joinable()) thread_.join();
  }

  std::vector<StreamMessage> messages() {
    std::lock_guard lock(mutex_);
    return messages_;
  }

  template <typename Pred>
  bool wait_for(Pred pred, std::chrono::milliseconds limit = 10s) {
    const auto end = std::chrono::steady_clock::now() + limit;
    while (std::chrono::steady_clock::now() < end) {
      for (const auto& m : messages()) {
        if (pred(m)) return true;
      }
      std::this_thread::sleep_for(10ms);
    }
    return false;
  }

 private:
  void parse(const std::string& block) {
    if (block.rfind(":", 0) == 0) return;  // keep-alive comment
    StreamMessage m;
    std::size_t pos = 0;
    while (pos < block.size()) {
      auto nl = block.find('\n', pos);
      if (nl == std::string::npos) nl = block.size();
      const auto line = block.substr(pos, nl - pos);
      if (line.rfind("event: ", 0) == 0) m.event = line.substr(7);
      if (line.rfind("data: ", 0) == 0) m.data = line.substr(6);
      pos = nl + 1;
    }
    std::lock_guard lock(mutex_);
    messages_.push_back(std::move(m));
  }

  httplib::Client cli_;
  std::thread thread_;
  std::atomic<bool> stop_{false};
  std::mutex mutex_;
  std::vector<StreamMessage> messages_;
};

bool is_transition_to(const StreamMessage& m, const std::string& phase) {
  if (m.event != "event") return false;
  const auto j = json::parse(m.data);
  return j["type"] == "transition" && j["phase"] == phase;
}

}  // namespace

TEST(Listen, ParsesForms) {
  EXPECT_EQ(parse_listen("0.0.0.0:9000"), std::make_pair(std::string("0.0.0.0"), 9000));
  EXPECT_EQ(parse_listen(":8081").second, 8081);
  EXPECT_THROW(parse_listen("nohost"), std::invalid_argument);
  EXPECT_THROW(parse_listen("h:99999"), std::invalid_argument);
}

TEST(Listen, EnvironmentOverrides) {
  ::setenv("CINCH_LISTEN", "127.0.0.2:9123", 1);
  ::setenv("CINCH_TOKEN", "abc", 1);
  ServiceConfig c;
  apply_env(c);
  ::unsetenv("CINCH_LISTEN");
  ::unsetenv("CINCH_TOKEN");
  EXPECT_EQ(c.host, "127.0.0.2");
  EXPECT_EQ(c.port, 9123);
  EXPECT_EQ(c.token, "abc");
}

TEST(StreamQueue, DropsOldestSampleBeforeEvents) {
  StreamQueue q(3);
  q.push({"event", "e1"});
  q.push({"sample", "s1"});
  q.push({"sample", "s2"});
  q.push({"event", "e2"});
  EXPECT_EQ(q.dropped(), 1u);
  std::vector<std::string> got;
  while (auto m = q.pop(0ms)) got.push_back(m->data);
  EXPECT_EQ(got, (std::vector<std::string>{"e1", "s2", "e2"}));
}

TEST(StreamQueue, CloseWakesReader) {
  StreamQueue q(4);
  std::thread t([&] {
    std::this_thread::sleep_for(50ms);
    q.close();
  });
  const auto start = std::chrono::steady_clock::now();
  EXPECT_FALSE(q.pop(5s));
  EXPECT_LT(std::chrono::steady_clock::now() - start, 2s);
  EXPECT_TRUE(q.closed());
  t.join();
}

TEST(Service, StateAndRecords) {
  Service svc(sim_config());
  svc.start();
  httplib::Client cli("127.0.0.1", svc.port());
  auto res = cli.Get("/state");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  const auto st = json::parse(res->body);
  EXPECT_EQ(st["schema_version"], 1);
  EXPECT_EQ(st["phase"], "Idle");
  EXPECT_EQ(st["transport"], "sim");
  EXPECT_EQ(st["reference_current_ma"], 100.0);
  EXPECT_TRUE(st["closer"].contains("current_ma"));
  res = cli.Get("/records");
  ASSERT_TRUE(res);
  EXPECT_EQ(json::parse(res->body)["records"].size(), 0u);
  res = cli.Options("/command");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "*");
  svc.stop();
}

TEST(Service, GraspFromIdleIsConflict) {
  Service svc(sim_config());
  svc.start();
  httplib::Client cli("127.0.0.1", svc.port());
  const auto r = post(cli, {{"schema_version", 1}, {"command", "Grasp"}});
  EXPECT_EQ(r["__status"], 409);
  EXPECT_EQ(r["error"], "PhaseError");
  EXPECT_EQ(r["phase"], "Idle");
  svc.stop();
}

TEST(Service, BadEnvelopes) {
  Service svc(sim_config());
  svc.start();
  httplib::Client cli("127.0.0.1", svc.port());
  EXPECT_EQ(post(cli, json::array())["__status"], 400);
  EXPECT_EQ(post(cli, {{"schema_version", 7}, {"command", "Open"}})["__status"], 400);
  EXPECT_EQ(post(cli, {{"command", "Dance"}})["__status"], 400);
  EXPECT_EQ(post(cli, {{"command", "SetCurrent"}})["__status"], 400);
  const auto r = post(cli, {{"command", "SetCurrent"}, {"current_ma", 500}});
  EXPECT_EQ(r["__status"], 400);
  EXPECT_EQ(r["error"], "OutOfRange");
  auto raw = cli.Post("/command", "{not json", "application/json");
  ASSERT_TRUE(raw);
  EXPECT_EQ(raw->status, 400);
  svc.stop();
}

TEST(Service, GraspFromOpenStreamsEnclosing) {
  Service svc(sim_config());
  svc.start();
  httplib::Client cli("127.0.0.1", svc.port());
  SseReader sse(svc.port());
  ASSERT_TRUE(sse.wait_for([](const StreamMessage& m) { return m.event == "sample"; }));

  auto r = post(cli, {{"schema_version", 1}, {"command", "Open"}, {"request_id", 41}, {"issued_at", "t0"}});
  EXPECT_EQ(r["__status"], 202);
  EXPECT_EQ(r["request_id"], 41);
  EXPECT_EQ(r["issued_at"], "t0");
  ASSERT_TRUE(wait_phase(cli, "Open"));

  r = post(cli, {{"schema_version", 1}, {"command", "grasp"}});
  EXPECT_EQ(r["__status"], 202);
  EXPECT_TRUE(sse.wait_for([](const StreamMessage& m) { return is_transition_to(m, "Enclosing"); }));
  EXPECT_TRUE(sse.wait_for([](const StreamMessage& m) { return is_transition_to(m, "Secured"); }));
  sse.close();
  svc.stop();
}

TEST(Service, TokenGuardsCommands) {
  auto c = sim_config();
  c.token = "s3cret";
  Service svc(c);
  svc.start();
  httplib::Client cli("127.0.0.1", svc.port());
  EXPECT_EQ(post(cli, {{"command", "Open"}})["__status"], 401);
  EXPECT_EQ(post(cli, {{"command", "Open"}}, {{"Authorization", "Bearer wrong"}})["__status"], 401);
  EXPECT_EQ(post(cli, {{"command", "Open"}}, {{"Authorization", "Bearer s3cret"}})["__status"], 202);
  auto res = cli.Get("/state");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  svc.stop();
}

TEST(Service, SubscribersSeeIdenticalSequences) {
  Service svc(sim_config());
  svc.start();
  httplib::Client cli("127.0.0.1", svc.port());
  SseReader a(svc.port());
  SseReader b(svc.port());
  auto has_sample = [](const StreamMessage& m) { return m.event == "sample"; };
  ASSERT_TRUE(a.wait_for(has_sample));
  ASSERT_TRUE(b.wait_for(has_sample));
  ASSERT_EQ(post(cli, {{"command", "Open"}})["__status"], 202);
  ASSERT_TRUE(a.wait_for([](const StreamMessage& m) { return is_transition_to(m, "Open"); }));
  ASSERT_TRUE(b.wait_for([](const StreamMessage& m) { return is_transition_to(m, "Open"); }));
  a.close();
  b.close();
  svc.stop();

  // Align on the first message both saw, then compare the common run.
  const auto ma = a.messages();
  const auto mb = b.messages();
  std::size_t ia = 0, ib = mb.size();
  for (; ia < ma.size(); ++ia) {
    const auto it = std::find_if(mb.begin(), mb.end(), [&](const StreamMessage& m) { return m.data == ma[ia].data; });
    if (it != mb.end()) {
      ib = static_cast<std::size_t>(it - mb.begin());
      break;
    }
  }
  ASSERT_LT(ia, ma.size());
  std::size_t common = 0;
  for (; ia + common < ma.size() && ib + common < mb.size(); ++common) {
    ASSERT_EQ(ma[ia + common].event, mb[ib + common].event) << "at " << common;
    ASSERT_EQ(ma[ia + common].data, mb[ib + common].data) << "at " << common;
  }
  EXPECT_GT(common, 20u);
}

TEST(Service, StreamOrderMatchesLog) {
  Service svc(sim_config());
  std::mutex mutex;
  std::vector<std::string> log;
  svc.start();
  auto q = svc.subscribe();
  svc.controller().subscribe_samples([&](const telemetry::TelemetrySample& s) {
    std::lock_guard lock(mutex);
    log.push_back(telemetry::to_line(s));
  });
  httplib::Client cli("127.0.0.1", svc.port());
  ASSERT_EQ(post(cli, {{"command", "Open"}})["__status"], 202);
  ASSERT_TRUE(wait_phase(cli, "Open"));
  svc.stop();

  std::vector<std::string> streamed;
  double last = -1.0;
  while (auto m = q->pop(0ms)) {
    if (m->event != "sample") continue;
    const double t = json::parse(m->data)["time"].get<double>();
    EXPECT_GT(t, last);
    last = t;
    streamed.push_back(m->data);
  }
  EXPECT_EQ(q->dropped(), 0u);
  ASSERT_FALSE(streamed.empty());
  // The log subscription starts a tick or so later; it must be a suffix.
  std::lock_guard lock(mutex);
  ASSERT_LE(log.size(), streamed.size());
  const auto offset = streamed.size() - log.size();
  for (std::size_t i = 0; i < log.size(); ++i) ASSERT_EQ(streamed[offset + i], log[i]) << i;
}

// Random commands from several threads: every accepted request id must come
// back as an Ack or Reject on the event stream.
TEST(Service, CommandStormNoSilentDrops) {
  auto c = sim_config();
  c.stream_queue = 1u << 20;
  Service svc(c);
  svc.start();
  auto q = svc.subscribe();
  std::mutex mutex;
  std::set<std::uint64_t> accepted;
  std::atomic<int> answered_sync{0};
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&, t] {
      std::mt19937_64 rng(100 + t);
      const char* names[] = {"Open", "AlignConfirm", "Grasp", "Release", "Abort", "SetCurrent"};
      std::uniform_int_distribution<int> pick(0, 5);
      std::uniform_real_distribution<double> ma(-10.0, 200.0);
      for (int i = 0; i < 60; ++i) {
        json env{{"schema_version", 1}, {"command", names[pick(rng)]}};
        if (env["command"] == "SetCurrent") env["current_ma"] = ma(rng);
        const auto r = svc.command(env);
        if (r.status == 202) {
          std::lock_guard lock(mutex);
          accepted.insert(r.body["request_id"].get<std::uint64_t>());
        } else {
          ASSERT_TRUE(r.status == 400 || r.status == 409) << r.status;
          ++answered_sync;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(rng() % 15));
      }
    });
  }
  for (auto& th : threads) th.join();
  std::this_thread::sleep_for(100ms);  // let the last queued commands reach a tick
  svc.stop();

  std::set<std::uint64_t> answered;
  while (auto m = q->pop(0ms)) {
    if (m->event != "event") continue;
    const auto j = json::parse(m->data);
    if ((j["type"] == "ack" || j["type"] == "reject") && j.contains("request_id")) {
      answered.insert(j["request_id"].get<std::uint64_t>());
    }
  }
  EXPECT_EQ(q->dropped(), 0u);
  EXPECT_EQ(accepted.size() + answered_sync, 240u);
  for (auto id : accepted) EXPECT_TRUE(answered.count(id)) << "request " << id << " never answered";
}

TEST(Service, BindErrorOnTakenPort) {
  Service a(sim_config());
  a.start();
  auto c = sim_config();
  c.port = a.port();
  Service b(c);
  EXPECT_THROW(b.start(), BindError);
  a.stop();
}

TEST(Service, StopAbortsAndReleasesWait) {
  Service svc(sim_config());
  svc.start();
  std::thread waiter([&] { svc.wait(); });
  svc.stop();
  waiter.join();
  SUCCEED();
}
