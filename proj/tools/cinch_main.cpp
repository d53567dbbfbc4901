// cinch: scenarios, batches, calibration, the control service and log analysis.

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "cinch/bus/serial_transport.hpp"
#include "cinch/service/calibration.hpp"
#include "cinch/service/service.hpp"
#include "cinch/sim/batch.hpp"
#include "cinch/sim/runner.hpp"
#include "cinch/telemetry/analysis.hpp"
#include "cinch/telemetry/log.hpp"

namespace fs = std::filesystem;
using namespace cinch;

namespace {

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kBadInput = 2;

volatile std::sig_atomic_t g_stop = 0;
void on_signal(int) { g_stop = 1; }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::vector<std::string> split_fields(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string f; std::getline(ss, f, ',');) {
    if (!f.empty()) out.push_back(f);
  }
  return out;
}

struct CurrentFlags {
  std::optional<double> current;
  std::optional<double> cap;

  void add(CLI::App* app) {
    app->add_option("--current", current, "Reference grip current, mA")->check(CLI::PositiveNumber);
    app->add_option("--current-cap", cap, "Motor-bus current cap, mA")->check(CLI::PositiveNumber);
  }
  void apply(grasp::GraspConfig& g, bus::BusConfig& b) const {
    if (cap) b.current_cap_ma = g.current_cap_ma = *cap;
    if (current) g.reference_current_ma = *current;
    g.validate();
  }
};

// ---- sim ----

struct SimArgs {
  fs::path scenario;
  fs::path out = ".";
  std::optional<std::string> expect;
  bool export_trace = false;
  CurrentFlags currents;
};

int cmd_sim(const SimArgs& a) {
  sim::Scenario s = sim::load_scenario(a.scenario);
  a.currents.apply(s.grasp, s.bus);
  if (a.expect) {
    const auto outcome = grasp::parse_outcome(*a.expect);
    if (!outcome) {
      std::cerr << "unknown outcome '" << *a.expect << "'\n";
      return kBadInput;
    }
    s.expect.outcome = outcome;
  }

  const auto r = sim::run_scenario(s);
  fs::create_directories(a.out);
  const fs::path base = a.out / s.name;
  write_text(base.string() + ".log.jsonl", sim::log_text(r.samples));
  write_text(base.string() + ".events.jsonl", sim::events_text(r.events));
  telemetry::write_records(base.string() + ".records.jsonl", r.records);
  if (a.export_trace) {
    const auto table = telemetry::select_series(
        r.samples, {"closer.current_ma", "closer.velocity_rpm", "opener.current_ma", "opener.velocity_rpm"});
    write_text(base.string() + ".trace.csv", telemetry::to_csv(table));
    write_text(base.string() + ".trace.svg", telemetry::render_svg(r.samples, s.grasp.reference_current_ma));
  }

  std::cout << s.name << ": ";
  if (r.outcome) {
    std::cout << grasp::to_string(r.outcome->result) << " after " << r.outcome->elapsed_ms << " ms, closer "
              << r.outcome->steady_current_ma << " mA";
  } else {
    std::cout << "no grasp outcome";
  }
  if (r.record) std::cout << (r.record->detached ? ", detached" : ", not detached");
  if (r.final_state.fruit_damaged) std::cout << ", DAMAGED";
  std::cout << '\n';
  for (const auto& note : r.notes) std::cout << "note: " << note << '\n';
  if (r.error) std::cout << "error: " << *r.error << '\n';
  if (!r.expectation_met()) {
    for (const auto& m : r.mismatches) std::cout << "- " << m << '\n';
    return kFailed;
  }
  return kOk;
}

// ---- batch ----

struct BatchArgs {
  fs::path spec;
  std::optional<fs::path> out;
  double damage_scale = 1.0;
  CurrentFlags currents;
};

int cmd_batch(const BatchArgs& a) {
  const auto spec = sim::load_batch(a.spec);
  sim::BatchOverrides o;
  o.reference_current_ma = a.currents.current;
  o.current_cap_ma = a.currents.cap;
  o.damage_force_scale = a.damage_scale;
  const auto report = sim::run_batch(spec, o);
  const std::string text = sim::render_batch_report(report);
  std::cout << text;
  if (a.out) {
    fs::create_directories(*a.out);
    write_text(*a.out / "report.txt", text);
    telemetry::write_records(*a.out / "records.jsonl", report.records);
  }
  return report.clean() ? kOk : kFailed;
}

// ---- calibrate ----

struct CalibrateArgs {
  fs::path out = "calibration.json";
  std::optional<fs::path> scenario;
  std::optional<std::string> serial;
  std::uint32_t baud = 57600;
  bool force = false;
};

int cmd_calibrate(const CalibrateArgs& a) {
  if (!a.force && fs::exists(a.out)) {
    std::cerr << a.out.string() << " exists; pass --force to overwrite\n";
    return kFailed;
  }
  grasp::CalibrationResult result;
  double margin = 0.0;
  try {
    if (a.serial) {
      grasp::GraspConfig g;
      bus::BusConfig b;
      b.baud = a.baud;
      bus::MotorBus bus(std::make_unique<bus::SerialTransport>(*a.serial, a.baud), b);
      grasp::WallClock clock;
      grasp::GraspController c(bus, clock, g);
      c.initialize();
      c.open_gripper();
      result = c.calibrate_empty_closure();
      margin = g.calibration_margin;
    } else {
      // The plant is taken as written: an object left in the scenario makes the close fail.
      sim::Scenario s = a.scenario ? sim::load_scenario(*a.scenario) : sim::Scenario{};
      result = sim::calibrate(s.plant, s.grasp, s.bus);
      margin = s.grasp.calibration_margin;
    }
  } catch (const grasp::GraspError& e) {
    const char* kind = e.kind() == grasp::GraspError::Kind::NotSettled ? "NotSettled" : "calibration failed";
    std::cerr << kind << ": " << e.what() << '\n';
    return kFailed;
  }
  service::save_calibration(a.out, result, margin, a.force);
  std::cout << "settle " << result.settle_position_rev << " rev, empty closure " << result.empty_closure_position_rev
            << " rev -> " << a.out.string() << '\n';
  return kOk;
}

// ---- serve ----

struct ServeArgs {
  std::optional<fs::path> scenario;
  std::optional<std::string> serial;
  std::uint32_t baud = 57600;
  std::string listen = "127.0.0.1:8080";
  std::optional<std::string> token;
  std::optional<fs::path> calibration;
  double speed = 1.0;
  CurrentFlags currents;
};

int cmd_serve(const ServeArgs& a) {
  service::ServiceConfig cfg;
  std::tie(cfg.host, cfg.port) = service::parse_listen(a.listen);
  if (a.serial) {
    cfg.transport = service::SerialBackend{*a.serial, a.baud};
  } else {
    cfg.transport = service::SimBackend{a.scenario.value_or(fs::path{}), a.speed};
  }
  cfg.grasp = {a.currents.current, a.currents.cap};
  cfg.token = a.token;
  cfg.calibration = a.calibration;
  service::apply_env(cfg);

  service::Service svc(cfg);
  svc.start();
  std::cout << "listening on http://" << svc.host() << ":" << svc.port() << std::endl;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  svc.stop();
  return kOk;
}

// ---- session (hardware, operator at the terminal) ----

struct SessionArgs {
  std::string serial;
  std::uint32_t baud = 57600;
  std::optional<fs::path> calibration;
  fs::path out = ".";
  CurrentFlags currents;
};

int cmd_session(const SessionArgs& a) {
  grasp::GraspConfig g;
  bus::BusConfig b;
  b.baud = a.baud;
  a.currents.apply(g, b);
  bus::MotorBus bus(std::make_unique<bus::SerialTransport>(a.serial, a.baud), b);
  grasp::WallClock clock;
  grasp::GraspController c(bus, clock, g);
  if (a.calibration) c.set_empty_closure_position(service::load_calibration(*a.calibration).empty_closure_position_rev);

  fs::create_directories(a.out);
  telemetry::LogWriter log(a.out / "session.log.jsonl", true);
  c.subscribe_samples([&](const telemetry::TelemetrySample& s) { log.append(s); });
  c.subscribe_events([](const grasp::ControllerEvent& e) {
    if (e.type != grasp::ControllerEvent::Type::Record) std::cout << telemetry::to_json(e).dump() << '\n';
  });

  auto prompt = [](const char* what) {
    std::cout << what << " [enter]" << std::flush;
    std::string line;
    return static_cast<bool>(std::getline(std::cin, line));
  };
  c.initialize();
  c.open_gripper();
  if (!prompt("align the gripper over the fruit")) return kFailed;
  c.confirm_align();
  const auto outcome = c.close_grasp();
  if (outcome.result != grasp::OutcomeResult::Secured) {
    c.abort();
    return kFailed;
  }
  // The grip keeps being served while the operator pulls; enter marks the fruit as off the stem.
  std::thread operator_input;
  c.detach_and_release([&] {
    operator_input = std::thread([&] {
      prompt("pull to detach, then confirm");
      c.submit({grasp::CommandKind::Release, 0.0, 0});
    });
  });
  operator_input.join();
  telemetry::write_records(a.out / "session.records.jsonl", c.records());
  return kOk;
}

// ---- analyze ----

struct AnalyzeArgs {
  std::vector<fs::path> logs;
  std::optional<fs::path> records;
  std::optional<fs::path> bursts;
  std::optional<double> threshold;
  std::optional<fs::path> force_csv;
  std::string fields = "closer.current_ma,closer.velocity_rpm";
  std::optional<fs::path> csv;
  std::optional<fs::path> svg;
  double reference = 100.0;
};

int cmd_rates(const AnalyzeArgs& a) {
  std::cout << telemetry::render_rate_table(telemetry::rate_table(telemetry::load_records(*a.records)));
  return kOk;
}

int cmd_threshold(const AnalyzeArgs& a) {
  std::ifstream in(*a.bursts);
  if (!in) throw std::runtime_error("cannot open " + a.bursts->string());
  const auto study = telemetry::compute_threshold(telemetry::parse_burst_csv(in));
  std::cout << "n " << study.samples.size() << "\nthreshold " << study.threshold << " N\nmin " << study.min
            << " N\nmax " << study.max << " N\nstddev " << study.stddev << " N\n";
  return kOk;
}

int cmd_margin(const AnalyzeArgs& a) {
  double threshold = 0.0;
  if (a.threshold) {
    threshold = *a.threshold;
  } else if (a.bursts) {
    std::ifstream in(*a.bursts);
    threshold = telemetry::compute_threshold(telemetry::parse_burst_csv(in)).threshold;
  } else {
    std::cerr << "margin needs --threshold or --bursts\n";
    return kBadInput;
  }
  std::vector<telemetry::HarvestLog> logs;
  for (const auto& p : a.logs) {
    telemetry::HarvestLog h{p.stem().string(), telemetry::load_log(p), {}};
    if (a.force_csv && a.logs.size() == 1) {
      std::ifstream in(*a.force_csv);
      h.external_force = telemetry::parse_force_csv(in);
    }
    logs.push_back(std::move(h));
  }
  const auto report = telemetry::margin_report(logs, threshold);
  std::cout << telemetry::render_margin_report(report);
  return report.violations == 0 ? kOk : kFailed;
}

int cmd_export(const AnalyzeArgs& a) {
  if (a.logs.size() != 1) {
    std::cerr << "export takes exactly one log\n";
    return kBadInput;
  }
  const auto log = telemetry::load_log(a.logs.front());
  const auto csv = telemetry::to_csv(telemetry::select_series(log, split_fields(a.fields)));
  if (a.csv) write_text(*a.csv, csv);
  else std::cout << csv;
  if (a.svg) write_text(*a.svg, telemetry::render_svg(log, a.reference));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Control, simulation and analysis for the two-motor drawstring gripper", "cinch"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "cinch 0.3.0");

  SimArgs sim_args;
  auto* sim_cmd = app.add_subcommand("sim", "Run one scenario on the simulated plant");
  sim_cmd->add_option("--scenario,scenario", sim_args.scenario, "Scenario YAML")->required();
  sim_cmd->add_option("--out", sim_args.out, "Directory for log, events, records");
  sim_cmd->add_option("--expect", sim_args.expect, "Override the expected outcome");
  sim_cmd->add_flag("--export", sim_args.export_trace, "Also write current/velocity CSV and SVG");
  sim_args.currents.add(sim_cmd);

  BatchArgs batch_args;
  auto* batch_cmd = app.add_subcommand("batch", "Run a batch spec and print the damage table");
  batch_cmd->add_option("--scenario,spec", batch_args.spec, "Batch YAML")->required();
  batch_cmd->add_option("--out", batch_args.out, "Directory for report and records");
  batch_cmd->add_option("--damage-scale", batch_args.damage_scale, "Multiply every damage force")
      ->check(CLI::PositiveNumber);
  batch_args.currents.add(batch_cmd);

  CalibrateArgs cal_args;
  auto* cal_cmd = app.add_subcommand("calibrate", "Close on empty air and store the empty-closure position");
  cal_cmd->add_option("--out", cal_args.out, "Calibration file");
  auto* cal_scn = cal_cmd->add_option("--scenario", cal_args.scenario, "Simulated hardware (default plant if omitted)");
  cal_cmd->add_option("--serial", cal_args.serial, "Serial device")->excludes(cal_scn);
  cal_cmd->add_option("--baud", cal_args.baud, "Baud rate");
  cal_cmd->add_flag("--force", cal_args.force, "Overwrite an existing file");

  ServeArgs serve_args;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP command and telemetry service");
  auto* srv_scn = serve_cmd->add_option("--scenario", serve_args.scenario, "Simulated plant");
  serve_cmd->add_option("--serial", serve_args.serial, "Serial device")->excludes(srv_scn);
  serve_cmd->add_option("--baud", serve_args.baud, "Baud rate");
  serve_cmd->add_option("--listen", serve_args.listen, "host:port (CINCH_LISTEN overrides)");
  serve_cmd->add_option("--token", serve_args.token, "Bearer token for POST /command (CINCH_TOKEN overrides)");
  serve_cmd->add_option("--calibration", serve_args.calibration, "Calibration file")->check(CLI::ExistingFile);
  serve_cmd->add_option("--speed", serve_args.speed, "Sim seconds per wall second")->check(CLI::PositiveNumber);
  serve_args.currents.add(serve_cmd);

  SessionArgs session_args;
  auto* session_cmd = app.add_subcommand("session", "One operator-paced harvest on hardware");
  session_cmd->add_option("--serial", session_args.serial, "Serial device")->required();
  session_cmd->add_option("--baud", session_args.baud, "Baud rate");
  session_cmd->add_option("--calibration", session_args.calibration, "Calibration file")->check(CLI::ExistingFile);
  session_cmd->add_option("--out", session_args.out, "Directory for log and records");
  session_args.currents.add(session_cmd);

  AnalyzeArgs an;
  auto* analyze = app.add_subcommand("analyze", "Offline analysis of logs and records");
  analyze->require_subcommand(1);
  auto* rates = analyze->add_subcommand("rates", "Damage and bruise rates per class");
  rates->add_option("--records,records", an.records, "Records JSONL")->required();
  auto* threshold = analyze->add_subcommand("threshold", "Damage threshold from burst measurements");
  threshold->add_option("--bursts,bursts", an.bursts, "CSV fruit_id,burst_force")->required();
  auto* margin = analyze->add_subcommand("margin", "Peak grip force against the damage threshold");
  margin->add_option("logs", an.logs, "Telemetry logs")->required();
  margin->add_option("--threshold", an.threshold, "Threshold, N");
  margin->add_option("--bursts", an.bursts, "Derive the threshold from burst measurements");
  margin->add_option("--force-csv", an.force_csv, "External force readings (time,force), single log only");
  auto* exp = analyze->add_subcommand("export", "Series CSV and current/velocity chart");
  exp->add_option("log", an.logs, "Telemetry log")->required();
  exp->add_option("--fields", an.fields, "Comma-separated series fields");
  exp->add_option("--csv", an.csv, "CSV output (stdout if omitted)");
  exp->add_option("--svg", an.svg, "SVG chart output");
  exp->add_option("--reference", an.reference, "Reference current line, mA");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kBadInput;
  }

  try {
    if (*sim_cmd) return cmd_sim(sim_args);
    if (*batch_cmd) return cmd_batch(batch_args);
    if (*cal_cmd) return cmd_calibrate(cal_args);
    if (*serve_cmd) return cmd_serve(serve_args);
    if (*session_cmd) return cmd_session(session_args);
    if (*rates) return cmd_rates(an);
    if (*threshold) return cmd_threshold(an);
    if (*margin) return cmd_margin(an);
    if (*exp) return cmd_export(an);
  } catch (const sim::ScenarioParseError& e) {
    std::cerr << e.what() << '\n';
    return kBadInput;
  } catch (const telemetry::LogError& e) {
    std::cerr << e.what() << '\n';
    return kBadInput;
  } catch (const service::BindError& e) {
    std::cerr << "bind failed: " << e.what() << '\n';
    return kFailed;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailed;
  }
  return kOk;
}
