// One line per acceptance criterion: PASS/FAIL, name, measured detail.
// Exit status is the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "cinch/dxl/protocol.hpp"
#include "cinch/sim/batch.hpp"
#include "cinch/sim/runner.hpp"
#include "cinch/telemetry/analysis.hpp"
#include "oracles.hpp"

using namespace cinch;
using grasp::GraspPhase;
using grasp::OutcomeResult;
using K = GraspPhase::Kind;
using Clock = std::chrono::steady_clock;

namespace {

const std::filesystem::path kScenarios = CINCH_SCENARIO_DIR;

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << (detail.tellp() > 0 ? "; " : "") << what;
    }
  }
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

dxl::Bytes random_bytes(std::mt19937_64& rng, std::size_t n) {
  dxl::Bytes b(n);
  for (auto& x : b) x = static_cast<std::uint8_t>(rng() & 0xFF);
  return b;
}

// --- protocol ---------------------------------------------------------------

void protocol(Verdict& v) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1);
  static constexpr dxl::Instruction kinds[] = {
      dxl::Instruction::Ping,     dxl::Instruction::Read,      dxl::Instruction::Write,  dxl::Instruction::RegWrite,
      dxl::Instruction::Action,   dxl::Instruction::Reboot,    dxl::Instruction::SyncRead, dxl::Instruction::SyncWrite,
      dxl::Instruction::BulkRead, dxl::Instruction::BulkWrite};
  int roundtrip_bad = 0;
  for (int i = 0; i < 10000; ++i) {
    dxl::InstructionPacket p;
    p.id = static_cast<std::uint8_t>(rng() % 253);
    p.instruction = kinds[rng() % std::size(kinds)];
    p.params = random_bytes(rng, rng() % 96);
    // Bias some payloads towards header-like runs that need stuffing.
    if (i % 4 == 0) {
      for (auto& b : p.params) b = (b & 1) ? 0xFF : 0xFD;
    }
    dxl::DecoderState st;
    const auto r = dxl::decode_frames(st, dxl::encode(p));
    const bool ok = r.frames.size() == 1 && r.errors.empty() && dxl::to_instruction(r.frames[0]) == p;
    roundtrip_bad += ok ? 0 : 1;
  }
  int crc_bad = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto b = random_bytes(rng, rng() % 300);
    crc_bad += dxl::crc16(b) == test::crc16_bitwise(b) ? 0 : 1;
  }
  dxl::Bytes composed{0xFF, 0xFF, 0xFD, 0x00, 0x01, 0x03, 0x00, 0x01};
  const auto crc = test::crc16_bitwise(composed);
  composed.push_back(static_cast<std::uint8_t>(crc & 0xFF));
  composed.push_back(static_cast<std::uint8_t>(crc >> 8));
  const bool ping_ok = dxl::encode({1, dxl::Instruction::Ping, {}}) == composed;
  const double dt = seconds_since(t0);

  v.require(roundtrip_bad == 0, std::to_string(roundtrip_bad) + " round-trip failures");
  v.require(crc_bad == 0, std::to_string(crc_bad) + " CRC mismatches");
  v.require(ping_ok, "ping frame differs from composed framing");
  v.require(dt < 10.0, "runtime " + std::to_string(dt) + " s");
  v.detail << (v.pass ? "" : "; ") << "10000 packets, 10000 CRC inputs, ping frame ok=" << ping_ok << ", " << dt
           << " s";
}

// --- current/velocity trace ----------------------------------------------

void trace(Verdict& v) {
  const auto scenario = sim::load_scenario(kScenarios / "medium_tomato.yaml");
  const auto a = sim::run_scenario(scenario);
  const auto b = sim::run_scenario(scenario);
  v.require(a.outcome && a.outcome->result == OutcomeResult::Secured, "not Secured");
  if (!a.outcome) return;

  const double steady = a.outcome->steady_current_ma;
  v.require(steady >= 95.0 && steady <= 105.0, "steady current " + std::to_string(steady) + " mA");
  v.require(a.outcome->elapsed_ms < 5000.0, "secured after " + std::to_string(a.outcome->elapsed_ms) + " ms");

  // Velocity after first contact, up to and including the Secured tick.
  std::vector<double> speed;
  bool contact = false;
  for (const auto& s : a.samples) {
    if (!s.phase.is(K::Enclosing) && !s.phase.is(K::Secured)) continue;
    if (s.contact_force && *s.contact_force > 0.0) contact = true;
    if (contact) speed.push_back(std::abs(s.closer.velocity_rpm));
    if (s.phase.is(K::Secured)) break;
  }
  int rises = 0;
  for (std::size_t i = 1; i < speed.size(); ++i) rises += speed[i] > speed[i - 1] ? 1 : 0;
  const double final_speed = speed.empty() ? 1e9 : speed.back();
  v.require(!speed.empty(), "no contact samples");
  v.require(rises == 0, std::to_string(rises) + " velocity rises after contact");
  v.require(final_speed < 0.5, "final |v| " + std::to_string(final_speed) + " rpm");
  v.require(sim::log_text(a.samples) == sim::log_text(b.samples), "logs differ between runs");
  v.detail << (v.pass ? "" : "; ") << "steady " << steady << " mA, secured at " << a.outcome->elapsed_ms
           << " ms, " << speed.size() << " post-contact samples monotone, final |v| " << final_speed << " rpm";
}

// --- size envelope -----------------------------------------------------------

sim::ScenarioResult grasp_only(double diameter_mm, double empty_rev) {
  sim::Scenario s;
  s.plant.fruit.diameter = diameter_mm / 1000.0;
  s.script = {{sim::Step::Kind::Open}, {sim::Step::Kind::AlignConfirm}, {sim::Step::Kind::Grasp}};
  sim::RunOptions o;
  o.empty_closure_position_rev = empty_rev;
  o.keep_samples = false;
  return sim::run_scenario(s, o);
}

void envelope(Verdict& v) {
  const auto t0 = Clock::now();
  const double empty_rev = sim::calibrate_empty(sim::Scenario{}).empty_closure_position_rev;
  const sim::PlantConfig defaults;
  double worst_ratio = 0.0;
  for (int d = 21; d <= 51; ++d) {
    const auto r = grasp_only(d, empty_rev);
    const bool secured = r.outcome && r.outcome->result == OutcomeResult::Secured;
    v.require(secured, std::to_string(d) + " mm not Secured");
    const double peak = r.final_state.peak_contact_force;
    v.require(peak < defaults.fruit.damage_force, std::to_string(d) + " mm peak contact " + std::to_string(peak) + " N");
    worst_ratio = std::max(worst_ratio, peak / defaults.fruit.damage_force);
  }
  const double bound_mm = defaults.aperture_max * 1000.0;
  for (double d : {bound_mm, bound_mm + 1.0, bound_mm + 5.0, 70.0}) {
    const auto r = grasp_only(d, empty_rev);
    v.require(r.outcome && r.outcome->result == OutcomeResult::Oversize, std::to_string(d) + " mm not Oversize");
  }
  const auto empty = grasp_only(0.0, empty_rev);
  v.require(empty.outcome && empty.outcome->result == OutcomeResult::EmptyClosure, "empty not EmptyClosure");
  const double dt = seconds_since(t0);
  v.require(dt < 60.0, "runtime " + std::to_string(dt) + " s");
  v.detail << (v.pass ? "" : "; ") << "21..51 mm Secured, peak contact <= " << worst_ratio * 100.0
           << "% of damage force, >= " << bound_mm << " mm Oversize, empty EmptyClosure, " << dt << " s";
}

// --- damage rates and margin ---------------------------------------------

const sim::BatchReport& default_batch() {
  static const sim::BatchReport r = sim::run_batch(sim::load_batch(kScenarios / "harvest_batch.yaml"));
  return r;
}

void damage_rates(Verdict& v) {
  const auto spec = sim::load_batch(kScenarios / "harvest_batch.yaml");
  const auto& base = default_batch();
  sim::BatchOverrides twice;
  twice.reference_current_ma = 2.0 * grasp::GraspConfig{}.reference_current_ma;
  twice.current_cap_ma = 250.0;
  const auto doubled = sim::run_batch(spec, twice);

  std::map<telemetry::FruitClass, int> expected{{telemetry::FruitClass::Medium, 23}, {telemetry::FruitClass::Small, 33}};
  for (const auto& row : base.rates) {
    v.require(expected.count(row.fruit_class) && expected[row.fruit_class] == row.n,
              std::string(to_string(row.fruit_class)) + " n=" + std::to_string(row.n));
    v.require(row.damage_rate == "0.0", std::string(to_string(row.fruit_class)) + " damage " + row.damage_rate + "%");
  }
  v.require(base.rates.size() == 2, "expected two classes");
  v.require(base.failures == 0, std::to_string(base.failures) + " failed runs");
  v.require(doubled.damaged > base.damaged, "2x current damaged " + std::to_string(doubled.damaged) +
                                                " vs " + std::to_string(base.damaged));
  v.detail << (v.pass ? "" : "; ") << "Medium 0/23 = 0.0%, Small 0/33 = 0.0%; at 2x current " << doubled.damaged
           << " damaged vs " << base.damaged;
}

void margin(Verdict& v) {
  const auto& base = default_batch();
  double min_margin = std::numeric_limits<double>::infinity();
  int violations = 0;
  for (const auto& [cls, m] : base.margins) {
    violations += m.violations;
    min_margin = std::min(min_margin, m.min_margin);
  }
  v.require(base.margins.size() == 2, "margin report missing a class");
  v.require(violations == 0, std::to_string(violations) + " violations");
  v.require(min_margin > 0.0, "min margin " + std::to_string(min_margin) + " N");

  // Threshold against the summation oracle: the batch's own studies, then random ones.
  double worst = 0.0;
  for (const auto& [cls, study] : base.thresholds) {
    std::vector<double> xs;
    for (const auto& s : study.samples) xs.push_back(s.burst_force);
    const double want = test::mean_by_summation(xs);
    worst = std::max(worst, std::abs(study.threshold - want) / want);
  }
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> f(5.0, 40.0);
  for (int i = 0; i < 1000; ++i) {
    std::vector<telemetry::BurstSample> samples;
    std::vector<double> xs;
    for (std::size_t k = 0; k < 1 + rng() % 40; ++k) {
      xs.push_back(f(rng));
      samples.push_back({"s" + std::to_string(k), xs.back()});
    }
    const double want = test::mean_by_summation(xs);
    worst = std::max(worst, std::abs(telemetry::compute_threshold(samples).threshold - want) / want);
  }
  v.require(worst <= 1e-9, "threshold relative error " + std::to_string(worst));
  v.detail << (v.pass ? "" : "; ") << "0 violations over " << base.runs.size() << " runs, min margin " << min_margin
           << " N, threshold worst relative error " << worst;
}

// --- safety ------------------------------------------------------------------

struct Rig {
  sim::SimRig rig;
  std::vector<grasp::ControllerEvent> events;
  Rig(const sim::PlantConfig& p, double empty_rev) : rig(p, grasp::GraspConfig{}, bus::BusConfig{}) {
    rig.controller().set_empty_closure_position(empty_rev);
    rig.controller().subscribe_events([this](const grasp::ControllerEvent& e) { events.push_back(e); });
    rig.controller().initialize();
  }
  bool goals_zero() {
    const auto st = rig.plant().state();
    return st.motors[sim::kCloser].goal_current == 0.0 && st.motors[sim::kOpener].goal_current == 0.0;
  }
};

void safety(Verdict& v) {
  const double empty_rev = sim::calibrate_empty(sim::Scenario{}).empty_closure_position_rev;
  std::mt19937_64 rng(77);
  const grasp::CommandKind kinds[] = {grasp::CommandKind::Open,    grasp::CommandKind::AlignConfirm,
                                      grasp::CommandKind::Grasp,   grasp::CommandKind::Release,
                                      grasp::CommandKind::Abort,   grasp::CommandKind::SetCurrent};
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uint64_t antagonism = 0, bad_edges = 0, unanswered = 0, ticks = 0;
  for (int seq = 0; seq < 1000; ++seq) {
    sim::PlantConfig p;
    p.fruit.diameter = u(rng) < 0.15 ? 0.0 : u(rng) * 0.065;
    p.fruit.stem_force = 1.0 + u(rng) * 10.0;
    p.seed = static_cast<std::uint64_t>(seq);
    Rig r(p, empty_rev);
    std::set<std::uint64_t> pending;
    const int n = 4 + static_cast<int>(rng() % 12);
    for (int i = 0; i < n; ++i) {
      pending.insert(r.rig.controller().submit({kinds[rng() % std::size(kinds)], u(rng) * 180.0 - 10.0, 0}));
      if (u(rng) < 0.3) r.rig.plant().apply_pull(u(rng) * 12.0, 5.0);
      const int gap = static_cast<int>(rng() % 60);
      for (int t = 0; t <= gap; ++t, ++ticks) r.rig.controller().tick();
    }
    r.rig.controller().tick();
    antagonism += r.rig.plant().antagonism_violations();
    for (const auto& e : r.events) {
      if (e.type == grasp::ControllerEvent::Type::Transition && !grasp::transition_allowed(e.from, e.phase)) ++bad_edges;
      if ((e.type == grasp::ControllerEvent::Type::Ack || e.type == grasp::ControllerEvent::Type::Reject) &&
          e.request_id) {
        pending.erase(*e.request_id);
      }
    }
    unanswered += pending.size();
  }
  v.require(antagonism == 0, std::to_string(antagonism) + " antagonism violations");
  v.require(bad_edges == 0, std::to_string(bad_edges) + " transitions off the graph");
  v.require(unanswered == 0, std::to_string(unanswered) + " commands unanswered");

  // Abort from every moving phase: goals must read zero after one tick.
  int abort_checks = 0;
  sim::PlantConfig medium;
  medium.fruit.diameter = 0.0436;
  medium.fruit.stem_force = 100.0;
  const std::vector<std::function<void(Rig&)>> setups = {
      [](Rig& r) { r.rig.controller().submit({grasp::CommandKind::Open, 0, 0}); r.rig.controller().tick(); },
      [](Rig& r) {
        r.rig.controller().open_gripper();
        r.rig.controller().submit({grasp::CommandKind::Grasp, 0, 0});
        for (int i = 0; i < 5; ++i) r.rig.controller().tick();
      },
      [](Rig& r) {
        r.rig.controller().open_gripper();
        r.rig.controller().close_grasp();
      },
      [](Rig& r) {
        r.rig.controller().open_gripper();
        r.rig.controller().close_grasp();
        r.rig.controller().submit({grasp::CommandKind::Release, 0, 0});
        r.rig.plant().apply_pull(3.0, 5.0);
        for (int i = 0; i < 10; ++i) r.rig.controller().tick();
      },
  };
  for (const auto& setup : setups) {
    Rig r(medium, empty_rev);
    setup(r);
    r.rig.controller().submit({grasp::CommandKind::Abort, 0, 0});
    r.rig.controller().tick();
    v.require(r.goals_zero(), "goals not zero one tick after Abort in " + grasp::to_string(r.rig.controller().phase()));
    ++abort_checks;
  }
  v.detail << (v.pass ? "" : "; ") << "1000 sequences, " << ticks << " ticks, 0 antagonism, 0 illegal edges; abort "
           << abort_checks << "/4 phases zero within one tick";
}

// --- determinism -------------------------------------------------------------

void determinism(Verdict& v) {
  int compared = 0;
  for (const char* name : {"medium_tomato", "small_tomato", "empty_close", "oversize", "opener_jam", "stubborn_stem",
                           "abort_midway"}) {
    auto s = sim::load_scenario(kScenarios / (std::string(name) + ".yaml"));
    for (bool noisy : {false, true}) {
      if (noisy) {
        s.plant.current_noise_ma = 1.5;
        s.plant.seed = 4242;
      }
      const auto a = sim::run_scenario(s);
      const auto b = sim::run_scenario(s);
      v.require(sim::log_text(a.samples) == sim::log_text(b.samples), std::string(name) + (noisy ? " (noisy)" : "") +
                                                                           " logs differ");
      v.require(sim::events_text(a.events) == sim::events_text(b.events), std::string(name) + " events differ");
      ++compared;
    }
  }
  v.detail << (v.pass ? "" : "; ") << compared << " scenario pairs byte-identical";
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    void (*run)(Verdict&);
  };
  const Criterion criteria[] = {
      {"protocol correctness", protocol}, {"current/velocity trace", trace},  {"size envelope", envelope},
      {"damage-rate table", damage_rates},      {"damage margin", margin},         {"controller safety", safety},
      {"determinism", determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Verdict v;
    try {
      c.run(v);
    } catch (const std::exception& e) {
      v.require(false, std::string("threw: ") + e.what());
    }
    failed += v.pass ? 0 : 1;
    std::printf("%s  %-24s %s\n", v.pass ? "PASS" : "FAIL", c.name, v.detail.str().c_str());
    std::fflush(stdout);
  }
  return failed;
}
