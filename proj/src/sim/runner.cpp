#include "cinch/sim/runner.hpp"

#include "cinch/telemetry/log.hpp"

namespace cinch::sim {
namespace {

using K = grasp::GraspPhase::Kind;

bool holding(const grasp::GraspPhase& p) { return p.is(K::Secured) || p.is(K::Detaching); }

void check_expectation(const Scenario& s, ScenarioResult& r) {
  const auto& e = s.expect;
  if (e.outcome) {
    const std::string want(grasp::to_string(*e.outcome));
    const std::string got = r.outcome ? std::string(grasp::to_string(r.outcome->result)) : "none";
    if (want != got) r.mismatches.push_back("outcome: expected " + want + ", got " + got);
  }
  const bool detached = r.record && r.record->detached;
  if (e.detached && *e.detached != detached) {
    r.mismatches.push_back(std::string("detached: expected ") + (*e.detached ? "true" : "false") + ", got " +
                           (detached ? "true" : "false"));
  }
  if (e.damaged && *e.damaged != r.final_state.fruit_damaged) {
    r.mismatches.push_back(std::string("damaged: expected ") + (*e.damaged ? "true" : "false") + ", got " +
                           (r.final_state.fruit_damaged ? "true" : "false"));
  }
}

}  // namespace

SimRig::SimRig(const PlantConfig& plant, const grasp::GraspConfig& grasp, const bus::BusConfig& bus)
    : SimRig(std::make_unique<VirtualBus>(plant, bus.ids), grasp, bus) {}

SimRig::SimRig(std::unique_ptr<VirtualBus> plant, const grasp::GraspConfig& grasp, const bus::BusConfig& bus)
    : plant_(plant.get()), bus_(std::move(plant), bus), clock_(*plant_), controller_(bus_, clock_, grasp) {
  VirtualBus* vb = plant_;
  controller_.set_sample_decorator([vb](telemetry::TelemetrySample& s) {
    const PlantState st = vb->state();
    s.contact_force = st.contact_force;
    s.pull_force = st.pull_force_applied;
  });
  controller_.set_detach_probe([vb] {
    return !vb->state().fruit_attached;
  });
}

grasp::CalibrationResult calibrate(const PlantConfig& plant, const grasp::GraspConfig& grasp,
                                   const bus::BusConfig& bus) {
  grasp::GraspConfig g = grasp;
  g.empty_closure_position_rev.reset();
  SimRig rig(plant, g, bus);
  auto& c = rig.controller();
  c.initialize();
  c.open_gripper();
  return c.calibrate_empty_closure();
}

grasp::CalibrationResult calibrate_empty(const Scenario& scenario) {
  PlantConfig empty = scenario.plant;
  empty.fruit.diameter = 0.0;
  empty.opener_jammed = false;
  return calibrate(empty, scenario.grasp, scenario.bus);
}

ScenarioResult run_scenario(const Scenario& scenario, const RunOptions& options) {
  ScenarioResult result;
  result.name = scenario.name;

  grasp::GraspConfig g = scenario.grasp;
  if (options.empty_closure_position_rev) {
    g.empty_closure_position_rev = options.empty_closure_position_rev;
  } else if (scenario.auto_calibrate) {
    result.calibration = calibrate_empty(scenario);
    g.empty_closure_position_rev = result.calibration->empty_closure_position_rev;
  }

  SimRig rig(scenario.plant, g, scenario.bus);
  auto& c = rig.controller();
  auto& vb = rig.plant();
  c.subscribe_samples([&](const telemetry::TelemetrySample& s) {
    if (options.keep_samples) result.samples.push_back(s);
    if (options.on_sample) options.on_sample(s);
  });
  c.subscribe_events([&](const grasp::ControllerEvent& e) {
    result.events.push_back(e);
    if (options.on_event) options.on_event(e);
  });
  c.initialize();

  const double period = g.period_s();
  auto tick_for = [&](double seconds) {
    const auto n = std::max<long>(1, std::lround(seconds / period));
    for (long i = 0; i < n; ++i) c.tick();
  };

  using SK = Step::Kind;
  for (std::size_t i = 0; i < scenario.script.size(); ++i) {
    const Step& step = scenario.script[i];
    const std::string where = "step " + std::to_string(i + 1) + " (" + std::string(to_string(step.kind)) +
                              (step.line ? ", line " + std::to_string(step.line) : "") + ")";
    bool stop = false;
    try {
      switch (step.kind) {
        case SK::Open: c.open_gripper(); break;
        case SK::AlignConfirm: c.confirm_align(); break;
        case SK::Grasp: {
          const auto outcome = c.close_grasp();
          if (outcome.result != grasp::OutcomeResult::Secured) stop = true;
          break;
        }
        case SK::Hold: c.monitor_secured(step.seconds); break;
        case SK::Detach:
          c.detach_and_release([&] { vb.apply_pull(step.pull.force, step.pull.ramp); });
          break;
        case SK::Pull: vb.apply_pull(step.pull.force, step.pull.ramp); break;
        case SK::Wait: tick_for(step.seconds); break;
        case SK::Abort:
          c.abort();
          c.tick();
          break;
        case SK::Release:
          c.submit({grasp::CommandKind::Release, 0.0, 0});
          c.tick();
          break;
        case SK::SetCurrent:
          c.submit({grasp::CommandKind::SetCurrent, step.current_ma, 0});
          c.tick();
          break;
        case SK::TorqueOff: c.torque(step.motor, false); break;
      }
    } catch (const grasp::PhaseError& e) {
      result.notes.push_back(where + ": " + e.what());
      stop = true;
    } catch (const grasp::GraspError& e) {
      result.error = e.kind() == grasp::GraspError::Kind::LostDuringDetach ? "LostDuringDetach" : e.what();
      result.notes.push_back(where + ": " + e.what());
      stop = true;
    } catch (const bus::BusError& e) {
      result.error = std::string("BusError: ") + e.what();
      result.notes.push_back(where + ": " + e.what());
      stop = true;
    }
    if (stop) {
      for (std::size_t j = i + 1; j < scenario.script.size(); ++j) {
        result.notes.push_back("skipped step " + std::to_string(j + 1) + " (" +
                               std::string(to_string(scenario.script[j].kind)) + ")");
      }
      break;
    }
    // A hold that ended in Lost ends the harvest too.
    if (step.kind == SK::Hold && !holding(c.phase())) {
      for (std::size_t j = i + 1; j < scenario.script.size(); ++j) {
        result.notes.push_back("skipped step " + std::to_string(j + 1) + ": grip lost");
      }
      break;
    }
  }

  result.final_state = vb.state();
  result.outcome = c.last_outcome();
  result.records = c.records();
  result.antagonism_violations = vb.antagonism_violations();
  const PlantState& st = result.final_state;
  for (auto& r : result.records) {
    r.fruit_class = scenario.fruit_class;
    if (scenario.plant.fruit.diameter > 0.0) r.fruit_diameter_mm = scenario.plant.fruit.diameter * 1000.0;
    r.damaged_on_harvest = st.fruit_damaged;
    r.peak_pull_force = st.peak_pull_force;
    r.peak_contact_force = st.peak_contact_force;
  }
  if (!result.records.empty()) result.record = result.records.back();
  check_expectation(scenario, result);
  return result;
}

std::string log_text(const std::vector<telemetry::TelemetrySample>& samples) {
  std::string out;
  for (const auto& s : samples) {
    out += telemetry::to_line(s);
    out += '\n';
  }
  return out;
}

std::string events_text(const std::vector<grasp::ControllerEvent>& events) {
  std::string out;
  for (const auto& e : events) {
    out += telemetry::to_json(e).dump();
    out += '\n';
  }
  return out;
}

}  // namespace cinch::sim
