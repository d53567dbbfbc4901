#include "cinch/sim/scenario.hpp"

#include <fstream>
#include <sstream>

#include "yaml_fields.hpp"

namespace cinch::sim {
namespace {

constexpr double kMm = 1e-3;

std::string describe(const std::string& source, std::size_t line, const std::string& field,
                     const std::string& message) {
  std::string out = source;
  if (line > 0) out += ":" + std::to_string(line);
  out += ": ";
  if (!field.empty()) out += field + ": ";
  return out + message;
}

}  // namespace

ScenarioParseError::ScenarioParseError(const std::string& source, std::size_t line, const std::string& field,
                                       const std::string& message)
    : std::runtime_error(describe(source, line, field, message)), line_(line), field_(field) {}

std::string_view to_string(Step::Kind kind) {
  switch (kind) {
    case Step::Kind::Open: return "open";
    case Step::Kind::AlignConfirm: return "align_confirm";
    case Step::Kind::Grasp: return "grasp";
    case Step::Kind::Hold: return "hold";
    case Step::Kind::Detach: return "detach";
    case Step::Kind::Pull: return "pull";
    case Step::Kind::Wait: return "wait";
    case Step::Kind::Abort: return "abort";
    case Step::Kind::Release: return "release";
    case Step::Kind::SetCurrent: return "set_current";
    case Step::Kind::TorqueOff: return "torque_off";
  }
  return "?";
}

std::vector<Step> Scenario::default_script() {
  using K = Step::Kind;
  std::vector<Step> s(5);
  s[0].kind = K::Open;
  s[1].kind = K::AlignConfirm;
  s[2].kind = K::Grasp;
  s[3].kind = K::Hold;
  s[3].seconds = 0.5;
  s[4].kind = K::Detach;
  return s;
}

namespace detail {

YAML::Node load_yaml(const std::string& text, const std::string& source) {
  try {
    return YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ScenarioParseError(source, e.mark.line >= 0 ? static_cast<std::size_t>(e.mark.line) + 1 : 0, "", e.msg);
  }
}

void check_schema_version(const Fields& f, const YAML::Node& root) {
  const YAML::Node v = root["schema_version"];
  if (!v) f.fail(root, "schema_version", "missing (expected " + std::to_string(kScenarioSchemaVersion) + ")");
  const long long n = f.integer(v, "schema_version");
  if (n != kScenarioSchemaVersion) {
    f.fail(v, "schema_version",
           "unsupported version " + std::to_string(n) + " (expected " + std::to_string(kScenarioSchemaVersion) + ")");
  }
}

void read_plant(const Fields& f, const YAML::Node& node, const std::string& field, PlantConfig& p) {
  f.allow_keys(node, field,
               {"dt", "seed", "spool_radius_mm", "aperture_max_mm", "aperture_min_mm", "aperture_initial_mm",
                "cable_to_aperture_gain", "capacity_gain", "stop_stiffness", "stop_damping", "current_noise_ma",
                "opener_jammed", "motor", "fruit"});
  auto num = [&](const char* key, double& out, double scale = 1.0) {
    f.optional(node, field, key, [&](const YAML::Node& n, const std::string& path) { out = f.number(n, path) * scale; });
  };
  num("dt", p.dt);
  f.optional(node, field, "seed",
             [&](const YAML::Node& n, const std::string& path) { p.seed = static_cast<std::uint64_t>(f.integer(n, path)); });
  num("spool_radius_mm", p.spool_radius, kMm);
  num("aperture_max_mm", p.aperture_max, kMm);
  num("aperture_min_mm", p.aperture_min, kMm);
  num("aperture_initial_mm", p.aperture_initial, kMm);
  num("cable_to_aperture_gain", p.cable_to_aperture_gain);
  num("capacity_gain", p.capacity_gain);
  num("stop_stiffness", p.stop_stiffness);
  num("stop_damping", p.stop_damping);
  num("current_noise_ma", p.current_noise_ma);
  f.optional(node, field, "opener_jammed",
             [&](const YAML::Node& n, const std::string& path) { p.opener_jammed = f.boolean(n, path); });

  f.optional(node, field, "motor", [&](const YAML::Node& m, const std::string& path) {
    f.allow_keys(m, path,
                 {"winding_resistance", "torque_constant", "back_emf_constant", "rotor_inertia", "viscous_friction",
                  "coulomb_friction", "supply_voltage", "current_kp", "current_ki", "current_limit"});
    auto mnum = [&](const char* key, double& out) {
      f.optional(m, path, key, [&](const YAML::Node& n, const std::string& p2) { out = f.number(n, p2); });
    };
    mnum("winding_resistance", p.motor.winding_resistance);
    mnum("torque_constant", p.motor.torque_constant);
    mnum("back_emf_constant", p.motor.back_emf_constant);
    mnum("rotor_inertia", p.motor.rotor_inertia);
    mnum("viscous_friction", p.motor.viscous_friction);
    mnum("coulomb_friction", p.motor.coulomb_friction);
    mnum("supply_voltage", p.motor.supply_voltage);
    mnum("current_kp", p.motor.current_kp);
    mnum("current_ki", p.motor.current_ki);
    mnum("current_limit", p.motor.current_limit);
  });

  f.optional(node, field, "fruit", [&](const YAML::Node& fr, const std::string& path) {
    f.allow_keys(fr, path,
                 {"diameter_mm", "contact_stiffness", "contact_damping", "damage_force", "stem_force", "slip_damping",
                  "rim_drag"});
    auto fnum = [&](const char* key, double& out, double scale = 1.0) {
      f.optional(fr, path, key, [&](const YAML::Node& n, const std::string& p2) { out = f.number(n, p2) * scale; });
    };
    fnum("diameter_mm", p.fruit.diameter, kMm);
    fnum("contact_stiffness", p.fruit.contact_stiffness);
    fnum("contact_damping", p.fruit.contact_damping);
    fnum("damage_force", p.fruit.damage_force);
    fnum("stem_force", p.fruit.stem_force);
    fnum("slip_damping", p.fruit.slip_damping);
    fnum("rim_drag", p.fruit.rim_drag);
  });

  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    f.fail(node, field, e.what());
  }
}

void read_grasp(const Fields& f, const YAML::Node& node, const std::string& field, grasp::GraspConfig& g,
                bool& auto_calibrate) {
  f.allow_keys(node, field,
               {"reference_current_ma", "current_band_ma", "velocity_epsilon_rpm", "hold_window_ms",
                "enclose_timeout_ms", "empty_closure_position_rev", "release_backoff_rev", "opener_open_current_ma",
                "loop_rate_hz", "slip_delta_rev", "calibration_margin", "detach_timeout_ms"});
  auto num = [&](const char* key, double& out) {
    f.optional(node, field, key, [&](const YAML::Node& n, const std::string& path) { out = f.number(n, path); });
  };
  num("reference_current_ma", g.reference_current_ma);
  num("current_band_ma", g.current_band_ma);
  num("velocity_epsilon_rpm", g.velocity_epsilon_rpm);
  num("hold_window_ms", g.hold_window_ms);
  num("enclose_timeout_ms", g.enclose_timeout_ms);
  num("release_backoff_rev", g.release_backoff_rev);
  num("opener_open_current_ma", g.opener_open_current_ma);
  num("loop_rate_hz", g.loop_rate_hz);
  num("slip_delta_rev", g.slip_delta_rev);
  num("calibration_margin", g.calibration_margin);
  num("detach_timeout_ms", g.detach_timeout_ms);
  f.optional(node, field, "empty_closure_position_rev", [&](const YAML::Node& n, const std::string& path) {
    if (n.IsScalar() && n.Scalar() == "auto") {
      auto_calibrate = true;
      g.empty_closure_position_rev.reset();
    } else if (n.IsNull() || (n.IsScalar() && n.Scalar() == "none")) {
      auto_calibrate = false;
      g.empty_closure_position_rev.reset();
    } else {
      auto_calibrate = false;
      g.empty_closure_position_rev = f.positive(n, path);
    }
  });
}

void read_bus(const Fields& f, const YAML::Node& node, const std::string& field, bus::BusConfig& b) {
  f.allow_keys(node, field, {"current_cap_ma", "closer_id", "opener_id", "baud"});
  f.optional(node, field, "current_cap_ma",
             [&](const YAML::Node& n, const std::string& path) { b.current_cap_ma = f.positive(n, path); });
  auto id = [&](const char* key, std::uint8_t& out) {
    f.optional(node, field, key, [&](const YAML::Node& n, const std::string& path) {
      const long long v = f.integer(n, path);
      if (v < 0 || v > dxl::kMaxDeviceId) f.fail(n, path, "device id must be in [0, 252]");
      out = static_cast<std::uint8_t>(v);
    });
  };
  id("closer_id", b.ids.closer);
  id("opener_id", b.ids.opener);
  if (b.ids.closer == b.ids.opener) f.fail(node, field, "closer_id and opener_id must differ");
  f.optional(node, field, "baud", [&](const YAML::Node& n, const std::string& path) {
    b.baud = static_cast<std::uint32_t>(f.integer(n, path));
  });
}

std::vector<Step> read_script(const Fields& f, const YAML::Node& node, const std::string& field) {
  if (!node.IsSequence()) f.fail(node, field, "expected a list of steps");
  std::vector<Step> steps;
  for (std::size_t i = 0; i < node.size(); ++i) {
    const YAML::Node item = node[i];
    const std::string path = field + "[" + std::to_string(i) + "]";
    Step step;
    step.line = Fields::line_of(item);
    std::string name;
    YAML::Node arg;
    if (item.IsScalar()) {
      name = item.Scalar();
    } else if (item.IsMap() && item.size() == 1) {
      name = item.begin()->first.as<std::string>();
      arg = item.begin()->second;
    } else {
      f.fail(item, path, "expected a step name or a single-key mapping");
    }
    const std::string sub = path + "." + name;
    auto need_arg = [&] {
      if (!arg) f.fail(item, sub, "needs an argument");
    };
    using K = Step::Kind;
    if (name == "open") step.kind = K::Open;
    else if (name == "align_confirm") step.kind = K::AlignConfirm;
    else if (name == "grasp") step.kind = K::Grasp;
    else if (name == "abort") step.kind = K::Abort;
    else if (name == "release") step.kind = K::Release;
    else if (name == "hold" || name == "wait") {
      step.kind = name == "hold" ? K::Hold : K::Wait;
      need_arg();
      step.seconds = f.positive(arg, sub);
    } else if (name == "detach" || name == "pull") {
      step.kind = name == "detach" ? K::Detach : K::Pull;
      if (arg && !arg.IsNull()) {
        f.allow_keys(arg, sub, {"force", "ramp"});
        f.optional(arg, sub, "force",
                   [&](const YAML::Node& n, const std::string& p2) { step.pull.force = f.number(n, p2); });
        f.optional(arg, sub, "ramp",
                   [&](const YAML::Node& n, const std::string& p2) { step.pull.ramp = f.positive(n, p2); });
      }
    } else if (name == "set_current") {
      step.kind = K::SetCurrent;
      need_arg();
      step.current_ma = f.positive(arg, sub);
    } else if (name == "torque_off") {
      step.kind = K::TorqueOff;
      need_arg();
      const auto which = f.text(arg, sub);
      if (which == "closer") step.motor = bus::MotorRole::Closer;
      else if (which == "opener") step.motor = bus::MotorRole::Opener;
      else f.fail(arg, sub, "expected closer or opener");
    } else {
      f.fail(item, path, "unknown step '" + name + "'");
    }
    if (!item.IsScalar() && arg && (name == "open" || name == "grasp" || name == "align_confirm" ||
                                    name == "abort" || name == "release")) {
      if (!arg.IsNull()) f.fail(arg, sub, "takes no argument");
    }
    steps.push_back(step);
  }
  return steps;
}

Expectation read_expect(const Fields& f, const YAML::Node& node, const std::string& field) {
  Expectation e;
  auto outcome = [&](const YAML::Node& n, const std::string& path) {
    const auto text = f.text(n, path);
    const auto r = grasp::parse_outcome(text);
    if (!r) f.fail(n, path, "unknown outcome '" + text + "'");
    e.outcome = *r;
  };
  if (node.IsScalar()) {
    outcome(node, field);
    return e;
  }
  f.allow_keys(node, field, {"outcome", "detached", "damaged"});
  f.optional(node, field, "outcome", outcome);
  f.optional(node, field, "detached",
             [&](const YAML::Node& n, const std::string& path) { e.detached = f.boolean(n, path); });
  f.optional(node, field, "damaged",
             [&](const YAML::Node& n, const std::string& path) { e.damaged = f.boolean(n, path); });
  return e;
}

telemetry::FruitClass read_class(const Fields& f, const YAML::Node& node, const std::string& field) {
  const auto text = f.text(node, field);
  const auto c = telemetry::parse_fruit_class(text);
  if (!c) f.fail(node, field, "expected Medium, Small or Other, got '" + text + "'");
  return *c;
}

}  // namespace detail

Scenario parse_scenario(const std::string& text, const std::string& source) {
  using detail::Fields;
  const Fields f{source};
  const YAML::Node root = detail::load_yaml(text, source);
  if (!root.IsMap()) f.fail(root, "", "scenario must be a mapping");
  f.allow_keys(root, "", {"schema_version", "name", "seed", "fruit_class", "expect", "plant", "grasp", "bus", "script"});
  detail::check_schema_version(f, root);

  Scenario s;
  s.source = source;
  f.optional(root, "", "name", [&](const YAML::Node& n, const std::string& p) { s.name = f.text(n, p); });
  f.optional(root, "", "fruit_class",
             [&](const YAML::Node& n, const std::string& p) { s.fruit_class = detail::read_class(f, n, p); });
  f.optional(root, "", "plant", [&](const YAML::Node& n, const std::string& p) { detail::read_plant(f, n, p, s.plant); });
  f.optional(root, "", "seed", [&](const YAML::Node& n, const std::string& p) {
    s.plant.seed = static_cast<std::uint64_t>(f.integer(n, p));
  });
  f.optional(root, "", "bus", [&](const YAML::Node& n, const std::string& p) { detail::read_bus(f, n, p, s.bus); });
  f.optional(root, "", "grasp", [&](const YAML::Node& n, const std::string& p) {
    detail::read_grasp(f, n, p, s.grasp, s.auto_calibrate);
  });
  s.grasp.current_cap_ma = s.bus.current_cap_ma;
  try {
    s.grasp.validate();
  } catch (const std::invalid_argument& e) {
    f.fail(root["grasp"] ? root["grasp"] : root, "grasp", e.what());
  }
  f.optional(root, "", "script", [&](const YAML::Node& n, const std::string& p) { s.script = detail::read_script(f, n, p); });
  f.optional(root, "", "expect", [&](const YAML::Node& n, const std::string& p) { s.expect = detail::read_expect(f, n, p); });
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioParseError(path.string(), 0, "", "cannot open file");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_scenario(text.str(), path.string());
}

}  // namespace cinch::sim
