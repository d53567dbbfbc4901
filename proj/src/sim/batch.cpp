#include "cinch/sim/batch.hpp"

#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "yaml_fields.hpp"

namespace cinch::sim {
namespace {

using detail::Fields;

Distribution read_distribution(const Fields& f, const YAML::Node& node, const std::string& field) {
  Distribution d;
  if (node.IsScalar()) {
    d.mean = f.number(node, field);
    return d;
  }
  f.allow_keys(node, field, {"mean", "stddev", "min", "max"});
  const YAML::Node mean = node["mean"];
  if (!mean) f.fail(node, field + ".mean", "missing");
  d.mean = f.number(mean, field + ".mean");
  f.optional(node, field, "stddev", [&](const YAML::Node& n, const std::string& p) {
    d.stddev = f.number(n, p);
    if (d.stddev < 0.0) f.fail(n, p, "must be >= 0");
  });
  f.optional(node, field, "min", [&](const YAML::Node& n, const std::string& p) { d.min = f.number(n, p); });
  f.optional(node, field, "max", [&](const YAML::Node& n, const std::string& p) { d.max = f.number(n, p); });
  if (d.min && d.max && *d.min > *d.max) f.fail(node, field, "min exceeds max");
  return d;
}

double draw(const Distribution& d, std::mt19937_64& rng) {
  double v = d.mean;
  if (d.stddev > 0.0) v = std::normal_distribution<double>(d.mean, d.stddev)(rng);
  if (d.min) v = std::max(v, *d.min);
  if (d.max) v = std::min(v, *d.max);
  return v;
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

}  // namespace

BatchSpec parse_batch(const std::string& text, const std::string& source) {
  const Fields f{source};
  const YAML::Node root = detail::load_yaml(text, source);
  BatchSpec spec;
  spec.source = source;
  if (root.IsNull()) return spec;  // empty file: empty batch
  if (!root.IsMap()) f.fail(root, "", "batch must be a mapping");
  f.allow_keys(root, "", {"schema_version", "seed", "base", "classes", "scenarios", "threshold_study"});
  detail::check_schema_version(f, root);

  f.optional(root, "", "seed",
             [&](const YAML::Node& n, const std::string& p) { spec.seed = static_cast<std::uint64_t>(f.integer(n, p)); });
  f.optional(root, "", "base", [&](const YAML::Node& base, const std::string& p) {
    f.allow_keys(base, p, {"plant", "grasp", "bus", "script"});
    Scenario& s = spec.base;
    f.optional(base, p, "plant", [&](const YAML::Node& n, const std::string& q) { detail::read_plant(f, n, q, s.plant); });
    f.optional(base, p, "bus", [&](const YAML::Node& n, const std::string& q) { detail::read_bus(f, n, q, s.bus); });
    f.optional(base, p, "grasp", [&](const YAML::Node& n, const std::string& q) {
      detail::read_grasp(f, n, q, s.grasp, s.auto_calibrate);
    });
    s.grasp.current_cap_ma = s.bus.current_cap_ma;
    try {
      s.grasp.validate();
    } catch (const std::invalid_argument& e) {
      f.fail(base, p + ".grasp", e.what());
    }
    f.optional(base, p, "script", [&](const YAML::Node& n, const std::string& q) { s.script = detail::read_script(f, n, q); });
  });

  f.optional(root, "", "classes", [&](const YAML::Node& list, const std::string& p) {
    if (!list.IsSequence()) f.fail(list, p, "expected a list");
    for (std::size_t i = 0; i < list.size(); ++i) {
      const YAML::Node item = list[i];
      const std::string q = p + "[" + std::to_string(i) + "]";
      f.allow_keys(item, q, {"fruit_class", "count", "diameter_mm", "damage_force", "stem_force"});
      BatchClass c;
      if (!item["fruit_class"]) f.fail(item, q + ".fruit_class", "missing");
      c.fruit_class = detail::read_class(f, item["fruit_class"], q + ".fruit_class");
      if (!item["count"]) f.fail(item, q + ".count", "missing");
      const long long count = f.integer(item["count"], q + ".count");
      if (count < 0 || count > 100000) f.fail(item["count"], q + ".count", "must be in [0, 100000]");
      c.count = static_cast<int>(count);
      if (!item["diameter_mm"]) f.fail(item, q + ".diameter_mm", "missing");
      c.diameter_mm = read_distribution(f, item["diameter_mm"], q + ".diameter_mm");
      f.optional(item, q, "damage_force",
                 [&](const YAML::Node& n, const std::string& r) { c.damage_force = read_distribution(f, n, r); });
      f.optional(item, q, "stem_force",
                 [&](const YAML::Node& n, const std::string& r) { c.stem_force = read_distribution(f, n, r); });
      spec.classes.push_back(c);
    }
  });

  f.optional(root, "", "scenarios", [&](const YAML::Node& list, const std::string& p) {
    if (!list.IsSequence()) f.fail(list, p, "expected a list of paths");
    const auto dir = std::filesystem::path(source).parent_path();
    for (std::size_t i = 0; i < list.size(); ++i) {
      std::filesystem::path path = f.text(list[i], p + "[" + std::to_string(i) + "]");
      spec.scenarios.push_back(path.is_absolute() ? path : dir / path);
    }
  });

  f.optional(root, "", "threshold_study", [&](const YAML::Node& list, const std::string& p) {
    if (!list.IsSequence()) f.fail(list, p, "expected a list");
    for (std::size_t i = 0; i < list.size(); ++i) {
      const YAML::Node item = list[i];
      const std::string q = p + "[" + std::to_string(i) + "]";
      if (item.IsScalar()) {
        spec.threshold_study.push_back({std::to_string(i + 1), f.positive(item, q)});
        continue;
      }
      f.allow_keys(item, q, {"fruit_id", "burst_force"});
      telemetry::BurstSample s{std::to_string(i + 1), 0.0};
      f.optional(item, q, "fruit_id", [&](const YAML::Node& n, const std::string& r) { s.fruit_id = f.text(n, r); });
      if (!item["burst_force"]) f.fail(item, q + ".burst_force", "missing");
      s.burst_force = f.positive(item["burst_force"], q + ".burst_force");
      spec.threshold_study.push_back(s);
    }
  });
  return spec;
}

BatchSpec load_batch(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioParseError(path.string(), 0, "", "cannot open file");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_batch(text.str(), path.string());
}

BatchReport run_batch(const BatchSpec& spec, const BatchOverrides& overrides) {
  BatchReport report;
  Scenario base = spec.base;
  if (overrides.current_cap_ma) {
    base.bus.current_cap_ma = *overrides.current_cap_ma;
    base.grasp.current_cap_ma = *overrides.current_cap_ma;
  }
  if (overrides.reference_current_ma) base.grasp.reference_current_ma = *overrides.reference_current_ma;
  base.grasp.validate();

  std::map<telemetry::FruitClass, std::vector<telemetry::BurstSample>> sampled_damage;
  std::mt19937_64 rng(spec.seed);
  std::size_t index = 0;
  std::vector<Scenario> generated;
  for (const auto& cls : spec.classes) {
    for (int i = 0; i < cls.count; ++i) {
      Scenario s = base;
      s.fruit_class = cls.fruit_class;
      s.name = std::string(telemetry::to_string(cls.fruit_class)) + "-" + std::to_string(i + 1);
      s.plant.fruit.diameter = draw(cls.diameter_mm, rng) / 1000.0;
      if (cls.damage_force) s.plant.fruit.damage_force = draw(*cls.damage_force, rng);
      if (cls.stem_force) s.plant.fruit.stem_force = draw(*cls.stem_force, rng);
      s.plant.fruit.damage_force *= overrides.damage_force_scale;
      s.plant.seed = spec.seed + index++;
      sampled_damage[cls.fruit_class].push_back({s.name, s.plant.fruit.damage_force});
      generated.push_back(std::move(s));
    }
  }

  if (!generated.empty()) {
    try {
      report.empty_closure_position_rev = calibrate_empty(base).empty_closure_position_rev;
    } catch (const std::exception& e) {
      report.notes.push_back(std::string("calibration failed: ") + e.what());
    }
  }

  auto run_one = [&](const Scenario& s, std::optional<double> empty, bool explicit_file) {
    BatchRun run;
    run.id = s.name;
    run.fruit_class = s.fruit_class;
    run.diameter_mm = s.plant.fruit.diameter * 1000.0;
    run.damage_force = s.plant.fruit.damage_force;
    run.stem_force = s.plant.fruit.stem_force;
    try {
      RunOptions options;
      options.empty_closure_position_rev = empty;
      run.result = run_scenario(s, options);
      const auto& r = *run.result;
      if (!r.record) run.failure = "no harvest record";
      else if (r.error) run.failure = *r.error;
      else if (explicit_file && !r.expectation_met()) run.failure = r.mismatches.front();
      else if (!explicit_file && !r.record->detached) run.failure = "not harvested: " + std::string(grasp::to_string(r.record->outcome));
    } catch (const std::exception& e) {
      run.failure = e.what();
    }
    return run;
  };

  for (const auto& s : generated) {
    if (!report.empty_closure_position_rev) {
      BatchRun run;
      run.id = s.name;
      run.fruit_class = s.fruit_class;
      run.failure = "skipped: no calibration";
      report.runs.push_back(std::move(run));
      continue;
    }
    report.runs.push_back(run_one(s, report.empty_closure_position_rev, false));
  }
  for (const auto& path : spec.scenarios) {
    try {
      Scenario s = load_scenario(path);
      if (overrides.current_cap_ma) {
        s.bus.current_cap_ma = *overrides.current_cap_ma;
        s.grasp.current_cap_ma = *overrides.current_cap_ma;
      }
      if (overrides.reference_current_ma) s.grasp.reference_current_ma = *overrides.reference_current_ma;
      s.plant.fruit.damage_force *= overrides.damage_force_scale;
      sampled_damage[s.fruit_class].push_back({s.name, s.plant.fruit.damage_force});
      report.runs.push_back(run_one(s, std::nullopt, true));
    } catch (const std::exception& e) {
      BatchRun run;
      run.id = path.string();
      run.failure = e.what();
      report.runs.push_back(std::move(run));
    }
  }

  std::map<telemetry::FruitClass, std::vector<telemetry::HarvestLog>> logs;
  for (const auto& run : report.runs) {
    if (run.failure) ++report.failures;
    if (!run.result || !run.result->record) continue;
    report.records.push_back(*run.result->record);
    if (run.result->record->damaged_on_harvest) ++report.damaged;
    const bool detached_phase = std::any_of(run.result->samples.begin(), run.result->samples.end(),
                                            [](const auto& s) { return s.phase.is(grasp::GraspPhase::Kind::Detaching); });
    if (detached_phase) logs[run.fruit_class].push_back({run.id, run.result->samples, {}});
    else report.notes.push_back(run.id + ": no Detaching phase, left out of the margin report");
  }
  report.rates = telemetry::rate_table(report.records);

  for (auto& [cls, samples] : sampled_damage) {
    auto study = spec.threshold_study.empty() ? telemetry::compute_threshold(samples)
                                              : telemetry::compute_threshold(spec.threshold_study);
    if (!spec.threshold_study.empty()) study.threshold *= overrides.damage_force_scale;
    report.thresholds[cls] = study;
    const auto it = logs.find(cls);
    if (it == logs.end()) continue;
    auto margins = telemetry::margin_report(it->second, study.threshold);
    report.violations += margins.violations;
    report.margins[cls] = std::move(margins);
  }
  return report;
}

std::string render_batch_report(const BatchReport& report) {
  std::ostringstream os;
  os << "runs " << report.runs.size() << ", failures " << report.failures << ", damaged " << report.damaged
     << ", margin violations " << report.violations << '\n';
  if (report.empty_closure_position_rev) {
    os << "empty closure position " << fixed(*report.empty_closure_position_rev, 4) << " rev\n";
  }
  os << '\n' << telemetry::render_rate_table(report.rates);
  for (const auto& [cls, study] : report.thresholds) {
    os << '\n' << telemetry::to_string(cls) << ": damage threshold " << fixed(study.threshold, 3) << " N (n "
       << study.samples.size() << ", min " << fixed(study.min, 3) << ", max " << fixed(study.max, 3) << ", sd "
       << fixed(study.stddev, 3) << ")\n";
    const auto it = report.margins.find(cls);
    if (it == report.margins.end()) continue;
    const auto& m = it->second;
    double peak = 0.0;
    for (const auto& row : m.rows) peak = std::max(peak, row.peak_force);
    os << "  harvests " << m.rows.size() << ", highest peak " << fixed(peak, 3) << " N, min margin "
       << fixed(m.min_margin, 3) << " N, violations " << m.violations << '\n';
    for (const auto& row : m.rows) {
      if (row.violation) os << "  VIOLATION " << row.id << " peak " << fixed(row.peak_force, 3) << " N\n";
    }
  }
  bool header = false;
  for (const auto& run : report.runs) {
    if (!run.failure) continue;
    if (!header) os << "\nfailures:\n";
    header = true;
    os << "  " << run.id << ": " << *run.failure << '\n';
  }
  for (const auto& note : report.notes) os << "note: " << note << '\n';
  return os.str();
}

}  // namespace cinch::sim
