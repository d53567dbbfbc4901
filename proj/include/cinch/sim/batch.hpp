#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cinch/sim/runner.hpp"
#include "cinch/sim/scenario.hpp"
#include "cinch/telemetry/analysis.hpp"

namespace cinch::sim {

/// Normal distribution clamped to [min, max].
struct Distribution {
  double mean = 0.0;
  double stddev = 0.0;
  std::optional<double> min;
  std::optional<double> max;
};

struct BatchClass {
  telemetry::FruitClass fruit_class = telemetry::FruitClass::Other;
  int count = 0;
  Distribution diameter_mm;
  std::optional<Distribution> damage_force;  // N
  std::optional<Distribution> stem_force;    // N
};

struct BatchSpec {
  std::string source = "<memory>";
  std::uint64_t seed = 0;
  Scenario base;  // plant, grasp, bus and script shared by every run
  std::vector<BatchClass> classes;
  std::vector<std::filesystem::path> scenarios;  // explicit scenario files, run as-is
  std::vector<telemetry::BurstSample> threshold_study;  // optional measured burst forces
};

BatchSpec parse_batch(const std::string& text, const std::string& source = "<memory>");
BatchSpec load_batch(const std::filesystem::path& path);

struct BatchOverrides {
  std::optional<double> reference_current_ma;
  std::optional<double> current_cap_ma;
  double damage_force_scale = 1.0;
};

struct BatchRun {
  std::string id;
  telemetry::FruitClass fruit_class = telemetry::FruitClass::Other;
  double diameter_mm = 0.0;
  double damage_force = 0.0;
  double stem_force = 0.0;
  std::optional<ScenarioResult> result;
  std::optional<std::string> failure;  // run could not complete
};

struct BatchReport {
  std::vector<BatchRun> runs;
  std::vector<telemetry::HarvestRecord> records;
  std::vector<telemetry::RateRow> rates;
  std::map<telemetry::FruitClass, telemetry::ThresholdStudy> thresholds;
  std::map<telemetry::FruitClass, telemetry::MarginReport> margins;
  std::optional<double> empty_closure_position_rev;
  int failures = 0;
  int damaged = 0;
  int violations = 0;
  std::vector<std::string> notes;

  bool clean() const { return failures == 0 && damaged == 0 && violations == 0; }
};

BatchReport run_batch(const BatchSpec& spec, const BatchOverrides& overrides = {});
std::string render_batch_report(const BatchReport& report);

}  // namespace cinch::sim
