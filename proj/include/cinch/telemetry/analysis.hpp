#pragma once

#include <istream>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cinch/telemetry/types.hpp"

namespace cinch::telemetry {

class AnalysisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class EmptyStudy : public AnalysisError {
 public:
  using AnalysisError::AnalysisError;
};
class NoDetachPhase : public AnalysisError {
 public:
  using AnalysisError::AnalysisError;
};
class UnknownField : public AnalysisError {
 public:
  using AnalysisError::AnalysisError;
};
class EmptyLog : public AnalysisError {
 public:
  using AnalysisError::AnalysisError;
};

struct BurstSample {
  std::string fruit_id;
  double burst_force = 0.0;  // N
};

struct ThresholdStudy {
  std::vector<BurstSample> samples;
  double threshold = 0.0;  // arithmetic mean
  double min = 0.0;
  double max = 0.0;
  double stddev = 0.0;  // sample (n - 1) deviation, 0 for a single sample
};

ThresholdStudy compute_threshold(std::vector<BurstSample> samples);

/// External force-sensor reading, joined to a log on time.
struct ForceReading {
  double time = 0.0;
  double force = 0.0;
};

struct HarvestLog {
  std::string id;
  std::vector<TelemetrySample> samples;
  std::vector<ForceReading> external_force;  // hardware runs only
};

struct MarginRow {
  std::string id;
  double peak_force = 0.0;
  double margin = 0.0;
  bool violation = false;  // margin <= 0
};

struct MarginReport {
  double threshold = 0.0;
  std::vector<MarginRow> rows;
  double min_margin = 0.0;
  int violations = 0;
};

/// Peak gripper force from enclose through detach, against `threshold`.
MarginReport margin_report(const std::vector<HarvestLog>& logs, double threshold);

std::vector<ForceReading> parse_force_csv(std::istream& in);

/// "fruit_id,burst_force" rows; a single column is taken as the force.
std::vector<BurstSample> parse_burst_csv(std::istream& in);

struct RateRow {
  FruitClass fruit_class = FruitClass::Other;
  int n = 0;
  int damaged = 0;
  int inspected = 0;
  int bruised = 0;
  std::string damage_rate;                // "0.0"
  std::optional<std::string> bruise_rate;  // empty until any fruit is inspected
};

/// k/n as a percentage with one decimal, rounded half to even, computed in
/// integers so ties are exact.
std::string format_percent(long long k, long long n);

std::vector<RateRow> rate_table(const std::vector<HarvestRecord>& records);
std::string render_rate_table(const std::vector<RateRow>& rows);
std::string render_margin_report(const MarginReport& report);

/// Numeric fields a series export can select.
const std::vector<std::string>& series_fields();

struct SeriesTable {
  std::vector<std::string> fields;  // first is always "time"
  std::vector<std::vector<std::optional<double>>> rows;
};

SeriesTable select_series(const std::vector<TelemetrySample>& log, const std::vector<std::string>& fields);
std::string to_csv(const SeriesTable& table);
SeriesTable parse_csv(std::istream& in);

/// Two panels: closer/opener current with a reference line, then velocity.
std::string render_svg(const std::vector<TelemetrySample>& log, double reference_current_ma);

}  // namespace cinch::telemetry
