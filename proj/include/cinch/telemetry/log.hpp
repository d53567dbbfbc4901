#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <istream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cinch/grasp/controller.hpp"
#include "cinch/telemetry/types.hpp"

namespace cinch::telemetry {

using nlohmann::json;

class LogError : public std::runtime_error {
 public:
  LogError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class SchemaMismatch : public LogError {
 public:
  using LogError::LogError;
};

class NonMonotoneTime : public LogError {
 public:
  using LogError::LogError;
};

json to_json(const TelemetrySample& s);
TelemetrySample sample_from_json(const json& j);

json to_json(const HarvestRecord& r);
HarvestRecord record_from_json(const json& j);

json to_json(const grasp::GraspOutcome& o);
json to_json(const grasp::ControllerEvent& e);

/// Compact single-line form, as written to logs and streams.
std::string to_line(const TelemetrySample& s);

/// Append-only JSONL writer for samples. Rejects non-increasing time.
class LogWriter {
 public:
  explicit LogWriter(const std::filesystem::path& path, bool truncate = false);
  void append(const TelemetrySample& s);
  void flush() { out_.flush(); }
  std::size_t count() const { return count_; }

 private:
  std::ofstream out_;
  std::filesystem::path path_;
  std::size_t count_ = 0;
  std::optional<double> last_time_;
};

std::vector<TelemetrySample> parse_log(std::istream& in);
std::vector<TelemetrySample> load_log(const std::filesystem::path& path);

void write_records(const std::filesystem::path& path, const std::vector<HarvestRecord>& records);
std::vector<HarvestRecord> load_records(const std::filesystem::path& path);

}  // namespace cinch::telemetry
