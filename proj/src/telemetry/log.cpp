#include "cinch/telemetry/log.hpp"

namespace cinch::telemetry {
namespace {

json motor_json(const MotorSample& m) {
  return {{"current_ma", m.current_ma}, {"velocity_rpm", m.velocity_rpm}, {"position_rev", m.position_rev}};
}

MotorSample motor_from_json(const json& j) {
  return {j.at("current_ma").get<double>(), j.at("velocity_rpm").get<double>(), j.at("position_rev").get<double>()};
}

template <typename T>
void put_optional(json& j, const char* key, const std::optional<T>& v) {
  j[key] = v ? json(*v) : json(nullptr);
}

template <typename T>
std::optional<T> get_optional(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}

void check_schema(const json& j, std::size_t line) {
  auto it = j.find("schema_version");
  if (it == j.end()) throw SchemaMismatch(line, "missing schema_version");
  if (!it->is_number_integer() || it->get<int>() != kSchemaVersion) {
    throw SchemaMismatch(line, "unsupported schema_version " + it->dump() + " (expected " +
                                   std::to_string(kSchemaVersion) + ")");
  }
}

}  // namespace

std::string_view to_string(FruitClass c) {
  switch (c) {
    case FruitClass::Medium: return "Medium";
    case FruitClass::Small: return "Small";
    case FruitClass::Other: return "Other";
  }
  return "?";
}

std::optional<FruitClass> parse_fruit_class(std::string_view text) {
  for (FruitClass c : {FruitClass::Medium, FruitClass::Small, FruitClass::Other}) {
    if (text == to_string(c)) return c;
  }
  return std::nullopt;
}

json to_json(const TelemetrySample& s) {
  json j = {{"schema_version", kSchemaVersion},
            {"time", s.time},
            {"phase", grasp::to_string(s.phase)},
            {"closer", motor_json(s.closer)},
            {"opener", motor_json(s.opener)}};
  // Force channels only exist in simulation; hardware lines omit them.
  if (s.contact_force) j["contact_force"] = *s.contact_force;
  if (s.pull_force) j["pull_force"] = *s.pull_force;
  return j;
}

TelemetrySample sample_from_json(const json& j) {
  TelemetrySample s;
  s.time = j.at("time").get<double>();
  const auto phase_text = j.at("phase").get<std::string>();
  const auto phase = grasp::parse_phase(phase_text);
  if (!phase) throw std::invalid_argument("unknown phase '" + phase_text + "'");
  s.phase = *phase;
  s.closer = motor_from_json(j.at("closer"));
  s.opener = motor_from_json(j.at("opener"));
  s.contact_force = get_optional<double>(j, "contact_force");
  s.pull_force = get_optional<double>(j, "pull_force");
  return s;
}

json to_json(const HarvestRecord& r) {
  json j = {{"schema_version", kSchemaVersion},
            {"fruit_class", to_string(r.fruit_class)},
            {"outcome", grasp::to_string(r.outcome)},
            {"damaged_on_harvest", r.damaged_on_harvest},
            {"detached", r.detached}};
  put_optional(j, "fruit_diameter_mm", r.fruit_diameter_mm);
  put_optional(j, "peak_pull_force", r.peak_pull_force);
  put_optional(j, "bruised_day5", r.bruised_day5);
  put_optional(j, "peak_current_deviation_ma", r.peak_current_deviation_ma);
  put_optional(j, "peak_contact_force", r.peak_contact_force);
  return j;
}

HarvestRecord record_from_json(const json& j) {
  HarvestRecord r;
  const auto cls = parse_fruit_class(j.at("fruit_class").get<std::string>());
  if (!cls) throw std::invalid_argument("unknown fruit_class " + j.at("fruit_class").dump());
  r.fruit_class = *cls;
  const auto outcome = grasp::parse_outcome(j.at("outcome").get<std::string>());
  if (!outcome) throw std::invalid_argument("unknown outcome " + j.at("outcome").dump());
  r.outcome = *outcome;
  r.damaged_on_harvest = j.at("damaged_on_harvest").get<bool>();
  r.detached = j.value("detached", false);
  r.fruit_diameter_mm = get_optional<double>(j, "fruit_diameter_mm");
  r.peak_pull_force = get_optional<double>(j, "peak_pull_force");
  r.bruised_day5 = get_optional<bool>(j, "bruised_day5");
  r.peak_current_deviation_ma = get_optional<double>(j, "peak_current_deviation_ma");
  r.peak_contact_force = get_optional<double>(j, "peak_contact_force");
  return r;
}

json to_json(const grasp::GraspOutcome& o) {
  return {{"result", grasp::to_string(o.result)},
          {"steady_current_ma", o.steady_current_ma},
          {"closure_position_rev", o.closure_position_rev},
          {"elapsed_ms", o.elapsed_ms}};
}

json to_json(const grasp::ControllerEvent& e) {
  json j = {{"schema_version", kSchemaVersion},
            {"type", grasp::to_string(e.type)},
            {"time", e.time},
            {"phase", grasp::to_string(e.phase)}};
  if (e.type == grasp::ControllerEvent::Type::Transition) j["from"] = grasp::to_string(e.from);
  if (e.request_id) j["request_id"] = *e.request_id;
  if (e.command) j["command"] = grasp::to_string(*e.command);
  if (e.hold) j["hold"] = grasp::to_string(*e.hold);
  if (e.outcome) j["outcome"] = to_json(*e.outcome);
  if (e.record) j["record"] = to_json(*e.record);
  if (!e.message.empty()) j["message"] = e.message;
  return j;
}

std::string to_line(const TelemetrySample& s) { return to_json(s).dump(); }

LogWriter::LogWriter(const std::filesystem::path& path, bool truncate)
    : out_(path, truncate ? std::ios::trunc : std::ios::app), path_(path) {
  if (!out_) throw std::runtime_error("cannot open log " + path.string());
}

void LogWriter::append(const TelemetrySample& s) {
  if (last_time_ && !(s.time > *last_time_)) {
    throw NonMonotoneTime(count_ + 1, "time " + std::to_string(s.time) + " does not advance past " +
                                          std::to_string(*last_time_));
  }
  out_ << to_line(s) << '\n';
  if (!out_) throw std::runtime_error("write failed on " + path_.string());
  last_time_ = s.time;
  ++count_;
}

std::vector<TelemetrySample> parse_log(std::istream& in) {
  std::vector<TelemetrySample> samples;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw LogError(line, std::string("malformed JSON: ") + e.what());
    }
    check_schema(j, line);
    TelemetrySample s;
    try {
      s = sample_from_json(j);
    } catch (const std::exception& e) {
      throw LogError(line, e.what());
    }
    if (!samples.empty() && !(s.time > samples.back().time)) {
      throw NonMonotoneTime(line, "time " + std::to_string(s.time) + " after " + std::to_string(samples.back().time));
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

std::vector<TelemetrySample> load_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open log " + path.string());
  return parse_log(in);
}

void write_records(const std::filesystem::path& path, const std::vector<HarvestRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

std::vector<HarvestRecord> load_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<HarvestRecord> records;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(text);
      check_schema(j, line);
      records.push_back(record_from_json(j));
    } catch (const LogError&) {
      throw;
    } catch (const std::exception& e) {
      throw LogError(line, e.what());
    }
  }
  return records;
}

}  // namespace cinch::telemetry
