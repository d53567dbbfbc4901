#include "cinch/service/calibration.hpp"

#include <fstream>

#include <json.hpp>

#include "cinch/telemetry/types.hpp"

namespace cinch::service {

using nlohmann::json;

void save_calibration(const std::filesystem::path& path, const grasp::CalibrationResult& result, double margin,
                      bool force) {
  if (!force && std::filesystem::exists(path)) {
    throw CalibrationExists(path.string() + " exists; pass --force to overwrite");
  }
  const json j = {{"schema_version", telemetry::kSchemaVersion},
                  {"settle_position_rev", result.settle_position_rev},
                  {"calibration_margin", margin},
                  {"empty_closure_position_rev", result.empty_closure_position_rev}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

grasp::CalibrationResult load_calibration(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open calibration " + path.string());
  try {
    const json j = json::parse(in);
    if (j.at("schema_version") != telemetry::kSchemaVersion) {
      throw std::runtime_error("unsupported schema_version");
    }
    return {j.at("settle_position_rev").get<double>(), j.at("empty_closure_position_rev").get<double>()};
  } catch (const json::exception& e) {
    throw std::runtime_error("bad calibration " + path.string() + ": " + e.what());
  }
}

}  // namespace cinch::service
