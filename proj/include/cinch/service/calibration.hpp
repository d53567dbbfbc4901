#pragma once

#include <filesystem>
#include <stdexcept>

#include "cinch/grasp/controller.hpp"

namespace cinch::service {

class CalibrationExists : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// JSON calibration file: settle position, margin and the derived empty
/// closure position. Refuses to replace an existing file unless `force`.
void save_calibration(const std::filesystem::path& path, const grasp::CalibrationResult& result, double margin,
                      bool force);
grasp::CalibrationResult load_calibration(const std::filesystem::path& path);

}  // namespace cinch::service
