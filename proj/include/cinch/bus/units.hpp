// Raw register value <-> engineering unit conversions for the XL330.
#pragma once

#include <cmath>
#include <cstdint>

namespace cinch::bus::units {

inline constexpr double kTicksPerRev = 4096.0;
inline constexpr double kRpmPerVelocityUnit = 0.229;
inline constexpr double kMaPerCurrentUnit = 1.0;

inline double position_rev(std::int32_t raw) { return raw / kTicksPerRev; }
inline double velocity_rpm(std::int32_t raw) { return raw * kRpmPerVelocityUnit; }
inline double current_ma(std::int16_t raw) { return raw * kMaPerCurrentUnit; }

inline std::int32_t position_raw(double rev) { return static_cast<std::int32_t>(std::lround(rev * kTicksPerRev)); }
inline std::int32_t velocity_raw(double rpm) { return static_cast<std::int32_t>(std::lround(rpm / kRpmPerVelocityUnit)); }
inline std::int16_t current_raw(double ma) { return static_cast<std::int16_t>(std::lround(ma / kMaPerCurrentUnit)); }

}  // namespace cinch::bus::units
