// Fixed-step model of the two servos, the drawstring closure and a fruit.
//
// Both cables are taut, so the mechanism has one mechanical degree of
// freedom: the closure `q` (metres of aperture reduction from the initial
// aperture). The closer spool turns by +q/(g r), the opener spool by -q/(g r),
// where g is the cable-to-aperture gain and r the spool radius. Forces below
// are expressed along q; positive resists closing.
#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "cinch/bus/registers.hpp"

namespace cinch::sim {

struct MotorParams {
  double winding_resistance = 3.4;     // ohm
  double torque_constant = 0.35;       // N*m/A at the output shaft
  double back_emf_constant = 0.35;     // V*s/rad at the output shaft
  double rotor_inertia = 2.0e-6;       // kg*m^2 reflected to the output shaft
  double viscous_friction = 3.0e-4;    // N*m*s/rad
  double coulomb_friction = 2.0e-3;    // N*m
  double supply_voltage = 5.0;         // V
  double current_kp = 0.5;             // V/A
  double current_ki = 500.0;           // V/(A*s)
  double position_kp = 2.0;            // A/rad, position modes only
  double position_kd = 0.05;           // A*s/rad
  double current_limit = 1.75;         // A, CurrentLimit register default
};

struct FruitParams {
  double diameter = 0.0;               // m; 0 means no fruit
  double contact_stiffness = 2000.0;   // N/m, pocket + flesh
  double contact_damping = 40.0;       // N*s/m
  double damage_force = 20.0;          // N
  double stem_force = 4.0;             // N
  double slip_damping = 200.0;         // N*s/m, resistance to migrating out of the pockets
  double rim_drag = 6000.0;            // N*s/m, pockets dragging over a fruit too large to enter
};

struct PlantConfig {
  MotorParams motor;
  double spool_radius = 0.005;         // m
  double aperture_max = 0.055;         // m, maximal fit-in size
  double aperture_min = 0.012;         // m, pockets meet
  double aperture_initial = 0.040;     // m, rest aperture at power-up
  double cable_to_aperture_gain = 1.0; // aperture change per metre of cable pull-in
  double stop_stiffness = 2.0e4;       // N/m at the aperture end stops
  double stop_damping = 150.0;         // N*s/m
  FruitParams fruit;
  double capacity_gain = 1.5;          // grip capacity per newton of cable tension
  double dt = 0.001;                   // s
  std::uint64_t seed = 0;
  double current_noise_ma = 0.0;       // std-dev of measurement noise on PresentCurrent
  bool opener_jammed = false;

  /// Throws std::invalid_argument describing the first violated invariant.
  void validate() const;
};

struct MotorSimState {
  double angle = 0.0;          // rad
  double omega = 0.0;          // rad/s
  double current = 0.0;        // A
  double goal_current = 0.0;   // A
  double goal_position = 0.0;  // rad, position modes only
  double integrator = 0.0;     // V, current loop
  bool torque_enabled = false;
  bus::OperatingMode mode = bus::OperatingMode::CurrentControl;
  double voltage = 0.0;        // V applied this step
};

enum MotorIndex : std::size_t { kCloser = 0, kOpener = 1 };

struct PlantState {
  std::array<MotorSimState, 2> motors{};
  double closure = 0.0;            // q, m
  double closure_rate = 0.0;       // dq/dt, m/s
  double aperture = 0.0;           // m, clamped to [aperture_min, aperture_max]
  double contact_force = 0.0;      // N on the fruit surface
  double cable_tension = 0.0;      // N in the closing cable due to the fruit
  double pull_force_applied = 0.0; // N, external vertical pull on the gripper
  double pull_target = 0.0;
  double pull_ramp = 0.0;          // N/s
  double transmitted_force = 0.0;  // N actually passed through the grip to the stem
  double fruit_offset = 0.0;       // m the fruit has migrated out of the pockets
  double peak_contact_force = 0.0;
  double peak_pull_force = 0.0;
  bool fruit_present = false;      // a fruit sits between the pockets
  bool fruit_attached = false;     // still on the vine
  bool fruit_engaged = false;      // pockets have opened around it at least once
  bool fruit_slipped = false;      // pulled out of the grip while attached
  bool fruit_damaged = false;      // latching
  double electrical_power = 0.0;   // W, both motors
  double mechanical_power = 0.0;   // W, both motors
  double time = 0.0;               // s
  std::uint64_t steps = 0;

  double kinetic_energy(const PlantConfig& config) const;
};

class NumericalBlowup : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

PlantState initial_state(const PlantConfig& config);

/// Advances the plant by config.dt.
PlantState step(const PlantState& state, const PlantConfig& config);

/// Starts (or retargets) an external vertical pull ramping at `ramp` N/s
/// towards `force` N. A zero ramp leaves the state unchanged.
PlantState apply_pull(const PlantState& state, double force, double ramp);

/// Effective diameter the pockets see given how far the fruit has migrated.
double engaged_diameter(const PlantState& state, const PlantConfig& config);

}  // namespace cinch::sim
