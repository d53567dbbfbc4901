#include "cinch/sim/plant.hpp"

#include <algorithm>
#include <cmath>

namespace cinch::sim {
namespace {

constexpr double kMaxClosureRate = 10.0;  // m/s
constexpr double kMaxCurrent = 20.0;      // A
constexpr double kMaxClosure = 10.0;      // m

double sign(double x) { return (x > 0.0) - (x < 0.0); }

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(name) + " must be > 0");
}

// Current loop of one servo. Returns the current it asks for this step:
// the goal plus a PI trim on the last measured error. Supply saturation is
// applied later, against the back-EMF at the new velocity.
double loop_target(MotorSimState& m, const MotorParams& p, double dt) {
  if (!m.torque_enabled) {
    m.integrator = 0.0;
    return 0.0;
  }
  double goal = m.goal_current;
  if (m.mode == bus::OperatingMode::PositionControl || m.mode == bus::OperatingMode::CurrentBasedPosition ||
      m.mode == bus::OperatingMode::ExtendedPosition) {
    const double limit =
        m.mode == bus::OperatingMode::CurrentBasedPosition ? std::abs(m.goal_current) : p.current_limit;
    goal = std::clamp(p.position_kp * (m.goal_position - m.angle) - p.position_kd * m.omega, -limit, limit);
  }
  goal = std::clamp(goal, -p.current_limit, p.current_limit);

  const double error = goal - m.current;
  const bool railed = std::abs(m.voltage) >= p.supply_voltage;
  if (!railed || sign(error) != sign(m.voltage)) {  // anti-windup
    m.integrator = std::clamp(m.integrator + p.current_ki * error * dt, -p.supply_voltage, p.supply_voltage);
  }
  return goal + (p.current_kp * error + m.integrator) / p.winding_resistance;
}

// Quasi-static winding current at shaft speed `omega`: the loop target,
// limited by what the supply can push against the back-EMF.
double winding_current(bool enabled, double target, double omega, const MotorParams& p) {
  if (!enabled) return 0.0;
  const double emf = p.back_emf_constant * omega;
  return std::clamp(target, (-p.supply_voltage - emf) / p.winding_resistance,
                    (p.supply_voltage - emf) / p.winding_resistance);
}

// Root of an increasing function with slope >= `min_slope`, starting at x0.
template <typename F>
double solve_increasing(F f, double x0, double min_slope) {
  const double f0 = f(x0);
  if (f0 == 0.0) return x0;
  double lo = x0, hi = x0;
  (f0 > 0.0 ? lo : hi) = x0 - f0 / min_slope;
  for (int i = 0; i < 200 && lo < hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (f(mid) > 0.0 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

void PlantConfig::validate() const {
  require_positive(motor.winding_resistance, "winding_resistance");
  require_positive(motor.torque_constant, "torque_constant");
  require_positive(motor.back_emf_constant, "back_emf_constant");
  require_positive(motor.rotor_inertia, "rotor_inertia");
  require_positive(motor.viscous_friction, "viscous_friction");
  require_positive(motor.coulomb_friction, "coulomb_friction");
  require_positive(motor.supply_voltage, "supply_voltage");
  require_positive(motor.current_limit, "current_limit");
  if (motor.current_kp < 0.0 || motor.current_ki < 0.0) throw std::invalid_argument("current loop gains must be >= 0");
  require_positive(spool_radius, "spool_radius");
  require_positive(aperture_max, "aperture_max");
  require_positive(aperture_min, "aperture_min");
  require_positive(cable_to_aperture_gain, "cable_to_aperture_gain");
  require_positive(stop_stiffness, "stop_stiffness");
  require_positive(stop_damping, "stop_damping");
  require_positive(fruit.contact_stiffness, "contact_stiffness");
  require_positive(fruit.contact_damping, "contact_damping");
  require_positive(fruit.damage_force, "damage_force");
  require_positive(fruit.stem_force, "stem_force");
  require_positive(fruit.slip_damping, "slip_damping");
  require_positive(fruit.rim_drag, "rim_drag");
  require_positive(capacity_gain, "capacity_gain");
  require_positive(dt, "dt");
  if (fruit.diameter < 0.0) throw std::invalid_argument("fruit diameter must be >= 0");
  if (!(aperture_min < aperture_max)) throw std::invalid_argument("aperture_min must be < aperture_max");
  if (aperture_initial < aperture_min || aperture_initial > aperture_max) {
    throw std::invalid_argument("aperture_initial must lie within [aperture_min, aperture_max]");
  }
  if (dt > 0.005) throw std::invalid_argument("dt must be <= 0.005 s");
  if (current_noise_ma < 0.0) throw std::invalid_argument("current_noise_ma must be >= 0");
}

double PlantState::kinetic_energy(const PlantConfig& config) const {
  const double gr = config.cable_to_aperture_gain * config.spool_radius;
  const double mass = 2.0 * config.motor.rotor_inertia / (gr * gr);
  return 0.5 * mass * closure_rate * closure_rate;
}

PlantState initial_state(const PlantConfig& config) {
  config.validate();
  PlantState s;
  s.aperture = config.aperture_initial;
  s.fruit_present = config.fruit.diameter > 0.0;
  s.fruit_attached = s.fruit_present;
  // A fruit wider than the rest aperture is presented once the pockets open.
  s.fruit_engaged = s.fruit_present && config.fruit.diameter <= config.aperture_initial;
  return s;
}

double engaged_diameter(const PlantState& state, const PlantConfig& config) {
  if (!state.fruit_present) return 0.0;
  const double radius = 0.5 * config.fruit.diameter;
  const double z = state.fruit_offset;
  if (z >= radius) return 0.0;
  return 2.0 * std::sqrt(radius * radius - z * z);
}

PlantState apply_pull(const PlantState& state, double force, double ramp) {
  if (ramp <= 0.0) return state;
  PlantState next = state;
  next.pull_target = std::max(0.0, force);
  next.pull_ramp = ramp;
  return next;
}

PlantState step(const PlantState& state, const PlantConfig& config) {
  const double dt = config.dt;
  const double gr = config.cable_to_aperture_gain * config.spool_radius;
  const MotorParams& mp = config.motor;
  const double mass = 2.0 * mp.rotor_inertia / (gr * gr);

  PlantState n = state;
  const double v = state.closure_rate;
  const double omega_closer = v / gr;
  const double omega_opener = -v / gr;

  (void)omega_closer;
  (void)omega_opener;
  MotorSimState& closer = n.motors[kCloser];
  MotorSimState& opener = n.motors[kOpener];
  const double target_closer = loop_target(closer, mp, dt);
  const double target_opener = loop_target(opener, mp, dt);
  // Net motor force on the closure as a function of the new closure rate.
  auto motor_force = [&](double rate) {
    return mp.torque_constant / gr *
           (winding_current(closer.torque_enabled, target_closer, rate / gr, mp) -
            winding_current(opener.torque_enabled, target_opener, -rate / gr, mp));
  };

  // Position-dependent loads are explicit; all damping is implicit.
  const double aperture = config.aperture_initial - state.closure;
  double spring = 0.0;
  double damping = 2.0 * mp.viscous_friction / (gr * gr);
  const double coulomb = 2.0 * mp.coulomb_friction / gr;

  const double d_eff = engaged_diameter(state, config);
  const bool oversize = state.fruit_present && config.fruit.diameter >= config.aperture_max;
  bool in_contact = false;
  if (state.fruit_present && state.fruit_engaged && !oversize && d_eff > aperture) {
    const double elastic = config.fruit.contact_stiffness * (d_eff - aperture);
    if (elastic + config.fruit.contact_damping * v > 0.0) {
      spring += elastic;
      damping += config.fruit.contact_damping;
      in_contact = true;
    }
  }
  const bool rim_contact = oversize && v >= 0.0 && aperture <= config.aperture_max;
  if (rim_contact) damping += config.fruit.rim_drag;

  if (aperture < config.aperture_min) {
    spring += config.stop_stiffness * (config.aperture_min - aperture);
    damping += config.stop_damping;
  } else if (aperture > config.aperture_max) {
    spring -= config.stop_stiffness * (aperture - config.aperture_max);
    damping += config.stop_damping;
  }

  // Momentum balance M (v' - v)/dt = F_motor(v') - D v' - spring - coulomb.
  // Left minus right is strictly increasing in v', so the root is unique.
  auto residual = [&](double rate, double friction) {
    return mass * (rate - v) / dt - motor_force(rate) + damping * rate + spring + friction;
  };
  const double min_slope = mass / dt;
  double v_new = 0.0;
  if (config.opener_jammed) {
    v_new = 0.0;
  } else if (v == 0.0) {
    const double at_rest = -residual(0.0, 0.0);  // net force with the closure held still
    if (std::abs(at_rest) > coulomb) {
      const double friction = coulomb * sign(at_rest);
      v_new = solve_increasing([&](double x) { return residual(x, friction); }, 0.0, min_slope);
      if (v_new * at_rest < 0.0) v_new = 0.0;
    }
  } else {
    const double friction = coulomb * sign(v);
    v_new = solve_increasing([&](double x) { return residual(x, friction); }, v, min_slope);
    if (v_new * v < 0.0) v_new = 0.0;
  }

  n.closure = state.closure + dt * v_new;
  if (n.fruit_present && !n.fruit_engaged && config.aperture_initial - n.closure >= d_eff) n.fruit_engaged = true;
  n.closure_rate = v_new;
  n.aperture = std::clamp(config.aperture_initial - n.closure, config.aperture_min, config.aperture_max);
  n.motors[kCloser].omega = v_new / gr;
  n.motors[kOpener].omega = -v_new / gr;
  n.motors[kCloser].angle = n.closure / gr;
  n.motors[kOpener].angle = -n.closure / gr;
  closer.current = winding_current(closer.torque_enabled, target_closer, closer.omega, mp);
  opener.current = winding_current(opener.torque_enabled, target_opener, opener.omega, mp);
  for (MotorSimState* m : {&closer, &opener}) {
    m->voltage = m->torque_enabled ? mp.winding_resistance * m->current + mp.back_emf_constant * m->omega : 0.0;
  }

  // Squeeze on the fruit after the update.
  double squeeze = 0.0;
  if (in_contact) {
    const double a = config.aperture_initial - n.closure;
    squeeze = std::max(0.0, config.fruit.contact_stiffness * std::max(0.0, d_eff - a) +
                                config.fruit.contact_damping * v_new);
  } else if (rim_contact) {
    squeeze = config.fruit.rim_drag * std::max(0.0, v_new);
  }
  n.cable_tension = config.cable_to_aperture_gain * squeeze;

  // External pull, grip capacity and stem.
  if (state.pull_ramp > 0.0) {
    const double delta = state.pull_ramp * dt;
    if (n.pull_force_applied < n.pull_target) {
      n.pull_force_applied = std::min(n.pull_target, n.pull_force_applied + delta);
    } else {
      n.pull_force_applied = std::max(n.pull_target, n.pull_force_applied - delta);
    }
  }
  n.transmitted_force = 0.0;
  if (n.fruit_present && n.fruit_attached) {
    const double capacity = config.capacity_gain * n.cable_tension;
    const double transmitted = std::min(n.pull_force_applied, capacity);
    if (transmitted >= config.fruit.stem_force) {
      n.transmitted_force = config.fruit.stem_force;
      n.fruit_attached = false;
    } else {
      n.transmitted_force = transmitted;
      if (n.pull_force_applied > capacity) {
        n.fruit_offset += dt * (n.pull_force_applied - capacity) / config.fruit.slip_damping;
        if (n.fruit_offset >= 0.5 * config.fruit.diameter) {
          n.fruit_present = false;
          n.fruit_slipped = true;
        }
      }
    }
  }
  n.peak_pull_force = std::max(n.peak_pull_force, n.pull_force_applied);
  if (!n.fruit_attached || !n.fruit_present) {
    // Nothing left to pull against: the stem broke or the fruit slipped out.
    n.pull_force_applied = 0.0;
    n.pull_target = 0.0;
    n.pull_ramp = 0.0;
  }
  // A detached fruit drops out once the pockets no longer touch it.
  if (n.fruit_present && !n.fruit_attached && config.aperture_initial - n.closure > d_eff) {
    n.fruit_present = false;
  }

  n.contact_force = squeeze + n.transmitted_force;
  n.peak_contact_force = std::max(n.peak_contact_force, n.contact_force);
  if ((state.fruit_present || n.fruit_present) && n.contact_force > config.fruit.damage_force) {
    n.fruit_damaged = true;
  }

  n.electrical_power = 0.0;
  n.mechanical_power = 0.0;
  for (std::size_t k : {kCloser, kOpener}) {
    const auto& m = n.motors[k];
    n.electrical_power += m.voltage * m.current;
    n.mechanical_power += mp.torque_constant * m.current * m.omega;
  }

  n.time = state.time + dt;
  ++n.steps;

  if (!std::isfinite(n.closure) || !std::isfinite(v_new) || std::abs(v_new) > kMaxClosureRate ||
      std::abs(n.closure) > kMaxClosure || std::abs(n.motors[kCloser].current) > kMaxCurrent ||
      std::abs(n.motors[kOpener].current) > kMaxCurrent || !std::isfinite(n.motors[kCloser].current) ||
      !std::isfinite(n.motors[kOpener].current)) {
    throw NumericalBlowup("plant state left sanity bounds at t=" + std::to_string(n.time));
  }
  return n;
}

}  // namespace cinch::sim
