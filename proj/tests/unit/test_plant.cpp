#include <gtest/gtest.h>

#include <cmath>

#include "cinch/sim/plant.hpp"
#include "oracles.hpp"

using namespace cinch::sim;

namespace {

PlantState powered(const PlantConfig& c, double closer_a, double opener_a) {
  PlantState s = initial_state(c);
  for (auto& m : s.motors) m.torque_enabled = true;
  s.motors[kCloser].goal_current = closer_a;
  s.motors[kOpener].goal_current = opener_a;
  return s;
}

PlantState run(PlantState s, const PlantConfig& c, double seconds) {
  const auto n = static_cast<int>(std::lround(seconds / c.dt));
  for (int i = 0; i < n; ++i) s = step(s, c);
  return s;
}

PlantConfig with_fruit(double diameter_mm) {
  PlantConfig c;
  c.fruit.diameter = diameter_mm / 1000.0;
  return c;
}

}  // namespace

TEST(PlantConfig, Validation) {
  PlantConfig c;
  EXPECT_NO_THROW(c.validate());
  c.aperture_min = c.aperture_max;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.dt = 0.006;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.motor.torque_constant = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Plant, ZeroGoalAtRestIsEquilibrium) {
  PlantConfig c;
  const PlantState s0 = powered(c, 0.0, 0.0);
  const PlantState s1 = run(s0, c, 0.5);
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_EQ(s1.motors[k].angle, s0.motors[k].angle);
    EXPECT_EQ(s1.motors[k].omega, 0.0);
    EXPECT_EQ(s1.motors[k].current, 0.0);
  }
  EXPECT_EQ(s1.closure, s0.closure);
  EXPECT_EQ(s1.aperture, s0.aperture);
  EXPECT_EQ(s1.contact_force, 0.0);
  EXPECT_NEAR(s1.time, 0.5, 1e-12);
}

TEST(Plant, FreeSpeedMatchesClosedForm) {
  PlantConfig c;
  const auto& m = c.motor;
  // Both spools turn with the closure; the opener's loop holds its current at zero.
  const double w = cinch::test::free_speed_supply_limited(m.torque_constant, m.back_emf_constant,
                                                          m.winding_resistance, m.supply_voltage,
                                                          m.viscous_friction, m.coulomb_friction, 2);
  const double i = (m.supply_voltage - m.back_emf_constant * w) / m.winding_resistance;
  ASSERT_LT(i, 0.100);  // the supply, not the loop, is the limit

  const PlantState s = run(powered(c, 0.100, 0.0), c, 0.15);
  ASSERT_GT(s.aperture, c.aperture_min + 0.005) << "reached the stop before measuring";
  EXPECT_NEAR(s.motors[kCloser].omega, w, 0.02 * w);
  EXPECT_NEAR(s.motors[kCloser].current, i, 0.02 * i);
  EXPECT_LT(s.motors[kCloser].current, 0.100);
  EXPECT_NEAR(std::abs(s.motors[kOpener].omega), w, 0.02 * w);
}

TEST(Plant, PowerReportedBothWays) {
  PlantConfig c;
  const PlantState s = run(powered(c, 0.100, 0.0), c, 0.1);
  EXPECT_GT(s.electrical_power, 0.0);
  EXPECT_GT(s.mechanical_power, 0.0);
  EXPECT_LT(s.mechanical_power, s.electrical_power);
}

TEST(Plant, KineticEnergyNeverRisesWithoutDrive) {
  for (bool torque : {true, false}) {
    PlantConfig c;
    PlantState s = run(powered(c, 0.100, 0.0), c, 0.05);
    ASSERT_GT(s.kinetic_energy(c), 0.0);
    s.motors[kCloser].goal_current = 0.0;
    for (auto& mo : s.motors) mo.torque_enabled = torque;
    double e = s.kinetic_energy(c);
    for (int k = 0; k < 500; ++k) {
      s = step(s, c);
      const double e1 = s.kinetic_energy(c);
      ASSERT_LE(e1, e + 1e-15) << "step " << k << (torque ? " torque on" : " torque off");
      e = e1;
    }
  }
}

TEST(Plant, FruitInRangeSettlesAtReference) {
  PlantConfig c = with_fruit(43.6);
  // Open first so the pockets reach around the fruit.
  PlantState s = run(powered(c, 0.0, 0.060), c, 0.6);
  ASSERT_TRUE(s.fruit_engaged);
  s.motors[kOpener].goal_current = 0.0;
  s.motors[kCloser].goal_current = 0.100;
  s = run(s, c, 1.5);
  EXPECT_NEAR(s.motors[kCloser].current, 0.100, 0.005);
  EXPECT_LT(std::abs(s.motors[kCloser].omega), 0.5 * 2 * M_PI / 60);
  EXPECT_GT(s.contact_force, 0.0);
  EXPECT_LT(s.contact_force, c.fruit.damage_force);
  EXPECT_FALSE(s.fruit_damaged);
}

TEST(Plant, DamageLatches) {
  PlantConfig c = with_fruit(30.0);
  c.fruit.damage_force = 2.0;
  PlantState s = run(powered(c, 0.0, 0.060), c, 0.6);
  s.motors[kOpener].goal_current = 0.0;
  s.motors[kCloser].goal_current = 0.100;
  bool seen = false;
  for (int k = 0; k < 3000; ++k) {
    const bool before = s.fruit_damaged;
    if (k == 1500) {
      s.motors[kCloser].goal_current = 0.0;
      s.motors[kOpener].goal_current = 0.060;
    }
    s = step(s, c);
    ASSERT_FALSE(before && !s.fruit_damaged) << "unlatched at step " << k;
    seen = seen || s.fruit_damaged;
  }
  EXPECT_TRUE(seen);
  EXPECT_TRUE(s.fruit_damaged);
  EXPECT_LT(s.contact_force, c.fruit.damage_force);  // released, still flagged
}

TEST(Plant, ContactForceNeverNegativeApertureBounded) {
  PlantConfig c = with_fruit(35.0);
  PlantState s = powered(c, 0.0, 0.060);
  for (int k = 0; k < 4000; ++k) {
    if (k == 700) {
      s.motors[kOpener].goal_current = 0.0;
      s.motors[kCloser].goal_current = 0.150;
    }
    s = step(s, c);
    ASSERT_GE(s.contact_force, 0.0);
    ASSERT_GE(s.aperture, c.aperture_min - 1e-12);
    ASSERT_LE(s.aperture, c.aperture_max + 1e-12);
  }
}

namespace {

PlantState secured(const PlantConfig& c) {
  PlantState s = run(powered(c, 0.0, 0.060), c, 0.6);
  s.motors[kOpener].goal_current = 0.0;
  s.motors[kCloser].goal_current = 0.100;
  return run(s, c, 1.5);
}

}  // namespace

TEST(Pull, StemBreaksWithAmpleCapacity) {
  PlantConfig c = with_fruit(43.6);
  c.fruit.stem_force = 4.0;
  PlantState s = apply_pull(secured(c), 10.0, 5.0);
  s = run(s, c, 2.0);
  EXPECT_FALSE(s.fruit_attached);
  EXPECT_FALSE(s.fruit_slipped);
  EXPECT_NEAR(s.peak_pull_force, 4.0, 0.05);
}

TEST(Pull, SlipsWhenCapacityBelowStem) {
  PlantConfig c = with_fruit(43.6);
  c.fruit.stem_force = 30.0;
  PlantState s = apply_pull(secured(c), 40.0, 10.0);
  s = run(s, c, 4.0);
  EXPECT_TRUE(s.fruit_attached);
  EXPECT_TRUE(s.fruit_slipped);
  EXPECT_LT(s.peak_pull_force, 30.0);
}

TEST(Pull, ZeroRampChangesNothing) {
  PlantConfig c = with_fruit(43.6);
  const PlantState s = secured(c);
  const PlantState p = apply_pull(s, 10.0, 0.0);
  EXPECT_EQ(p.pull_target, s.pull_target);
  EXPECT_EQ(p.pull_ramp, s.pull_ramp);
  EXPECT_EQ(p.pull_force_applied, s.pull_force_applied);
}

TEST(Plant, DeterministicForSeed) {
  PlantConfig c = with_fruit(40.0);
  c.current_noise_ma = 1.0;  // noise lives in the virtual bus; the plant itself is pure
  const PlantState a = secured(c);
  const PlantState b = secured(c);
  EXPECT_EQ(a.closure, b.closure);
  EXPECT_EQ(a.motors[kCloser].current, b.motors[kCloser].current);
  EXPECT_EQ(a.contact_force, b.contact_force);
}
