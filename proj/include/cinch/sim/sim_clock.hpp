#pragma once

#include "cinch/grasp/controller.hpp"
#include "cinch/sim/virtual_bus.hpp"

namespace cinch::sim {

/// Control clock that advances the plant instead of sleeping. Time is the
/// plant step count times dt, so it is exact and repeatable.
class SimClock : public grasp::ControlClock {
 public:
  explicit SimClock(VirtualBus& bus) : bus_(bus) {}

  double now() override {
    const auto s = bus_.state();
    return static_cast<double>(s.steps) * bus_.config().dt;
  }
  void wait_period(double period_s) override { bus_.advance_seconds(period_s); }

 private:
  VirtualBus& bus_;
};

}  // namespace cinch::sim
