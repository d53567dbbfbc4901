#include <gtest/gtest.h>

#include "cinch/sim/runner.hpp"
#include "cinch/sim/scenario.hpp"

using namespace cinch::sim;
using cinch::grasp::OutcomeResult;

namespace {

ScenarioParseError parse_error(const std::string& text) {
  try {
    parse_scenario(text, "test.yaml");
  } catch (const ScenarioParseError& e) {
    return e;
  }
  ADD_FAILURE() << "parsed:\n" << text;
  return ScenarioParseError("", 0, "", "");
}

}  // namespace

TEST(Scenario, MinimalUsesDefaults) {
  const auto s = parse_scenario("schema_version: 1\n");
  EXPECT_EQ(s.plant.fruit.diameter, 0.0);
  EXPECT_EQ(s.grasp.reference_current_ma, 100.0);
  EXPECT_TRUE(s.auto_calibrate);
  EXPECT_EQ(s.script.size(), Scenario::default_script().size());
  EXPECT_TRUE(s.expect.empty());
}

TEST(Scenario, FullDocument) {
  const auto s = parse_scenario(R"(schema_version: 1
name: x
fruit_class: Small
plant:
  seed: 7
  fruit: {diameter_mm: 24.3, stem_force: 30}
grasp:
  reference_current_ma: 120
  empty_closure_position_rev: 0.8
bus:
  current_cap_ma: 200
script:
  - open
  - align_confirm
  - grasp
  - hold: 0.5
  - detach: {force: 40, ramp: 10}
  - set_current: 90
  - torque_off: opener
expect:
  outcome: Secured
  detached: false
)");
  EXPECT_EQ(s.name, "x");
  EXPECT_EQ(s.fruit_class, cinch::telemetry::FruitClass::Small);
  EXPECT_NEAR(s.plant.fruit.diameter, 0.0243, 1e-12);
  EXPECT_EQ(s.plant.seed, 7u);
  EXPECT_EQ(s.grasp.reference_current_ma, 120.0);
  EXPECT_FALSE(s.auto_calibrate);
  ASSERT_TRUE(s.grasp.empty_closure_position_rev);
  EXPECT_EQ(*s.grasp.empty_closure_position_rev, 0.8);
  ASSERT_EQ(s.script.size(), 7u);
  EXPECT_EQ(s.script[3].kind, Step::Kind::Hold);
  EXPECT_EQ(s.script[3].seconds, 0.5);
  EXPECT_EQ(s.script[4].pull.force, 40.0);
  EXPECT_EQ(s.script[6].motor, cinch::bus::MotorRole::Opener);
  EXPECT_EQ(s.expect.outcome, OutcomeResult::Secured);
  EXPECT_EQ(s.expect.detached, false);
}

TEST(Scenario, UnknownKeyNamesLineAndField) {
  const auto e = parse_error("schema_version: 1\nplant:\n  fruit:\n    diametr_mm: 40\n");
  EXPECT_EQ(e.line(), 4u);
  EXPECT_EQ(e.field(), "plant.fruit.diametr_mm");
  EXPECT_NE(std::string(e.what()).find("test.yaml"), std::string::npos);
}

TEST(Scenario, BadValueNamesField) {
  const auto e = parse_error("schema_version: 1\ngrasp:\n  reference_current_ma: lots\n");
  EXPECT_EQ(e.line(), 3u);
  EXPECT_EQ(e.field(), "grasp.reference_current_ma");
}

TEST(Scenario, ReferenceAboveCapRejected) {
  const auto e = parse_error("schema_version: 1\ngrasp:\n  reference_current_ma: 200\n");
  EXPECT_EQ(e.field(), "grasp");
}

TEST(Scenario, UnknownStep) {
  const auto e = parse_error("schema_version: 1\nscript:\n  - open\n  - wiggle\n");
  EXPECT_EQ(e.line(), 4u);
  EXPECT_NE(std::string(e.what()).find("wiggle"), std::string::npos);
}

TEST(Scenario, SchemaVersionRequired) {
  EXPECT_EQ(parse_error("name: x\n").field(), "schema_version");
  EXPECT_EQ(parse_error("schema_version: 2\n").field(), "schema_version");
}

TEST(Scenario, MalformedYaml) {
  const auto e = parse_error("schema_version: 1\nplant: [\n");
  EXPECT_GT(e.line(), 0u);
}

TEST(Scenario, MissingFile) {
  EXPECT_THROW(load_scenario("/nonexistent/x.yaml"), ScenarioParseError);
}

TEST(Scenario, RunMediumMeetsExpectation) {
  const auto s = parse_scenario(R"(schema_version: 1
fruit_class: Medium
plant: {fruit: {diameter_mm: 43.6}}
expect: {outcome: Secured, detached: true, damaged: false}
)");
  const auto r = run_scenario(s);
  EXPECT_TRUE(r.expectation_met()) << (r.mismatches.empty() ? "" : r.mismatches[0]);
  ASSERT_TRUE(r.record);
  EXPECT_EQ(r.record->fruit_class, cinch::telemetry::FruitClass::Medium);
  EXPECT_EQ(r.antagonism_violations, 0u);
}

TEST(Scenario, MismatchReported) {
  const auto s = parse_scenario(R"(schema_version: 1
plant: {fruit: {diameter_mm: 62}}
script: [open, align_confirm, grasp]
expect: {outcome: Secured}
)");
  const auto r = run_scenario(s);
  EXPECT_FALSE(r.expectation_met());
  ASSERT_TRUE(r.outcome);
  EXPECT_EQ(r.outcome->result, OutcomeResult::Oversize);
}
