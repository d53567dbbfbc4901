#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "cinch/telemetry/analysis.hpp"
#include "cinch/telemetry/log.hpp"
#include "oracles.hpp"

using namespace cinch::telemetry;
using cinch::grasp::GraspPhase;
using K = GraspPhase::Kind;

namespace {

std::vector<TelemetrySample> random_log(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(-200.0, 200.0);
  std::uniform_int_distribution<int> phase(0, 7);
  std::vector<TelemetrySample> out;
  double t = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    TelemetrySample s;
    t += 0.02;
    s.time = t;
    s.phase.kind = static_cast<K>(phase(rng));
    if (s.phase.is(K::Fault)) s.phase.reason = cinch::grasp::FaultReason::Lost;
    s.closer = {u(rng), u(rng), u(rng) / 100.0};
    s.opener = {u(rng), u(rng), u(rng) / 100.0};
    if (i % 3 != 0) s.contact_force = std::abs(u(rng)) / 10.0;
    if (i % 5 == 1) s.pull_force = std::abs(u(rng)) / 10.0;
    out.push_back(s);
  }
  return out;
}

TelemetrySample at(double t, K phase, std::optional<double> contact) {
  TelemetrySample s;
  s.time = t;
  s.phase.kind = phase;
  s.contact_force = contact;
  return s;
}

HarvestLog harvest(const std::string& id, double peak) {
  return {id,
          {at(0.0, K::Open, 0.0), at(0.1, K::Enclosing, peak * 0.5), at(0.2, K::Secured, peak),
           at(0.3, K::Detaching, peak * 0.9), at(0.4, K::Releasing, peak * 3.0)},
          {}};
}

}  // namespace

TEST(Log, RoundTripWithNulls) {
  std::mt19937_64 rng(5);
  const auto log = random_log(rng, 1000);
  std::stringstream ss;
  for (const auto& s : log) ss << to_line(s) << "\n";
  const auto back = parse_log(ss);
  ASSERT_EQ(back.size(), log.size());
  for (std::size_t i = 0; i < log.size(); ++i) ASSERT_EQ(back[i], log[i]) << "sample " << i;
}

TEST(Log, AbsentForcesOmittedExplicitNullAccepted) {
  TelemetrySample s;
  s.time = 1.0;
  auto j = to_json(s);
  EXPECT_FALSE(j.contains("contact_force"));
  EXPECT_EQ(j["schema_version"], kSchemaVersion);
  j["contact_force"] = nullptr;
  j["pull_force"] = 2.5;
  const auto back = sample_from_json(j);
  EXPECT_FALSE(back.contact_force);
  EXPECT_EQ(back.pull_force, 2.5);
}

TEST(Log, NonMonotoneTimeNamesLine) {
  std::stringstream ss;
  TelemetrySample s;
  for (double t : {0.02, 0.04, 0.04}) {
    s.time = t;
    ss << to_line(s) << "\n";
  }
  try {
    parse_log(ss);
    FAIL();
  } catch (const NonMonotoneTime& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(Log, SchemaMismatch) {
  TelemetrySample s;
  auto j = to_json(s);
  j["schema_version"] = 99;
  std::stringstream ss(j.dump() + "\n");
  EXPECT_THROW(parse_log(ss), SchemaMismatch);
}

TEST(Log, WriterRejectsTimeGoingBack) {
  const auto path = std::filesystem::temp_directory_path() / "cinch_writer_test.jsonl";
  LogWriter w(path, true);
  TelemetrySample s;
  s.time = 1.0;
  w.append(s);
  s.time = 0.5;
  EXPECT_THROW(w.append(s), NonMonotoneTime);
  w.flush();
  EXPECT_EQ(load_log(path).size(), 1u);
  std::filesystem::remove(path);
}

TEST(Records, RoundTrip) {
  HarvestRecord r;
  r.fruit_class = FruitClass::Small;
  r.fruit_diameter_mm = 24.3;
  r.outcome = cinch::grasp::OutcomeResult::Secured;
  r.peak_pull_force = 4.0;
  r.detached = true;
  r.bruised_day5 = false;
  EXPECT_EQ(record_from_json(to_json(r)), r);
  HarvestRecord empty;
  EXPECT_EQ(record_from_json(to_json(empty)), empty);
}

TEST(Threshold, Examples) {
  const auto s = compute_threshold({{"a", 10}, {"b", 20}, {"c", 30}});
  EXPECT_DOUBLE_EQ(s.threshold, 20.0);
  EXPECT_DOUBLE_EQ(s.min, 10.0);
  EXPECT_DOUBLE_EQ(s.max, 30.0);
  EXPECT_DOUBLE_EQ(s.stddev, 10.0);
  const auto one = compute_threshold({{"x", 12}});
  EXPECT_DOUBLE_EQ(one.threshold, 12.0);
  EXPECT_DOUBLE_EQ(one.stddev, 0.0);
  EXPECT_THROW(compute_threshold({}), EmptyStudy);
}

TEST(Threshold, ThirteenSampleOracle) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> f(12.0, 30.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<BurstSample> samples;
    std::vector<double> xs;
    for (int i = 0; i < 13; ++i) {
      xs.push_back(f(rng));
      samples.push_back({"m" + std::to_string(i), xs.back()});
    }
    const double want = cinch::test::mean_by_summation(xs);
    EXPECT_NEAR(compute_threshold(samples).threshold, want, 1e-9 * want);
  }
}

TEST(Threshold, BurstCsv) {
  std::stringstream with_header("fruit_id,burst_force\nm1,18.5\nm2,21.5\n");
  const auto a = parse_burst_csv(with_header);
  ASSERT_EQ(a.size(), 2u);
  EXPECT_EQ(a[0].fruit_id, "m1");
  EXPECT_DOUBLE_EQ(compute_threshold(a).threshold, 20.0);
  std::stringstream bare("19\n21\n");
  const auto b = parse_burst_csv(bare);
  ASSERT_EQ(b.size(), 2u);
  EXPECT_DOUBLE_EQ(b[1].burst_force, 21.0);
}

TEST(Margin, Examples) {
  const auto r = margin_report({harvest("t1", 3.1), harvest("t2", 2.8)}, 20.0);
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_NEAR(r.rows[0].margin, 16.9, 1e-12);
  EXPECT_NEAR(r.rows[1].margin, 17.2, 1e-12);
  EXPECT_EQ(r.violations, 0);
  EXPECT_NEAR(r.min_margin, 16.9, 1e-12);
}

TEST(Margin, PeakEqualToThresholdIsViolation) {
  const auto r = margin_report({harvest("t", 20.0)}, 20.0);
  EXPECT_EQ(r.violations, 1);
  EXPECT_TRUE(r.rows[0].violation);
  EXPECT_EQ(r.rows[0].margin, 0.0);
}

TEST(Margin, ReleasingPhaseIgnored) {
  // The 3x spike sits in Releasing and must not count.
  const auto r = margin_report({harvest("t", 5.0)}, 20.0);
  EXPECT_DOUBLE_EQ(r.rows[0].peak_force, 5.0);
}

TEST(Margin, NoDetachPhase) {
  HarvestLog log{"bad", {at(0.0, K::Enclosing, 1.0), at(0.1, K::Secured, 2.0)}, {}};
  EXPECT_THROW(margin_report({log}, 20.0), NoDetachPhase);
}

TEST(Margin, ExternalForceJoinedOnTime) {
  HarvestLog log{"hw",
                 {at(1.0, K::Enclosing, std::nullopt), at(2.0, K::Detaching, std::nullopt),
                  at(3.0, K::Releasing, std::nullopt)},
                 {}};
  std::stringstream csv("time,force\n0.5,50\n1.5,3.5\n2.0,4.25\n2.5,40\n");
  log.external_force = parse_force_csv(csv);
  const auto r = margin_report({log}, 20.0);
  EXPECT_DOUBLE_EQ(r.rows[0].peak_force, 4.25);
}

TEST(Rates, PercentExamples) {
  EXPECT_EQ(format_percent(0, 23), "0.0");
  EXPECT_EQ(format_percent(2, 23), "8.7");
  EXPECT_EQ(format_percent(3, 33), "9.1");
  EXPECT_EQ(format_percent(1, 8), "12.5");
  EXPECT_EQ(format_percent(1, 16), "6.2");  // 6.25 ties to even
  EXPECT_EQ(format_percent(3, 16), "18.8");  // 18.75 ties to even
}

TEST(Rates, PercentMatchesOracle) {
  for (long long n = 1; n <= 400; ++n) {
    for (long long k = 0; k <= n; ++k) {
      ASSERT_EQ(format_percent(k, n), cinch::test::percent_oracle(k, n)) << k << "/" << n;
    }
  }
}

// Published bruise rates are within one display step of the exact ratios.
TEST(Rates, PublishedBruiseRatesConsistent) {
  EXPECT_LT(std::abs(8.6 - 200.0 / 23.0), 0.1);
  EXPECT_LT(std::abs(9.0 - 300.0 / 33.0), 0.1);
}

TEST(Rates, TableCountsByClass) {
  std::vector<HarvestRecord> recs;
  for (int i = 0; i < 23; ++i) {
    HarvestRecord r;
    r.fruit_class = FruitClass::Medium;
    r.outcome = cinch::grasp::OutcomeResult::Secured;
    r.detached = true;
    r.bruised_day5 = i < 2;
    recs.push_back(r);
  }
  for (int i = 0; i < 33; ++i) {
    HarvestRecord r;
    r.fruit_class = FruitClass::Small;
    r.damaged_on_harvest = i == 0;
    recs.push_back(r);
  }
  const auto rows = rate_table(recs);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].fruit_class, FruitClass::Medium);
  EXPECT_EQ(rows[0].n, 23);
  EXPECT_EQ(rows[0].damage_rate, "0.0");
  ASSERT_TRUE(rows[0].bruise_rate);
  EXPECT_EQ(*rows[0].bruise_rate, "8.7");
  EXPECT_EQ(rows[1].damage_rate, "3.0");
  EXPECT_FALSE(rows[1].bruise_rate);
  const auto text = render_rate_table(rows);
  EXPECT_NE(text.find("Medium"), std::string::npos);
}

TEST(Export, CsvRoundTrip) {
  std::mt19937_64 rng(11);
  const auto log = random_log(rng, 200);
  const std::vector<std::string> fields{"time", "closer.current_ma", "closer.velocity_rpm", "contact_force"};
  const auto table = select_series(log, fields);
  std::stringstream ss(to_csv(table));
  const auto back = parse_csv(ss);
  ASSERT_EQ(back.fields, table.fields);
  ASSERT_EQ(back.rows.size(), table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    for (std::size_t j = 0; j < fields.size(); ++j) {
      ASSERT_EQ(back.rows[i][j].has_value(), table.rows[i][j].has_value());
      if (table.rows[i][j]) EXPECT_NEAR(*back.rows[i][j], *table.rows[i][j], 1e-9 * (1 + std::abs(*table.rows[i][j])));
    }
  }
}

TEST(Export, UnknownFieldAndEmptyLog) {
  EXPECT_THROW(select_series({at(0, K::Idle, std::nullopt)}, {"time", "closer.torque"}), UnknownField);
  EXPECT_THROW(render_svg({}, 100.0), EmptyLog);
}

TEST(Export, SvgCarriesReferenceLine) {
  std::mt19937_64 rng(3);
  const auto svg = render_svg(random_log(rng, 50), 100.0);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("reference 100.00 mA"), std::string::npos);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
}
