#include <gtest/gtest.h>

#include <cmath>

#include "calcheck/error.hpp"
#include "calcheck/hyptest.hpp"
#include "calcheck/metric.hpp"
#include "calcheck/records.hpp"
#include "calcheck/sim.hpp"

namespace calcheck {
namespace {

std::vector<std::string> serialized(const std::vector<PredictionRecord>& records) {
  std::vector<std::string> out;
  for (const auto& r : records) out.push_back(format_record(r));
  return out;
}

TEST(Weather, DefaultsGiveAYear) {
  const auto r = run_weather_sim({});
  ASSERT_EQ(r.size(), 365u);
  EXPECT_EQ(r.front().time_index(), 30);
  EXPECT_EQ(r.back().time_index(), 394);
  double mean = 0.0;
  for (const auto& x : r) mean += x.outcome()[0];
  mean /= static_cast<double>(r.size());
  EXPECT_NEAR(mean, 16.9, 1.5);
}

TEST(Weather, Deterministic) {
  WeatherSimConfig c;
  c.seed = 9;
  EXPECT_EQ(serialized(run_weather_sim(c)), serialized(run_weather_sim(c)));
  WeatherSimConfig other = c;
  other.seed = 10;
  EXPECT_NE(serialized(run_weather_sim(c)), serialized(run_weather_sim(other)));
}

TEST(Weather, InjectionActsOnThePrediction) {
  WeatherSimConfig c;
  c.seed = 3;
  const auto base = run_weather_sim(c);
  c.injected_mean_bias = 0.5;
  c.injected_sd_scale = 2.0;
  const auto shifted = run_weather_sim(c);
  for (std::size_t i = 0; i < base.size(); ++i) {
    const auto& g0 = std::get<GaussianPrediction>(base[i].prediction());
    const auto& g1 = std::get<GaussianPrediction>(shifted[i].prediction());
    EXPECT_EQ(base[i].outcome(), shifted[i].outcome());
    EXPECT_NEAR(g1.mu(), g0.mu() + 0.5 * g0.sigma(), 1e-12);
    EXPECT_NEAR(g1.sigma(), 2.0 * g0.sigma(), 1e-12);
  }
}

TEST(Weather, Validation) {
  WeatherSimConfig c;
  c.window = 2;
  EXPECT_THROW(run_weather_sim(c), InvalidArgument);
  c = {};
  c.n_days = 30;
  EXPECT_THROW(run_weather_sim(c), InvalidArgument);
  c = {};
  c.noise_sd = 0.0;
  EXPECT_THROW(run_weather_sim(c), InvalidArgument);
}

TEST(Weather, DegenerateWindow) {
  WeatherSimConfig c;
  c.seasonal_amplitude = 0.0;
  c.noise_sd = 1e-300;
  EXPECT_THROW(run_weather_sim(c), InvalidDistribution);
}

TEST(Weather, SdInflationDetectedByUnfoldedKs) {
  int rejected = 0;
  for (int s = 0; s < 100; ++s) {
    WeatherSimConfig c;
    c.seed = 500 + static_cast<std::uint64_t>(s);
    c.injected_sd_scale = 1.10;
    const auto r = run_weather_sim(c);
    rejected += ks_test(pit(r), {}, 0.05).rejected() ? 1 : 0;
  }
  // Inflating the predicted sd by 10% moves the PIT sup distance by about
  // 0.03, well inside the 0.071 critical value at N = 365.
  EXPECT_LT(rejected, 20);
}

TEST(Weather, ZeroInjectionPassesFoldedToleranceCheck) {
  int accepted = 0;
  for (int s = 0; s < 100; ++s) {
    WeatherSimConfig c;
    c.seed = 700 + static_cast<std::uint64_t>(s);
    accepted += ks_test(fold(pit(run_weather_sim(c))), {Sidedness::one_sided, 0.02}, 0.05)
                        .rejected()
                    ? 0
                    : 1;
  }
  EXPECT_GE(accepted / 100.0, 0.95 - 3.0 * std::sqrt(0.05 * 0.95 / 100));
}

RobotSimConfig small_robot() {
  RobotSimConfig c;
  c.n_particles = 200;
  c.n_steps = 200;
  return c;
}

TEST(Robot, DefaultsShape) {
  const auto r = run_robot_sim({});
  ASSERT_EQ(r.size(), 500u);
  const auto& cloud = std::get<ParticleCloudPrediction>(r.front().prediction());
  EXPECT_EQ(cloud.size(), 500u);
  EXPECT_EQ(cloud.dim(), 2);
  EXPECT_EQ(r.front().time_index(), 1);
  EXPECT_EQ(r.back().time_index(), 500);
}

TEST(Robot, Deterministic) {
  auto c = small_robot();
  c.seed = 5;
  EXPECT_EQ(serialized(run_robot_sim(c)), serialized(run_robot_sim(c)));
}

TEST(Robot, UnmodeledDriftMakesTheFilterLag) {
  RobotSimConfig c;
  c.seed = 2;
  const auto r = run_robot_sim(c);
  const Eigen::Vector2d dir = c.drift.normalized();
  double lag = 0.0;
  for (const auto& rec : r) {
    const auto g = moment_match_gaussian(std::get<ParticleCloudPrediction>(rec.prediction()));
    lag += (rec.outcome() - g.mu()).dot(dir);
  }
  EXPECT_GT(lag / static_cast<double>(r.size()), 0.0);
}

TEST(Robot, ZeroDriftHalfPlaneCoverageNearNominal) {
  RobotSimConfig c;
  c.drift_multiplier = 0.0;
  c.seed = 4;
  const auto r = run_robot_sim(c);
  const LevelGrid grid({0.5});
  const auto dirs = sample_directions(2, 20, 4);
  double cov = 0.0;
  for (const auto& curve : halfplane_coverage(r, dirs, grid)) cov += curve.fraction(0);
  cov /= static_cast<double>(dirs.size());
  EXPECT_NEAR(cov, 0.5, 3.0 * std::sqrt(0.25 / 500));
}

TEST(Robot, Validation) {
  auto c = small_robot();
  c.beacon_positions = {{0.0, 0.0}, {1.0, 1.0}, {2.0, 2.0}};
  EXPECT_THROW(run_robot_sim(c), InvalidArgument);
  c = small_robot();
  c.beacon_positions.resize(2);
  EXPECT_THROW(run_robot_sim(c), InvalidArgument);
  c = small_robot();
  c.n_particles = 1;
  EXPECT_THROW(run_robot_sim(c), InvalidArgument);
}

TEST(Robot, DepletionNamesTheStep) {
  auto c = small_robot();
  c.range_noise_sd = 1e-200;
  try {
    run_robot_sim(c);
    FAIL() << "expected depletion";
  } catch (const ParticleDepletion& e) {
    EXPECT_GE(e.step(), 0);
  }
}

TEST(DriftSweep, EmptyMultipliers) {
  const auto report = drift_sweep(small_robot(), std::vector<double>{}, 3, {});
  EXPECT_TRUE(report.rows.empty());
  EXPECT_EQ(to_json(report)["rows"].size(), 0u);
}

TEST(DriftSweep, ZeroDriftRarelyAlarms) {
  RobotSimConfig c;
  c.seed = 1000;
  const std::vector<double> zero = {0.0};
  const auto report = drift_sweep(c, zero, 40, {0.9, 0.8, 0.05});
  ASSERT_EQ(report.rows.size(), 1u);
  const auto& row = report.rows[0];
  EXPECT_EQ(row.n_seeds, 40);
  EXPECT_EQ(row.first_crossings.size(), 40u);
  EXPECT_EQ(row.envelope.size(), 500u);
  EXPECT_GE(1.0 - row.alarms / 40.0, 0.95 - 3.0 * std::sqrt(0.05 * 0.95 / 40));
}

TEST(DriftSweep, RowsAndMedians) {
  auto c = small_robot();
  const std::vector<double> m = {0.0, 3.0};
  const auto report = drift_sweep(c, m, 5, {0.9, 0.8, 0.05});
  ASSERT_EQ(report.rows.size(), 2u);
  EXPECT_EQ(report.rows[1].multiplier, 3.0);
  for (const auto& row : report.rows) {
    int alarms = 0;
    for (const auto& t : row.first_crossings) alarms += t ? 1 : 0;
    EXPECT_EQ(alarms, row.alarms);
    EXPECT_EQ(row.median_first_crossing.has_value(), 2 * row.alarms > row.n_seeds);
    for (const auto& q : row.envelope) {
      EXPECT_LE(q[0], q[1]);
      EXPECT_LE(q[1], q[2]);
    }
  }
  EXPECT_NE(monitor_seed(1), monitor_seed(2));
}

}  // namespace
}  // namespace calcheck
