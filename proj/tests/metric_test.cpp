#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "calcheck/error.hpp"
#include "calcheck/hyptest.hpp"
#include "calcheck/metric.hpp"

namespace calcheck {
namespace {

PredictionRecord std_normal(double y) { return {GaussianPrediction(0.0, 1.0), y}; }

std::vector<PredictionRecord> calibrated(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> z;
  std::vector<PredictionRecord> out;
  for (int i = 0; i < n; ++i) {
    const double mu = 3.0 * z(rng);
    const double sigma = 1.0 + std::abs(z(rng));
    out.emplace_back(GaussianPrediction(mu, sigma), mu + sigma * z(rng));
  }
  return out;
}

ParticleCloudPrediction gaussian_cloud(std::mt19937_64& rng, int m) {
  std::normal_distribution<double> z;
  Eigen::MatrixXd pts(m, 2);
  for (int j = 0; j < m; ++j) {
    const double a = z(rng);
    pts.row(j) << a, 0.4 * a + 0.7 * z(rng);
  }
  return {std::vector<double>(static_cast<std::size_t>(m), 1.0), pts};
}

TEST(LevelGrid, Constructors) {
  const auto s = LevelGrid::standard();
  ASSERT_EQ(s.size(), 10u);
  EXPECT_DOUBLE_EQ(s[0], 0.05);
  EXPECT_DOUBLE_EQ(s[9], 0.95);
  EXPECT_EQ(LevelGrid::midpoints(10).levels(), s.levels());
  EXPECT_EQ(LevelGrid::parse("0.1, 0.5,0.9").levels(), (std::vector<double>{0.1, 0.5, 0.9}));
  EXPECT_THROW(LevelGrid::parse("0.5,0.1"), InvalidArgument);
  EXPECT_THROW(LevelGrid::parse("0.5,x"), InvalidArgument);
  EXPECT_THROW(LevelGrid({0.0, 0.5}), InvalidArgument);
  EXPECT_THROW(LevelGrid({}), InvalidArgument);
}

TEST(CoverageCounts, OutcomeAtMeanIsAlwaysCovered) {
  std::vector<PredictionRecord> r;
  for (int i = 0; i < 20; ++i) r.emplace_back(GaussianPrediction(i, 1.0 + i), i);
  const auto c = coverage_counts(r, LevelGrid::standard());
  for (auto k : c.counts()) EXPECT_EQ(k, 20);
}

TEST(CoverageCounts, HandExample) {
  const std::vector<PredictionRecord> r = {std_normal(0.0), std_normal(0.5), std_normal(3.0)};
  const auto c = coverage_counts(r, LevelGrid({0.95}));
  EXPECT_EQ(c.counts()[0], 2);
}

TEST(CoverageCounts, CalibratedWithinThreeSe) {
  std::mt19937_64 rng(21);
  constexpr int kN = 100000;
  const auto r = calibrated(rng, kN);
  const auto grid = LevelGrid::standard();
  const auto c = coverage_counts(r, grid);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    EXPECT_NEAR(c.fraction(k), grid[k], 3.0 * std::sqrt(grid[k] * (1 - grid[k]) / kN));
  }
}

TEST(CoverageCounts, Errors) {
  EXPECT_THROW(coverage_counts({}, LevelGrid::standard()), InvalidArgument);
  const std::vector<PredictionRecord> mixed = {
      std_normal(0.0), {MvGaussianPrediction(Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity()),
                        Eigen::Vector2d::Zero()}};
  EXPECT_THROW(coverage_counts(mixed, LevelGrid::standard()), InvalidArgument);
  const std::vector<PredictionRecord> cloud = {
      {ParticleCloudPrediction({1.0, 1.0}, Eigen::MatrixXd::Identity(2, 2)),
       Eigen::Vector2d::Zero()}};
  EXPECT_THROW(coverage_counts(cloud, LevelGrid::standard()), UnsupportedMetric);
}

TEST(CoverageCounts, EllipsoidAndSetRoutes) {
  const MvGaussianPrediction iso(Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity());
  const std::vector<PredictionRecord> mv = {{iso, Eigen::Vector2d(0.1, 0.1)},
                                            {iso, Eigen::Vector2d(3.0, 3.0)}};
  EXPECT_EQ(coverage_counts(mv, LevelGrid({0.5, 0.99})).counts(),
            (std::vector<std::int64_t>{1, 1}));
  const auto set = PredictionSetProvider::from_table({{0.5, {-1.0, 1.0}}, {0.9, {-2.0, 2.0}}});
  const std::vector<PredictionRecord> sets = {{set, 0.0}, {set, 1.5}, {set, 5.0}};
  EXPECT_EQ(coverage_counts(sets, LevelGrid({0.5, 0.9})).counts(),
            (std::vector<std::int64_t>{1, 2}));
}

TEST(CoverageCurve, RejectsNonMonotoneCounts) {
  EXPECT_THROW(CoverageCurve(LevelGrid({0.1, 0.2}), {5, 4}, 10), InvalidArgument);
  EXPECT_THROW(CoverageCurve(LevelGrid({0.1}), {11}, 10), InvalidArgument);
}

TEST(Pit, Examples) {
  const std::vector<PredictionRecord> r = {std_normal(0.0), std_normal(1.6449)};
  const auto u = pit(r);
  EXPECT_DOUBLE_EQ(u.values()[0], 0.5);
  EXPECT_NEAR(u.values()[1], 0.95, 1e-5);
  const double radius = std::sqrt(std::log(2.0));
  const std::vector<PredictionRecord> mv = {
      {MvGaussianPrediction(Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity()),
       Eigen::Vector2d(radius, radius)}};
  EXPECT_NEAR(pit(mv).values()[0], 0.5, 1e-12);
  const std::vector<PredictionRecord> cloud = {
      {ParticleCloudPrediction({1.0, 1.0}, Eigen::MatrixXd::Identity(2, 2)),
       Eigen::Vector2d::Zero()}};
  EXPECT_THROW(pit(cloud), UnsupportedMetric);
}

TEST(Fold, Examples) {
  const auto v = fold(PitSample({0.5, 0.0, 1.0, 0.975}));
  EXPECT_TRUE(v.folded());
  EXPECT_EQ(v.values()[0], 0.0);
  EXPECT_EQ(v.values()[1], 1.0);
  EXPECT_EQ(v.values()[2], 1.0);
  EXPECT_NEAR(v.values()[3], 0.95, 1e-15);
  EXPECT_THROW(fold(v), InvalidArgument);
}

TEST(Fold, PreservesUniformity) {
  int passes = 0;
  for (int rep = 0; rep < 100; ++rep) {
    std::mt19937_64 rng(1000 + rep);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> u(100000);
    for (double& x : u) x = unit(rng);
    // A plain two-sided KS against the uniform law.
    const auto v = fold(PitSample(u));
    passes += ks_test(PitSample(v.values()), {}, 0.01).rejected() ? 0 : 1;
  }
  EXPECT_GE(passes, 98);
}

TEST(Ecdf, Examples) {
  const PitSample s({0.1, 0.5, 0.9});
  EXPECT_DOUBLE_EQ(ecdf_eval(s, 0.5), 2.0 / 3.0);
  EXPECT_EQ(ecdf_eval(s, 1.0), 1.0);
  EXPECT_EQ(ecdf_eval(s, 0.05), 0.0);
  EXPECT_THROW(ecdf_eval(PitSample({}), 0.5), InvalidArgument);
}

TEST(Ecdf, CoverageIdentity) {
  std::mt19937_64 rng(22);
  const auto grid = LevelGrid::standard();
  for (int trial = 0; trial < 200; ++trial) {
    const auto r = calibrated(rng, 1 + trial);
    const auto c = coverage_counts(r, grid);
    const auto v = fold(pit(r));
    for (std::size_t k = 0; k < grid.size(); ++k) {
      EXPECT_EQ(c.fraction(k), ecdf_eval(v, grid[k]));
    }
  }
}

TEST(VarianceBin, EqualSizes) {
  std::mt19937_64 rng(23);
  const auto r = calibrated(rng, 366);
  const auto b = variance_bin(r, 3);
  ASSERT_EQ(b.bin_count(), 3u);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(b.members(j).size(), 122u);
  // Bins are ordered by sigma.
  double low_max = 0.0;
  for (auto i : b.members(0)) {
    low_max = std::max(low_max, std::get<GaussianPrediction>(r[i].prediction()).sigma());
  }
  for (auto i : b.members(1)) {
    EXPECT_GE(std::get<GaussianPrediction>(r[i].prediction()).sigma(), low_max);
  }
}

TEST(VarianceBin, TiesFollowRecordOrder) {
  std::vector<PredictionRecord> r;
  for (int i = 0; i < 10; ++i) r.push_back(std_normal(0.0));
  const auto b = variance_bin(r, 3);
  EXPECT_EQ(b.members(0), (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(b.members(1), (std::vector<std::size_t>{3, 4, 5}));
  EXPECT_EQ(b.members(2), (std::vector<std::size_t>{6, 7, 8, 9}));
}

TEST(VarianceBin, SingleBinAndErrors) {
  std::mt19937_64 rng(24);
  const auto r = calibrated(rng, 7);
  EXPECT_EQ(variance_bin(r, 1).members(0).size(), 7u);
  EXPECT_THROW(variance_bin(r, 8), InvalidArgument);
  EXPECT_THROW(variance_bin(r, 0), InvalidArgument);
}

TEST(VarianceBin, MultivariateUsesLogDet) {
  Eigen::Matrix2d big = 4.0 * Eigen::Matrix2d::Identity();
  const std::vector<PredictionRecord> r = {
      {MvGaussianPrediction(Eigen::Vector2d::Zero(), big), Eigen::Vector2d::Zero()},
      {MvGaussianPrediction(Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity()),
       Eigen::Vector2d::Zero()}};
  EXPECT_NEAR(uncertainty_scalar(r[0].prediction()), std::log(16.0), 1e-12);
  const auto b = variance_bin(r, 2);
  EXPECT_EQ(b.members(0), (std::vector<std::size_t>{1}));
}

TEST(Directions, UnitAndDeterministic) {
  const auto a = sample_directions(3, 50, 7);
  const auto b = sample_directions(3, 50, 7);
  ASSERT_EQ(a.size(), 50u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(a[i].norm(), 1.0, 1e-12);
    EXPECT_EQ(a[i], b[i]);
  }
  for (const auto& d : sample_directions(1, 5, 3)) EXPECT_EQ(d[0], 1.0);
  for (const auto& d : sample_directions(2, 100, 3)) EXPECT_GE(d[1], 0.0);
}

TEST(Probes, OneDimensionalReducesToQuantiles) {
  Eigen::MatrixXd pts(4, 1);
  pts << 1.0, 2.0, 3.0, 4.0;
  const ParticleCloudPrediction cloud(std::vector<double>(4, 1.0), pts);
  const auto probes = sample_probes(1, 2, LevelGrid({0.25, 0.5}), 9, cloud);
  ASSERT_EQ(probes.size(), 2u);
  EXPECT_EQ(probes[0].direction[0], 1.0);
  EXPECT_EQ(probes[0].threshold, 3.0);  // (1 - 0.25) quantile
  EXPECT_EQ(probes[1].threshold, 2.0);
  EXPECT_DOUBLE_EQ(probes[0].null_mean, 0.25);
}

TEST(Probes, CountAndDeterminism) {
  std::mt19937_64 rng(25);
  const auto cloud = gaussian_cloud(rng, 500);
  const auto a = sample_probes(2, 20, LevelGrid::standard(), 4, cloud);
  const auto b = sample_probes(2, 20, LevelGrid::standard(), 4, cloud);
  ASSERT_EQ(a.size(), 20u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].direction, b[i].direction);
    EXPECT_EQ(a[i].threshold, b[i].threshold);
    EXPECT_DOUBLE_EQ(a[i].level, LevelGrid::standard()[i % 10]);
  }
}

TEST(HalfPlaneDelta, Examples) {
  Eigen::MatrixXd pts(2, 2);
  pts << -1.0, 0.0, 1.0, 0.0;
  const ParticleCloudPrediction cloud({0.5, 0.5}, pts);
  const HalfPlaneProbe probe{Eigen::Vector2d(1.0, 0.0), 0.0, 0.5, 0.5};
  EXPECT_DOUBLE_EQ(halfplane_delta(probe, cloud, Eigen::Vector2d(2.0, 0.0)), -0.5);
  const HalfPlaneProbe below{Eigen::Vector2d(1.0, 0.0), -5.0, 0.5, 1.0};
  EXPECT_EQ(halfplane_delta(below, cloud, Eigen::Vector2d(2.0, 0.0)), 0.0);
  const HalfPlaneProbe above{Eigen::Vector2d(1.0, 0.0), 5.0, 0.5, 0.0};
  EXPECT_EQ(halfplane_delta(above, cloud, Eigen::Vector2d(2.0, 0.0)), 0.0);
}

TEST(HalfPlaneDelta, CalibratedMeanIsNearZero) {
  std::mt19937_64 rng(26);
  const auto cloud = gaussian_cloud(rng, 2000);
  const auto probes = sample_probes(2, 20, LevelGrid::standard(), 5, cloud);
  std::uniform_int_distribution<int> pick(0, 1999);
  constexpr int kTrials = 10000;
  std::vector<double> sum(probes.size(), 0.0);
  for (int t = 0; t < kTrials; ++t) {
    const Eigen::VectorXd y = cloud.points().row(pick(rng)).transpose();
    for (std::size_t l = 0; l < probes.size(); ++l) {
      sum[l] += halfplane_delta(probes[l], cloud, y);
    }
  }
  for (std::size_t l = 0; l < probes.size(); ++l) {
    EXPECT_LE(std::abs(sum[l] / kTrials), 3.0 / std::sqrt(double(kTrials)));
    EXPECT_NEAR(probes[l].null_mean, probes[l].level, 2e-3);
  }
}

TEST(HalfPlaneCoverage, ProjectedIntervalMatchesLevel) {
  std::mt19937_64 rng(27);
  const auto cloud = gaussian_cloud(rng, 1000);
  std::uniform_int_distribution<int> pick(0, 999);
  std::vector<PredictionRecord> r;
  for (int i = 0; i < 10000; ++i) {
    r.emplace_back(cloud, Eigen::VectorXd(cloud.points().row(pick(rng)).transpose()));
  }
  const auto grid = LevelGrid::standard();
  const auto dirs = sample_directions(2, 4, 1);
  for (const auto& curve : halfplane_coverage(r, dirs, grid)) {
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const double se = std::sqrt(grid[k] * (1 - grid[k]) / 10000);
      // Weak endpoints over 1000 atoms add at most 2/1000.
      EXPECT_GE(curve.fraction(k), grid[k] - 3 * se);
      EXPECT_LE(curve.fraction(k), grid[k] + 3 * se + 2e-3);
    }
  }
}

TEST(HalfPlaneCoverage, TwoParticleTie) {
  Eigen::MatrixXd pts(2, 2);
  pts << 0.0, 0.0, 1.0, 1.0;
  const ParticleCloudPrediction cloud({0.5, 0.5}, pts);
  for (const auto& d : sample_directions(2, 20, 8)) {
    EXPECT_TRUE(projected_interval_contains(cloud, Eigen::Vector2d(1.0, 1.0), d, 0.9));
  }
}

TEST(LevelSet, PerFamily) {
  EXPECT_TRUE(level_set_contains(std_normal(1.0), 0.7));
  EXPECT_FALSE(level_set_contains(std_normal(1.0), 0.6));
  const PredictionRecord e{ParametricPrediction::exponential(1.0), 1.0};
  EXPECT_TRUE(level_set_contains(e, 0.5));
  EXPECT_FALSE(level_set_contains(e, 0.1));
}

}  // namespace
}  // namespace calcheck
