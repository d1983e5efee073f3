#ifndef CALCHECK_METRIC_HPP_
#define CALCHECK_METRIC_HPP_

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "calcheck/dist.hpp"

namespace calcheck {

// Strictly increasing coverage levels in (0, 1).
class LevelGrid {
 public:
  explicit LevelGrid(std::vector<double> levels);

  // {0.05, 0.15, ..., 0.95}
  static LevelGrid standard();
  // {(j - 1/2) / k : j = 1..k}; midpoints(10) == standard().
  static LevelGrid midpoints(std::size_t k);
  // "0.1,0.5,0.9"
  static LevelGrid parse(std::string_view comma_list);

  const std::vector<double>& levels() const { return levels_; }
  std::size_t size() const { return levels_.size(); }
  double operator[](std::size_t k) const { return levels_[k]; }

 private:
  std::vector<double> levels_;
};

// PIT values u_i = cdf(p_i, y_i), or folded values v_i = |2 u_i - 1|.
class PitSample {
 public:
  explicit PitSample(std::vector<double> values, bool folded = false);

  const std::vector<double>& values() const { return values_; }
  bool folded() const { return folded_; }
  std::size_t size() const { return values_.size(); }

 private:
  std::vector<double> values_;
  bool folded_;
};

// counts[k] = number of outcomes inside the level-k prediction set.
class CoverageCurve {
 public:
  CoverageCurve(LevelGrid levels, std::vector<std::int64_t> counts,
                std::int64_t n);

  const LevelGrid& levels() const { return levels_; }
  const std::vector<std::int64_t>& counts() const { return counts_; }
  std::int64_t n() const { return n_; }
  double fraction(std::size_t k) const;

 private:
  LevelGrid levels_;
  std::vector<std::int64_t> counts_;
  std::int64_t n_;
};

/*
 * Coverage counts per level. Scalar CDF-bearing predictions go through the
 * folded PIT (y in the centered interval iff v <= level), which makes the
 * result identical to ecdf_eval(fold(pit(records)), level) * N. Multivariate
 * Gaussians use the chi-squared ellipsoid, set providers their own membership.
 */
CoverageCurve coverage_counts(std::span<const PredictionRecord> records,
                              const LevelGrid& grid);

PitSample pit(std::span<const PredictionRecord> records);

PitSample fold(const PitSample& sample);

// Fraction of values <= t.
double ecdf_eval(const PitSample& sample, double t);

// Partition of records by predicted uncertainty into near-equal-size bins.
struct VarianceBins {
  // k_bins + 1 edges, the uncertainty values at the bin boundaries.
  std::vector<double> bin_edges;
  // Bin index per record, in record order.
  std::vector<std::size_t> assignments;

  std::size_t bin_count() const { return bin_edges.size() - 1; }
  std::vector<std::size_t> members(std::size_t bin) const;
};

// Scalar uncertainty used for binning: sigma for gaussians, log det(cov) for
// multivariate gaussians.
double uncertainty_scalar(const PredictiveDistribution& prediction);

VarianceBins variance_bin(std::span<const PredictionRecord> records,
                          std::size_t k_bins);

struct HalfPlaneProbe {
  Eigen::VectorXd direction;
  double threshold;
  // Nominal level the threshold was placed at.
  double level;
  // Reference-cloud mass strictly above the threshold.
  double null_mean;
};

// Direction uniform on the unit sphere up to sign. p = 1 gives +1; p = 2
// draws the angle from U(0, pi); higher p normalizes a standard normal vector.
Eigen::VectorXd random_direction(Eigen::Index dim, std::mt19937_64& rng);

std::vector<Eigen::VectorXd> sample_directions(Eigen::Index dim,
                                               std::size_t count,
                                               std::uint64_t seed);

/*
 * count probes with directions drawn from seed. Probe l is placed at level
 * grid[l mod K]: its threshold is the weighted (1 - level) quantile of the
 * reference cloud projected on the direction, so that the cloud mass above it
 * is approximately the level.
 */
std::vector<HalfPlaneProbe> sample_probes(Eigen::Index dim, std::size_t count,
                                          const LevelGrid& grid,
                                          std::uint64_t seed,
                                          const ParticleCloudPrediction& reference);

// sum_j w_j [<y_j, d> > b] - [<y, d> > b]
double halfplane_delta(const HalfPlaneProbe& probe,
                       const ParticleCloudPrediction& prediction,
                       const Eigen::VectorXd& y);

// lo <= <y, d> <= hi for the weighted quantiles of the projected cloud at
// (1 -/+ level) / 2.
bool projected_interval_contains(const ParticleCloudPrediction& prediction,
                                 const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& direction,
                                 double level);

// One coverage curve per direction, each record's own cloud providing the
// projected interval.
std::vector<CoverageCurve> halfplane_coverage(
    std::span<const PredictionRecord> records,
    std::span<const Eigen::VectorXd> directions, const LevelGrid& grid);

// Level-set membership for a single record, for every family that has one.
bool level_set_contains(const PredictionRecord& record, double level);

}  // namespace calcheck

#endif  // CALCHECK_METRIC_HPP_
