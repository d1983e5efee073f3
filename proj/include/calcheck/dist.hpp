#ifndef CALCHECK_DIST_HPP_
#define CALCHECK_DIST_HPP_

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

/*
 * Prediction models and the geometry derived from them: centered intervals,
 * coverage ellipsoids, weighted quantiles of particle projections.
 *
 * Every type here is immutable after construction.
 */
namespace calcheck {

// Standard normal and chi-squared primitives. Relative accuracy is that of
// erfc / erfc_inv and the regularized incomplete gamma.
double normal_cdf(double z);
double normal_quantile(double p);
double chi_squared_cdf(double x, int dof);
double chi_squared_quantile(double p, int dof);

struct Interval {
  double lo;
  double hi;

  bool contains(double y) const { return lo <= y && y <= hi; }
};

class GaussianPrediction {
 public:
  GaussianPrediction(double mu, double sigma);

  double mu() const { return mu_; }
  double sigma() const { return sigma_; }

  double cdf(double y) const;
  double quantile(double q) const;

 private:
  double mu_;
  double sigma_;
};

/*
 * N(mu, cov). The covariance is factorized once at construction; if the
 * Cholesky factorization fails, 1e-10 * trace / d is added to the diagonal and
 * the factorization retried exactly once. cov() returns the matrix that was
 * actually factorized.
 */
class MvGaussianPrediction {
 public:
  MvGaussianPrediction(Eigen::VectorXd mu, Eigen::MatrixXd cov);

  const Eigen::VectorXd& mu() const { return mu_; }
  const Eigen::MatrixXd& cov() const { return cov_; }
  Eigen::Index dim() const { return mu_.size(); }
  bool regularized() const { return regularized_; }

  double log_det() const;
  double mahalanobis_sq(const Eigen::VectorXd& y) const;

 private:
  Eigen::VectorXd mu_;
  Eigen::MatrixXd cov_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  bool regularized_ = false;
};

enum class ParametricFamily { custom, normal, student_t, exponential, gamma };

std::string_view to_string(ParametricFamily family);

/*
 * A scalar continuous distribution known through its CDF and quantile
 * function. Built-in families remember their parameters so they can be
 * serialized; custom ones cannot.
 */
class ParametricPrediction {
 public:
  using Function = std::function<double(double)>;

  ParametricPrediction(Function cdf, Function quantile);

  static ParametricPrediction normal(double mu, double sigma);
  static ParametricPrediction student_t(double dof, double loc, double scale);
  static ParametricPrediction exponential(double rate);
  static ParametricPrediction gamma(double shape, double scale);

  double cdf(double y) const { return cdf_(y); }
  double quantile(double q) const { return quantile_(q); }

  ParametricFamily family() const { return family_; }
  const std::vector<double>& params() const { return params_; }

 private:
  ParametricPrediction(ParametricFamily family, std::vector<double> params,
                       Function cdf, Function quantile);

  ParametricFamily family_ = ParametricFamily::custom;
  std::vector<double> params_;
  Function cdf_;
  Function quantile_;
};

/*
 * Weighted particles {(w_j, y_j)}, one particle per row of points(). Weights
 * are normalized to sum to one on construction.
 */
class ParticleCloudPrediction {
 public:
  ParticleCloudPrediction(std::vector<double> weights, Eigen::MatrixXd points);

  std::size_t size() const { return weights_.size(); }
  Eigen::Index dim() const { return points_.cols(); }
  const std::vector<double>& weights() const { return weights_; }
  const Eigen::MatrixXd& points() const { return points_; }

 private:
  std::vector<double> weights_;
  Eigen::MatrixXd points_;
};

struct LevelSet {
  double level;
  Interval interval;
};

/*
 * Density-free prediction sets: only membership y in T_level can be queried.
 * Membership must be monotone in the level (nested sets).
 */
class PredictionSetProvider {
 public:
  using Membership = std::function<bool(double, const Eigen::VectorXd&)>;

  PredictionSetProvider(Eigen::Index dim, Membership contains);

  // Scalar sets tabulated per level, as produced by e.g. a conformal
  // predictor. Queries at untabulated levels throw InvalidArgument.
  static PredictionSetProvider from_table(std::vector<LevelSet> table);

  bool contains(double level, const Eigen::VectorXd& y) const;
  Eigen::Index dim() const { return dim_; }

  // Empty for providers built from a callable.
  const std::vector<LevelSet>& table() const { return table_; }

 private:
  Eigen::Index dim_;
  Membership contains_;
  std::vector<LevelSet> table_;
};

using PredictiveDistribution =
    std::variant<GaussianPrediction, MvGaussianPrediction, ParametricPrediction,
                 ParticleCloudPrediction, PredictionSetProvider>;

enum class ModelKind { gaussian, mv_gaussian, parametric, particles, set_provider };

ModelKind model_kind(const PredictiveDistribution& prediction);
std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);
Eigen::Index dimension(const PredictiveDistribution& prediction);

// One (prediction, outcome) pair. The outcome dimension must match.
class PredictionRecord {
 public:
  PredictionRecord(PredictiveDistribution prediction, Eigen::VectorXd outcome,
                   std::optional<std::int64_t> time_index = std::nullopt);
  PredictionRecord(PredictiveDistribution prediction, double outcome,
                   std::optional<std::int64_t> time_index = std::nullopt);

  const PredictiveDistribution& prediction() const { return prediction_; }
  const Eigen::VectorXd& outcome() const { return outcome_; }
  const std::optional<std::int64_t>& time_index() const { return time_index_; }

 private:
  PredictiveDistribution prediction_;
  Eigen::VectorXd outcome_;
  std::optional<std::int64_t> time_index_;
};

// [qtl((1 - level) / 2), qtl((1 + level) / 2)]
Interval centered_interval(const GaussianPrediction& prediction, double level);
Interval centered_interval(const ParametricPrediction& prediction, double level);

double mahalanobis_sq(const MvGaussianPrediction& prediction,
                      const Eigen::VectorXd& y);

// D^2(y) <= chi2_d quantile at level.
bool ellipsoid_contains(const MvGaussianPrediction& prediction,
                        const Eigen::VectorXd& y, double level);

struct WeightedValue {
  double weight;
  double value;
};

/*
 * Sorted weighted sample supporting repeated quantile queries. The quantile
 * at q is the smallest value whose cumulative weight reaches q (the
 * left-continuous generalized inverse of the weighted ECDF).
 */
class WeightedEcdf {
 public:
  explicit WeightedEcdf(std::vector<WeightedValue> samples);

  double quantile(double q) const;
  double total_weight() const { return cumulative_.back(); }

 private:
  std::vector<WeightedValue> sorted_;
  std::vector<double> cumulative_;
};

double weighted_quantile(std::span<const WeightedValue> samples, double q);

std::vector<WeightedValue> project_particles(
    const ParticleCloudPrediction& prediction, const Eigen::VectorXd& direction);

// Weighted mean and covariance of the cloud.
MvGaussianPrediction moment_match_gaussian(
    const ParticleCloudPrediction& prediction);

}  // namespace calcheck

#endif  // CALCHECK_DIST_HPP_
