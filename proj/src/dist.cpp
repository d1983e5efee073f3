#include "calcheck/dist.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <utility>

#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "calcheck/error.hpp"

namespace calcheck {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_level(double level) {
  if (!(level > 0.0 && level < 1.0)) {
    throw InvalidArgument("level must lie in (0, 1), got " +
                          std::to_string(level));
  }
}

Interval checked_interval(double lo, double hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) {
    throw InvalidDistribution("non-finite quantile in centered interval");
  }
  return {lo, hi};
}

}  // namespace

double normal_cdf(double z) {
  return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

double normal_quantile(double p) {
  if (std::isnan(p)) {
    return p;
  }
  if (p <= 0.0) {
    return -kInf;
  }
  if (p >= 1.0) {
    return kInf;
  }
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

double chi_squared_cdf(double x, int dof) {
  if (dof < 1) {
    throw InvalidArgument("chi-squared degrees of freedom must be >= 1");
  }
  if (std::isnan(x)) {
    return x;
  }
  if (x <= 0.0) {
    return 0.0;
  }
  if (std::isinf(x)) {
    return 1.0;
  }
  return boost::math::gamma_p(0.5 * dof, 0.5 * x);
}

double chi_squared_quantile(double p, int dof) {
  if (dof < 1) {
    throw InvalidArgument("chi-squared degrees of freedom must be >= 1");
  }
  if (p <= 0.0) {
    return 0.0;
  }
  if (p >= 1.0) {
    return kInf;
  }
  return 2.0 * boost::math::gamma_p_inv(0.5 * dof, p);
}

GaussianPrediction::GaussianPrediction(double mu, double sigma)
    : mu_(mu), sigma_(sigma) {
  if (!std::isfinite(mu) || !std::isfinite(sigma) || !(sigma > 0.0)) {
    throw InvalidDistribution("gaussian prediction needs finite mu and sigma > 0");
  }
}

double GaussianPrediction::cdf(double y) const {
  return normal_cdf((y - mu_) / sigma_);
}

double GaussianPrediction::quantile(double q) const {
  return mu_ + sigma_ * normal_quantile(q);
}

MvGaussianPrediction::MvGaussianPrediction(Eigen::VectorXd mu,
                                           Eigen::MatrixXd cov)
    : mu_(std::move(mu)), cov_(std::move(cov)) {
  const auto d = mu_.size();
  if (d < 1 || cov_.rows() != d || cov_.cols() != d) {
    throw InvalidDistribution("covariance must be d x d with d = dim(mu) >= 1");
  }
  if (!mu_.allFinite() || !cov_.allFinite()) {
    throw InvalidDistribution("non-finite entries in multivariate gaussian");
  }
  const double scale = std::max(cov_.cwiseAbs().maxCoeff(), 1e-300);
  if ((cov_ - cov_.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
    throw InvalidDistribution("covariance is not symmetric");
  }

  llt_.compute(cov_);
  if (llt_.info() != Eigen::Success) {
    const double jitter = 1e-10 * cov_.trace() / static_cast<double>(d);
    if (jitter > 0.0) {
      cov_.diagonal().array() += jitter;
      llt_.compute(cov_);
      regularized_ = true;
    }
    if (!(jitter > 0.0) || llt_.info() != Eigen::Success) {
      throw SingularCovariance("covariance is singular or indefinite");
    }
  }
}

double MvGaussianPrediction::log_det() const {
  return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
}

double MvGaussianPrediction::mahalanobis_sq(const Eigen::VectorXd& y) const {
  if (y.size() != mu_.size()) {
    throw InvalidArgument("outcome dimension does not match prediction");
  }
  const Eigen::VectorXd z = llt_.matrixL().solve(y - mu_);
  return z.squaredNorm();
}

std::string_view to_string(ParametricFamily family) {
  switch (family) {
    case ParametricFamily::custom:
      return "custom";
    case ParametricFamily::normal:
      return "normal";
    case ParametricFamily::student_t:
      return "student_t";
    case ParametricFamily::exponential:
      return "exponential";
    case ParametricFamily::gamma:
      return "gamma";
  }
  return "custom";
}

ParametricPrediction::ParametricPrediction(Function cdf, Function quantile)
    : ParametricPrediction(ParametricFamily::custom, {}, std::move(cdf),
                           std::move(quantile)) {}

ParametricPrediction::ParametricPrediction(ParametricFamily family,
                                           std::vector<double> params,
                                           Function cdf, Function quantile)
    : family_(family),
      params_(std::move(params)),
      cdf_(std::move(cdf)),
      quantile_(std::move(quantile)) {
  if (!cdf_ || !quantile_) {
    throw InvalidDistribution("parametric prediction needs both cdf and quantile");
  }
}

ParametricPrediction ParametricPrediction::normal(double mu, double sigma) {
  const GaussianPrediction g(mu, sigma);
  return {ParametricFamily::normal,
          {mu, sigma},
          [g](double y) { return g.cdf(y); },
          [g](double q) { return g.quantile(q); }};
}

ParametricPrediction ParametricPrediction::student_t(double dof, double loc,
                                                     double scale) {
  if (!(dof > 0.0) || !(scale > 0.0) || !std::isfinite(loc) ||
      !std::isfinite(dof) || !std::isfinite(scale)) {
    throw InvalidDistribution("student_t needs dof > 0, scale > 0");
  }
  const boost::math::students_t_distribution<double> t(dof);
  return {ParametricFamily::student_t,
          {dof, loc, scale},
          [t, loc, scale](double y) {
            const double z = (y - loc) / scale;
            if (std::isinf(z)) {
              return z > 0 ? 1.0 : 0.0;
            }
            return boost::math::cdf(t, z);
          },
          [t, loc, scale](double q) {
            if (q <= 0.0) {
              return -kInf;
            }
            if (q >= 1.0) {
              return kInf;
            }
            return loc + scale * boost::math::quantile(t, q);
          }};
}

ParametricPrediction ParametricPrediction::exponential(double rate) {
  if (!(rate > 0.0) || !std::isfinite(rate)) {
    throw InvalidDistribution("exponential needs rate > 0");
  }
  return {ParametricFamily::exponential,
          {rate},
          [rate](double y) { return y <= 0.0 ? 0.0 : -std::expm1(-rate * y); },
          [rate](double q) {
            if (q <= 0.0) {
              return 0.0;
            }
            if (q >= 1.0) {
              return kInf;
            }
            return -std::log1p(-q) / rate;
          }};
}

ParametricPrediction ParametricPrediction::gamma(double shape, double scale) {
  if (!(shape > 0.0) || !(scale > 0.0) || !std::isfinite(shape) ||
      !std::isfinite(scale)) {
    throw InvalidDistribution("gamma needs shape > 0, scale > 0");
  }
  return {ParametricFamily::gamma,
          {shape, scale},
          [shape, scale](double y) {
            if (y <= 0.0) {
              return 0.0;
            }
            if (std::isinf(y)) {
              return 1.0;
            }
            return boost::math::gamma_p(shape, y / scale);
          },
          [shape, scale](double q) {
            if (q <= 0.0) {
              return 0.0;
            }
            if (q >= 1.0) {
              return kInf;
            }
            return scale * boost::math::gamma_p_inv(shape, q);
          }};
}

ParticleCloudPrediction::ParticleCloudPrediction(std::vector<double> weights,
                                                 Eigen::MatrixXd points)
    : weights_(std::move(weights)), points_(std::move(points)) {
  if (weights_.size() < 2) {
    throw InvalidDistribution("particle cloud needs at least 2 particles");
  }
  if (static_cast<Eigen::Index>(weights_.size()) != points_.rows() ||
      points_.cols() < 1) {
    throw InvalidDistribution("particle weights and points disagree in count");
  }
  if (!points_.allFinite()) {
    throw InvalidDistribution("non-finite particle coordinates");
  }
  double total = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw InvalidDistribution("particle weights must be finite and >= 0");
    }
    total += w;
  }
  if (!(total > 0.0)) {
    throw InvalidDistribution("particle weights sum to zero");
  }
  // Weights normalized up to rounding are kept bit-for-bit.
  if (std::abs(total - 1.0) <= 1e-14) {
    return;
  }
  for (double& w : weights_) {
    w /= total;
  }
}

PredictionSetProvider::PredictionSetProvider(Eigen::Index dim,
                                             Membership contains)
    : dim_(dim), contains_(std::move(contains)) {
  if (dim_ < 1 || !contains_) {
    throw InvalidDistribution("set provider needs dim >= 1 and a membership test");
  }
}

PredictionSetProvider PredictionSetProvider::from_table(
    std::vector<LevelSet> table) {
  if (table.empty()) {
    throw InvalidDistribution("empty prediction-set table");
  }
  std::sort(table.begin(), table.end(),
            [](const LevelSet& a, const LevelSet& b) { return a.level < b.level; });
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto& s = table[i];
    if (!(s.level > 0.0 && s.level < 1.0) || !(s.interval.lo <= s.interval.hi)) {
      throw InvalidDistribution("set table entries need level in (0,1), lo <= hi");
    }
    if (i > 0) {
      const auto& prev = table[i - 1];
      if (s.level == prev.level) {
        throw InvalidDistribution("duplicate level in set table");
      }
      if (s.interval.lo > prev.interval.lo || s.interval.hi < prev.interval.hi) {
        throw InvalidDistribution("set table is not nested in the level");
      }
    }
  }
  auto lookup = [table](double level, const Eigen::VectorXd& y) {
    for (const auto& s : table) {
      if (std::abs(s.level - level) <= 1e-9) {
        return s.interval.contains(y[0]);
      }
    }
    throw InvalidArgument("prediction set not tabulated at level " +
                          std::to_string(level));
  };
  PredictionSetProvider provider(1, lookup);
  provider.table_ = std::move(table);
  return provider;
}

bool PredictionSetProvider::contains(double level,
                                     const Eigen::VectorXd& y) const {
  require_level(level);
  if (y.size() != dim_) {
    throw InvalidArgument("outcome dimension does not match prediction set");
  }
  return contains_(level, y);
}

ModelKind model_kind(const PredictiveDistribution& prediction) {
  return static_cast<ModelKind>(prediction.index());
}

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::gaussian:
      return "gaussian";
    case ModelKind::mv_gaussian:
      return "mv_gaussian";
    case ModelKind::parametric:
      return "parametric";
    case ModelKind::particles:
      return "particles";
    case ModelKind::set_provider:
      return "set_provider";
  }
  return "gaussian";
}

ModelKind parse_model_kind(std::string_view name) {
  for (auto kind : {ModelKind::gaussian, ModelKind::mv_gaussian,
                    ModelKind::parametric, ModelKind::particles,
                    ModelKind::set_provider}) {
    if (to_string(kind) == name) {
      return kind;
    }
  }
  throw ConfigError("unknown model kind '" + std::string(name) + "'");
}

Eigen::Index dimension(const PredictiveDistribution& prediction) {
  struct {
    Eigen::Index operator()(const GaussianPrediction&) const { return 1; }
    Eigen::Index operator()(const ParametricPrediction&) const { return 1; }
    Eigen::Index operator()(const MvGaussianPrediction& p) const { return p.dim(); }
    Eigen::Index operator()(const ParticleCloudPrediction& p) const {
      return p.dim();
    }
    Eigen::Index operator()(const PredictionSetProvider& p) const {
      return p.dim();
    }
  } visitor;
  return std::visit(visitor, prediction);
}

PredictionRecord::PredictionRecord(PredictiveDistribution prediction,
                                   Eigen::VectorXd outcome,
                                   std::optional<std::int64_t> time_index)
    : prediction_(std::move(prediction)),
      outcome_(std::move(outcome)),
      time_index_(time_index) {
  if (outcome_.size() != dimension(prediction_)) {
    throw InvalidArgument("outcome dimension " + std::to_string(outcome_.size()) +
                          " does not match prediction dimension " +
                          std::to_string(dimension(prediction_)));
  }
  if (!outcome_.allFinite()) {
    throw InvalidArgument("outcome must be finite");
  }
}

PredictionRecord::PredictionRecord(PredictiveDistribution prediction,
                                   double outcome,
                                   std::optional<std::int64_t> time_index)
    : PredictionRecord(std::move(prediction),
                       Eigen::VectorXd::Constant(1, outcome), time_index) {}

Interval centered_interval(const GaussianPrediction& prediction, double level) {
  require_level(level);
  return checked_interval(prediction.quantile(0.5 * (1.0 - level)),
                          prediction.quantile(0.5 * (1.0 + level)));
}

Interval centered_interval(const ParametricPrediction& prediction,
                           double level) {
  require_level(level);
  return checked_interval(prediction.quantile(0.5 * (1.0 - level)),
                          prediction.quantile(0.5 * (1.0 + level)));
}

double mahalanobis_sq(const MvGaussianPrediction& prediction,
                      const Eigen::VectorXd& y) {
  return prediction.mahalanobis_sq(y);
}

bool ellipsoid_contains(const MvGaussianPrediction& prediction,
                        const Eigen::VectorXd& y, double level) {
  require_level(level);
  return prediction.mahalanobis_sq(y) <=
         chi_squared_quantile(level, static_cast<int>(prediction.dim()));
}

WeightedEcdf::WeightedEcdf(std::vector<WeightedValue> samples)
    : sorted_(std::move(samples)) {
  if (sorted_.empty()) {
    throw InvalidArgument("weighted quantile of an empty sample");
  }
  for (const auto& s : sorted_) {
    if (!(s.weight >= 0.0) || !std::isfinite(s.weight) || !std::isfinite(s.value)) {
      throw InvalidArgument("weighted samples need finite values and weights >= 0");
    }
  }
  std::stable_sort(sorted_.begin(), sorted_.end(),
                   [](const WeightedValue& a, const WeightedValue& b) {
                     return a.value < b.value;
                   });
  cumulative_.reserve(sorted_.size());
  double running = 0.0;
  for (const auto& s : sorted_) {
    running += s.weight;
    cumulative_.push_back(running);
  }
  if (!(running > 0.0)) {
    throw InvalidArgument("weighted samples have zero total weight");
  }
}

double WeightedEcdf::quantile(double q) const {
  if (!(q > 0.0 && q <= 1.0)) {
    throw InvalidArgument("quantile level must lie in (0, 1]");
  }
  // Relative slack absorbs rounding in the running sum, so that equal weights
  // reproduce the order-statistic definition.
  const double target = q * total_weight() * (1.0 - 1e-12);
  const auto it =
      std::lower_bound(cumulative_.begin(), cumulative_.end(), target);
  if (it == cumulative_.end()) {
    return sorted_.back().value;
  }
  return sorted_[static_cast<std::size_t>(it - cumulative_.begin())].value;
}

double weighted_quantile(std::span<const WeightedValue> samples, double q) {
  return WeightedEcdf({samples.begin(), samples.end()}).quantile(q);
}

std::vector<WeightedValue> project_particles(
    const ParticleCloudPrediction& prediction,
    const Eigen::VectorXd& direction) {
  if (direction.size() != prediction.dim()) {
    throw InvalidArgument("projection direction has wrong dimension");
  }
  if (std::abs(direction.norm() - 1.0) > 1e-9) {
    throw InvalidArgument("projection direction must be a unit vector");
  }
  const Eigen::VectorXd z = prediction.points() * direction;
  std::vector<WeightedValue> out(prediction.size());
  for (std::size_t j = 0; j < out.size(); ++j) {
    out[j] = {prediction.weights()[j], z[static_cast<Eigen::Index>(j)]};
  }
  return out;
}

MvGaussianPrediction moment_match_gaussian(
    const ParticleCloudPrediction& prediction) {
  const auto& pts = prediction.points();
  const Eigen::Map<const Eigen::VectorXd> w(prediction.weights().data(),
                                            pts.rows());
  const Eigen::VectorXd mean = pts.transpose() * w;
  const Eigen::MatrixXd centered = pts.rowwise() - mean.transpose();
  Eigen::MatrixXd cov = centered.transpose() * w.asDiagonal() * centered;
  cov = 0.5 * (cov + cov.transpose());
  return {mean, cov};
}

}  // namespace calcheck
