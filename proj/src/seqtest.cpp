#include "calcheck/seqtest.hpp"

#include <cmath>
#include <numeric>

#include "calcheck/error.hpp"
#include "calcheck/metric.hpp"

namespace calcheck {

void EValueConfig::validate() const {
  if (!(level > 0.0 && level < 1.0)) {
    throw InvalidArgument("e-value level must lie in (0, 1)");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw InvalidArgument("alpha must lie in (0, 1)");
  }
  if (!(p_alt > 0.0 && p_alt < level)) {
    throw InvalidArgument("p_alt must lie in (0, level)");
  }
}

double EValueConfig::log_threshold() const { return -std::log(alpha); }

double MartingaleState::e_value() const { return std::exp(log_e); }

double log_lr_evalue(int k, const EValueConfig& config) {
  config.validate();
  if (k != 0 && k != 1) {
    throw InvalidArgument("coverage indicator must be 0 or 1");
  }
  return k == 1 ? std::log(config.p_alt / config.level)
                : std::log1p(-config.p_alt) - std::log1p(-config.level);
}

double lr_evalue(int k, const EValueConfig& config) {
  config.validate();
  if (k != 0 && k != 1) {
    throw InvalidArgument("coverage indicator must be 0 or 1");
  }
  return k == 1 ? config.p_alt / config.level
                : (1.0 - config.p_alt) / (1.0 - config.level);
}

double average_evalues(std::span<const double> es) {
  if (es.empty()) {
    throw InvalidArgument("cannot average an empty list of e-values");
  }
  for (double e : es) {
    if (!(e >= 0.0)) {
      throw InvalidArgument("e-values must be nonnegative");
    }
  }
  return std::accumulate(es.begin(), es.end(), 0.0) / static_cast<double>(es.size());
}

MartingaleState monitor_step_indicator(const MartingaleState& state, int k,
                                       const EValueConfig& config) {
  MartingaleState next = state;
  next.log_e += log_lr_evalue(k, config);
  next.t += 1;
  if (!next.alarmed && next.log_e > config.log_threshold()) {
    next.alarmed = true;
    next.first_crossing = next.t;
  }
  return next;
}

MartingaleState monitor_step_gaussian(const MartingaleState& state,
                                      const GaussianPrediction& prediction,
                                      double y, const EValueConfig& config) {
  config.validate();
  if (!std::isfinite(y)) {
    throw InvalidArgument("observation must be finite");
  }
  const Interval interval = centered_interval(prediction, config.level);
  return monitor_step_indicator(state, interval.contains(y) ? 1 : 0, config);
}

MartingaleState monitor_step_halfplane(const MartingaleState& state,
                                       const ParticleCloudPrediction& prediction,
                                       const Eigen::VectorXd& y,
                                       const EValueConfig& config,
                                       std::mt19937_64& rng) {
  config.validate();
  if (y.size() != prediction.dim()) {
    throw InvalidArgument("observation dimension does not match particle cloud");
  }
  if (!y.allFinite()) {
    throw InvalidArgument("observation must be finite");
  }
  const Eigen::VectorXd d = random_direction(prediction.dim(), rng);
  const bool inside = projected_interval_contains(prediction, y, d, config.level);
  return monitor_step_indicator(state, inside ? 1 : 0, config);
}

}  // namespace calcheck
