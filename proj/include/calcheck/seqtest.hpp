#ifndef CALCHECK_SEQTEST_HPP_
#define CALCHECK_SEQTEST_HPP_

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <random>
#include <span>

#include "calcheck/dist.hpp"

namespace calcheck {

// Likelihood-ratio e-value of a Bernoulli(p_alt) alternative against the
// nominal coverage level. Rejection threshold is 1 / alpha.
struct EValueConfig {
  double level = 0.9;
  double p_alt = 0.8;
  double alpha = 0.05;

  // Throws InvalidArgument unless level, alpha in (0, 1) and 0 < p_alt < level.
  void validate() const;
  double log_threshold() const;
};

struct MartingaleState {
  double log_e = 0.0;
  std::int64_t t = 0;
  bool alarmed = false;
  std::optional<std::int64_t> first_crossing;

  double e_value() const;
};

// (p_alt / level)^k ((1 - p_alt) / (1 - level))^(1 - k)
double lr_evalue(int k, const EValueConfig& config);
double log_lr_evalue(int k, const EValueConfig& config);

double average_evalues(std::span<const double> es);

// Multiplies in the e-value for coverage indicator k. Alarms once, at the
// first step with E_t > 1 / alpha; later steps keep updating log_e.
MartingaleState monitor_step_indicator(const MartingaleState& state, int k,
                                       const EValueConfig& config);

MartingaleState monitor_step_gaussian(const MartingaleState& state,
                                      const GaussianPrediction& prediction,
                                      double y, const EValueConfig& config);

// Draws a fresh direction from rng, then tests y against the weighted-quantile
// interval of the projected cloud.
MartingaleState monitor_step_halfplane(const MartingaleState& state,
                                       const ParticleCloudPrediction& prediction,
                                       const Eigen::VectorXd& y,
                                       const EValueConfig& config,
                                       std::mt19937_64& rng);

}  // namespace calcheck

#endif  // CALCHECK_SEQTEST_HPP_
