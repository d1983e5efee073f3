#ifndef CALCHECK_SIM_HPP_
#define CALCHECK_SIM_HPP_

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"

#include "calcheck/dist.hpp"
#include "calcheck/seqtest.hpp"

namespace calcheck {

/*
 * Daily temperature-like series: baseline + amplitude * sin(2 pi t / 365 -
 * pi / 2) plus Gaussian noise whose sd varies seasonally by the factor
 * 1 + noise_seasonality * cos(2 pi t / 365).
 *
 * The forecaster fits OLS of y on (1, s) over the trailing window and predicts
 * one step ahead with the OLS predictive sd. injected_mean_bias shifts the mean
 * by that many predicted sds; injected_sd_scale multiplies the sd.
 */
struct WeatherSimConfig {
  int window = 30;
  int n_days = 395;
  double baseline = 16.9;
  double seasonal_amplitude = 8.0;
  double noise_sd = 3.0;
  double noise_seasonality = 0.2;
  double injected_mean_bias = 0.0;
  double injected_sd_scale = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// n_days - window gaussian records, time_index = day.
std::vector<PredictionRecord> run_weather_sim(const WeatherSimConfig& config);

/*
 * 2-D random walk with a constant drift the filter does not model, observed
 * through one noisy range per beacon per step. Truth and particles start from
 * the same N(start, init_sd^2 I) prior.
 */
struct RobotSimConfig {
  int n_particles = 500;
  int n_steps = 500;
  double drift_multiplier = 1.0;
  Eigen::Vector2d drift{0.02, 0.01};
  std::vector<Eigen::Vector2d> beacon_positions{
      {0.0, 0.0}, {10.0, 0.0}, {0.0, 10.0}, {10.0, 10.0}};
  double range_noise_sd = 0.05;
  double process_noise_sd = 0.05;
  Eigen::Vector2d start{5.0, 5.0};
  double init_sd = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

/*
 * One record per step: the propagated particle cloud with the weights carried
 * from the previous update (before this step's measurement), paired with the
 * true position. Resampling is systematic, triggered when ESS < M / 2.
 */
std::vector<PredictionRecord> run_robot_sim(const RobotSimConfig& config);

struct DriftSweepRow {
  double multiplier = 0.0;
  int n_seeds = 0;
  int alarms = 0;
  std::vector<std::optional<std::int64_t>> first_crossings;
  // Median over all seeds, non-alarming seeds counting as +infinity; empty
  // when that median is infinite.
  std::optional<double> median_first_crossing;
  // Median over alarming seeds only.
  std::optional<double> median_first_crossing_alarmed;
  // Per step, the 5%, 50% and 95% quantiles of E_t across seeds.
  std::vector<std::array<double, 3>> envelope;
};

struct DriftSweepReport {
  EValueConfig monitor;
  std::vector<DriftSweepRow> rows;
};

/*
 * Seeds base.seed + s, s = 0..n_seeds-1, shared across multipliers. The
 * half-plane monitor draws its directions from a stream separate from the
 * simulation's.
 */
DriftSweepReport drift_sweep(const RobotSimConfig& base,
                             std::span<const double> multipliers, int n_seeds,
                             const EValueConfig& monitor);

// Seed of the monitor's direction stream for a simulation seed.
std::uint64_t monitor_seed(std::uint64_t sim_seed);

nlohmann::ordered_json to_json(const DriftSweepReport& report);

}  // namespace calcheck

#endif  // CALCHECK_SIM_HPP_
