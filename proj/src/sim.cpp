#include "calcheck/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "calcheck/error.hpp"

namespace calcheck {

namespace {

constexpr double kDaysPerYear = 365.0;

// Linear-interpolated sample quantile of sorted values.
double sorted_quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

std::optional<double> median_of(std::vector<double> values) {
  if (values.empty()) {
    return std::nullopt;
  }
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  const double m =
      n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  if (!std::isfinite(m)) {
    return std::nullopt;
  }
  return m;
}

// idx[i] = ancestor of particle i, one uniform draw shared by all strata.
void systematic_resample(const std::vector<double>& w, std::mt19937_64& rng,
                         std::vector<std::size_t>& idx) {
  const std::size_t m = w.size();
  const double u0 = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  idx.resize(m);
  double cumulative = w[0];
  std::size_t j = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const double u = (u0 + static_cast<double>(i)) / static_cast<double>(m);
    while (u > cumulative && j + 1 < m) {
      ++j;
      cumulative += w[j];
    }
    idx[i] = j;
  }
}

}  // namespace

void WeatherSimConfig::validate() const {
  if (window < 3) {
    throw InvalidArgument("weather window must be >= 3 days");
  }
  if (n_days <= window) {
    throw InvalidArgument("n_days must exceed the window");
  }
  if (!(noise_sd > 0.0)) {
    throw InvalidArgument("noise_sd must be positive");
  }
  if (!(injected_sd_scale > 0.0)) {
    throw InvalidArgument("injected_sd_scale must be positive");
  }
  if (!(std::abs(noise_seasonality) < 1.0)) {
    throw InvalidArgument("noise_seasonality must lie in (-1, 1)");
  }
  if (!std::isfinite(injected_mean_bias) || !std::isfinite(baseline) ||
      !std::isfinite(seasonal_amplitude)) {
    throw InvalidArgument("weather parameters must be finite");
  }
}

std::vector<PredictionRecord> run_weather_sim(const WeatherSimConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal;

  std::vector<double> y(static_cast<std::size_t>(config.n_days));
  for (int t = 0; t < config.n_days; ++t) {
    const double phase = 2.0 * std::numbers::pi * t / kDaysPerYear;
    const double sd = config.noise_sd * (1.0 + config.noise_seasonality * std::cos(phase));
    y[static_cast<std::size_t>(t)] = config.baseline +
                                     config.seasonal_amplitude *
                                         std::sin(phase - std::numbers::pi / 2.0) +
                                     sd * normal(rng);
  }

  // Regressor s = 0..W-1 is fixed, so its moments are too.
  const int w = config.window;
  const double s_bar = (w - 1) / 2.0;
  double sxx = 0.0;
  for (int s = 0; s < w; ++s) {
    sxx += (s - s_bar) * (s - s_bar);
  }
  const double inflation = 1.0 + 1.0 / w + (w - s_bar) * (w - s_bar) / sxx;

  std::vector<PredictionRecord> records;
  records.reserve(static_cast<std::size_t>(config.n_days - w));
  for (int day = w; day < config.n_days; ++day) {
    double y_bar = 0.0;
    for (int s = 0; s < w; ++s) {
      y_bar += y[static_cast<std::size_t>(day - w + s)];
    }
    y_bar /= w;
    double sxy = 0.0;
    for (int s = 0; s < w; ++s) {
      sxy += (s - s_bar) * (y[static_cast<std::size_t>(day - w + s)] - y_bar);
    }
    const double slope = sxy / sxx;
    const double intercept = y_bar - slope * s_bar;
    double rss = 0.0;
    for (int s = 0; s < w; ++s) {
      const double r = y[static_cast<std::size_t>(day - w + s)] - intercept - slope * s;
      rss += r * r;
    }
    // Residuals at rounding level mean the window is a straight line.
    const double floor = w * std::pow(1e-12 * std::max(1.0, std::abs(y_bar)), 2);
    if (!(rss > floor)) {
      throw InvalidDistribution("degenerate regression window ending at day " +
                                std::to_string(day));
    }
    const double sigma = std::sqrt(rss / (w - 2) * inflation);
    const double mu = intercept + slope * w + config.injected_mean_bias * sigma;
    records.emplace_back(GaussianPrediction(mu, sigma * config.injected_sd_scale),
                         y[static_cast<std::size_t>(day)], day);
  }
  return records;
}

void RobotSimConfig::validate() const {
  if (n_particles < 2) {
    throw InvalidArgument("need at least two particles");
  }
  if (n_steps < 1) {
    throw InvalidArgument("need at least one step");
  }
  if (!(drift_multiplier >= 0.0)) {
    throw InvalidArgument("drift multiplier must be >= 0");
  }
  if (!(range_noise_sd > 0.0) || !(process_noise_sd > 0.0) || !(init_sd > 0.0)) {
    throw InvalidArgument("noise scales must be positive");
  }
  if (beacon_positions.size() < 3) {
    throw InvalidArgument("range-only localization needs >= 3 beacons");
  }
  const Eigen::Vector2d& a = beacon_positions[0];
  bool spread = false;
  for (std::size_t i = 1; i < beacon_positions.size() && !spread; ++i) {
    for (std::size_t j = i + 1; j < beacon_positions.size() && !spread; ++j) {
      const Eigen::Vector2d u = beacon_positions[i] - a;
      const Eigen::Vector2d v = beacon_positions[j] - a;
      spread = std::abs(u.x() * v.y() - u.y() * v.x()) > 1e-9;
    }
  }
  if (!spread) {
    throw InvalidArgument("beacons must not be collinear");
  }
}

std::vector<PredictionRecord> run_robot_sim(const RobotSimConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal;
  const auto m = static_cast<std::size_t>(config.n_particles);
  const auto n_beacons = config.beacon_positions.size();

  Eigen::MatrixXd particles(config.n_particles, 2);
  for (Eigen::Index i = 0; i < particles.rows(); ++i) {
    particles(i, 0) = config.start.x() + config.init_sd * normal(rng);
    particles(i, 1) = config.start.y() + config.init_sd * normal(rng);
  }
  std::vector<double> weights(m, 1.0 / static_cast<double>(m));
  Eigen::Vector2d truth = config.start;
  truth.x() += config.init_sd * normal(rng);
  truth.y() += config.init_sd * normal(rng);
  const Eigen::Vector2d drift = config.drift_multiplier * config.drift;

  std::vector<PredictionRecord> records;
  records.reserve(static_cast<std::size_t>(config.n_steps));
  std::vector<double> log_w(m);
  std::vector<double> ranges(n_beacons);
  std::vector<std::size_t> idx;
  for (int t = 1; t <= config.n_steps; ++t) {
    truth.x() += drift.x() + config.process_noise_sd * normal(rng);
    truth.y() += drift.y() + config.process_noise_sd * normal(rng);
    for (Eigen::Index i = 0; i < particles.rows(); ++i) {
      particles(i, 0) += config.process_noise_sd * normal(rng);
      particles(i, 1) += config.process_noise_sd * normal(rng);
    }
    records.emplace_back(ParticleCloudPrediction(weights, particles),
                         Eigen::VectorXd(truth), t);

    for (std::size_t b = 0; b < n_beacons; ++b) {
      ranges[b] = (config.beacon_positions[b] - truth).norm() +
                  config.range_noise_sd * normal(rng);
    }
    const double inv_var = 1.0 / (config.range_noise_sd * config.range_noise_sd);
    double max_log = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < m; ++i) {
      const Eigen::Vector2d p = particles.row(static_cast<Eigen::Index>(i)).transpose();
      double ll = 0.0;
      for (std::size_t b = 0; b < n_beacons; ++b) {
        const double r = (config.beacon_positions[b] - p).norm() - ranges[b];
        ll -= 0.5 * r * r * inv_var;
      }
      log_w[i] = std::log(weights[i]) + ll;
      max_log = std::max(max_log, log_w[i]);
    }
    if (!std::isfinite(max_log)) {
      throw ParticleDepletion(t);
    }
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      weights[i] = std::exp(log_w[i] - max_log);
      total += weights[i];
    }
    double sum_sq = 0.0;
    for (auto& wi : weights) {
      wi /= total;
      sum_sq += wi * wi;
    }
    if (1.0 / sum_sq < 0.5 * static_cast<double>(m)) {
      systematic_resample(weights, rng, idx);
      std::fill(weights.begin(), weights.end(), 1.0 / static_cast<double>(m));
      Eigen::MatrixXd resampled(particles.rows(), 2);
      for (std::size_t i = 0; i < m; ++i) {
        resampled.row(static_cast<Eigen::Index>(i)) =
            particles.row(static_cast<Eigen::Index>(idx[i]));
      }
      particles = std::move(resampled);
    }
  }
  return records;
}

std::uint64_t monitor_seed(std::uint64_t sim_seed) {
  // splitmix64 finalizer
  std::uint64_t z = sim_seed + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

DriftSweepReport drift_sweep(const RobotSimConfig& base,
                             std::span<const double> multipliers, int n_seeds,
                             const EValueConfig& monitor) {
  if (n_seeds < 1) {
    throw InvalidArgument("drift sweep needs at least one seed");
  }
  monitor.validate();
  DriftSweepReport report;
  report.monitor = monitor;
  for (double multiplier : multipliers) {
    DriftSweepRow row;
    row.multiplier = multiplier;
    row.n_seeds = n_seeds;
    std::vector<std::vector<double>> e_paths;
    for (int s = 0; s < n_seeds; ++s) {
      RobotSimConfig config = base;
      config.drift_multiplier = multiplier;
      config.seed = base.seed + static_cast<std::uint64_t>(s);
      const auto records = run_robot_sim(config);
      std::mt19937_64 rng(monitor_seed(config.seed));
      MartingaleState state;
      std::vector<double> path;
      path.reserve(records.size());
      for (const auto& r : records) {
        state = monitor_step_halfplane(
            state, std::get<ParticleCloudPrediction>(r.prediction()), r.outcome(),
            monitor, rng);
        path.push_back(state.e_value());
      }
      row.first_crossings.push_back(state.first_crossing);
      row.alarms += state.alarmed ? 1 : 0;
      e_paths.push_back(std::move(path));
    }

    std::vector<double> censored;
    std::vector<double> alarmed;
    for (const auto& fc : row.first_crossings) {
      censored.push_back(fc ? static_cast<double>(*fc)
                            : std::numeric_limits<double>::infinity());
      if (fc) {
        alarmed.push_back(static_cast<double>(*fc));
      }
    }
    row.median_first_crossing = median_of(censored);
    row.median_first_crossing_alarmed = median_of(alarmed);

    const std::size_t steps = e_paths.front().size();
    row.envelope.reserve(steps);
    std::vector<double> column(e_paths.size());
    for (std::size_t t = 0; t < steps; ++t) {
      for (std::size_t s = 0; s < e_paths.size(); ++s) {
        column[s] = e_paths[s][t];
      }
      std::sort(column.begin(), column.end());
      row.envelope.push_back({sorted_quantile(column, 0.05),
                              sorted_quantile(column, 0.5),
                              sorted_quantile(column, 0.95)});
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

nlohmann::ordered_json to_json(const DriftSweepReport& report) {
  nlohmann::ordered_json j;
  j["monitor"] = {{"level", report.monitor.level},
                  {"p_alt", report.monitor.p_alt},
                  {"alpha", report.monitor.alpha}};
  auto& rows = j["rows"] = nlohmann::ordered_json::array();
  for (const auto& row : report.rows) {
    nlohmann::ordered_json r;
    r["multiplier"] = row.multiplier;
    r["n_seeds"] = row.n_seeds;
    r["alarms"] = row.alarms;
    auto& fcs = r["first_crossings"] = nlohmann::ordered_json::array();
    for (const auto& fc : row.first_crossings) {
      fcs.push_back(fc ? nlohmann::ordered_json(*fc) : nlohmann::ordered_json());
    }
    r["median_first_crossing"] = row.median_first_crossing
                                     ? nlohmann::ordered_json(*row.median_first_crossing)
                                     : nlohmann::ordered_json();
    r["median_first_crossing_alarmed"] =
        row.median_first_crossing_alarmed
            ? nlohmann::ordered_json(*row.median_first_crossing_alarmed)
            : nlohmann::ordered_json();
    rows.push_back(std::move(r));
  }
  return j;
}

}  // namespace calcheck
