#include "calcheck/metric.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>
#include <system_error>

#include "calcheck/error.hpp"

namespace calcheck {

namespace {

bool is_scalar_cdf_family(ModelKind kind) {
  return kind == ModelKind::gaussian || kind == ModelKind::parametric;
}

// Families that may be mixed in one batch map to the same class.
ModelKind batch_class(ModelKind kind) {
  return is_scalar_cdf_family(kind) ? ModelKind::gaussian : kind;
}

ModelKind common_family(std::span<const PredictionRecord> records) {
  if (records.empty()) {
    throw InvalidArgument("empty record list");
  }
  const ModelKind first = batch_class(model_kind(records.front().prediction()));
  const auto d = records.front().outcome().size();
  for (const auto& r : records) {
    if (batch_class(model_kind(r.prediction())) != first) {
      throw InvalidArgument("records mix incompatible prediction families");
    }
    if (r.outcome().size() != d) {
      throw InvalidArgument("records mix outcome dimensions");
    }
  }
  return first;
}

double scalar_pit(const PredictionRecord& record) {
  const double y = record.outcome()[0];
  const auto& p = record.prediction();
  if (const auto* g = std::get_if<GaussianPrediction>(&p)) {
    return g->cdf(y);
  }
  const double u = std::get<ParametricPrediction>(p).cdf(y);
  if (!(u >= 0.0 && u <= 1.0)) {
    throw InvalidDistribution("parametric cdf returned a value outside [0, 1]");
  }
  return u;
}

}  // namespace

LevelGrid::LevelGrid(std::vector<double> levels) : levels_(std::move(levels)) {
  if (levels_.empty()) {
    throw InvalidArgument("level grid must not be empty");
  }
  for (std::size_t k = 0; k < levels_.size(); ++k) {
    if (!(levels_[k] > 0.0 && levels_[k] < 1.0)) {
      throw InvalidArgument("grid levels must lie in (0, 1)");
    }
    if (k > 0 && !(levels_[k] > levels_[k - 1])) {
      throw InvalidArgument("grid levels must be strictly increasing");
    }
  }
}

LevelGrid LevelGrid::standard() { return midpoints(10); }

LevelGrid LevelGrid::midpoints(std::size_t k) {
  if (k == 0) {
    throw InvalidArgument("grid needs at least one level");
  }
  std::vector<double> levels(k);
  for (std::size_t j = 0; j < k; ++j) {
    levels[j] = (2.0 * static_cast<double>(j) + 1.0) / (2.0 * static_cast<double>(k));
  }
  return LevelGrid(std::move(levels));
}

LevelGrid LevelGrid::parse(std::string_view comma_list) {
  std::vector<double> levels;
  while (!comma_list.empty()) {
    const auto comma = comma_list.find(',');
    auto token = comma_list.substr(0, comma);
    while (!token.empty() && token.front() == ' ') token.remove_prefix(1);
    while (!token.empty() && token.back() == ' ') token.remove_suffix(1);
    double value = 0.0;
    const auto [end, ec] =
        std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc() || end != token.data() + token.size() || token.empty()) {
      throw InvalidArgument("cannot parse level '" + std::string(token) + "'");
    }
    levels.push_back(value);
    if (comma == std::string_view::npos) {
      break;
    }
    comma_list.remove_prefix(comma + 1);
  }
  return LevelGrid(std::move(levels));
}

PitSample::PitSample(std::vector<double> values, bool folded)
    : values_(std::move(values)), folded_(folded) {
  for (double v : values_) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw InvalidArgument("PIT values must lie in [0, 1]");
    }
  }
}

CoverageCurve::CoverageCurve(LevelGrid levels, std::vector<std::int64_t> counts,
                             std::int64_t n)
    : levels_(std::move(levels)), counts_(std::move(counts)), n_(n) {
  if (counts_.size() != levels_.size()) {
    throw InvalidArgument("one count per level required");
  }
  for (std::size_t k = 0; k < counts_.size(); ++k) {
    if (counts_[k] < 0 || counts_[k] > n_) {
      throw InvalidArgument("coverage count outside [0, n]");
    }
    if (k > 0 && counts_[k] < counts_[k - 1]) {
      throw InvalidArgument("coverage counts must be non-decreasing in the level");
    }
  }
}

double CoverageCurve::fraction(std::size_t k) const {
  return static_cast<double>(counts_.at(k)) / static_cast<double>(n_);
}

bool level_set_contains(const PredictionRecord& record, double level) {
  const auto& p = record.prediction();
  switch (model_kind(p)) {
    case ModelKind::gaussian:
    case ModelKind::parametric: {
      const double v = std::abs(2.0 * scalar_pit(record) - 1.0);
      return v <= level;
    }
    case ModelKind::mv_gaussian:
      return ellipsoid_contains(std::get<MvGaussianPrediction>(p),
                                record.outcome(), level);
    case ModelKind::set_provider:
      return std::get<PredictionSetProvider>(p).contains(level, record.outcome());
    case ModelKind::particles:
      break;
  }
  throw UnsupportedMetric(
      "particle clouds have no level sets; use the half-plane metric");
}

CoverageCurve coverage_counts(std::span<const PredictionRecord> records,
                              const LevelGrid& grid) {
  const ModelKind family = common_family(records);
  std::vector<std::int64_t> counts(grid.size(), 0);

  if (is_scalar_cdf_family(family)) {
    const PitSample folded = fold(pit(records));
    for (std::size_t k = 0; k < grid.size(); ++k) {
      counts[k] = std::count_if(folded.values().begin(), folded.values().end(),
                                [&](double v) { return v <= grid[k]; });
    }
  } else {
    for (const auto& r : records) {
      for (std::size_t k = 0; k < grid.size(); ++k) {
        counts[k] += level_set_contains(r, grid[k]) ? 1 : 0;
      }
    }
  }
  return {grid, std::move(counts), static_cast<std::int64_t>(records.size())};
}

PitSample pit(std::span<const PredictionRecord> records) {
  const ModelKind family = common_family(records);
  std::vector<double> values;
  values.reserve(records.size());
  if (is_scalar_cdf_family(family)) {
    for (const auto& r : records) {
      values.push_back(scalar_pit(r));
    }
  } else if (family == ModelKind::mv_gaussian) {
    for (const auto& r : records) {
      const auto& g = std::get<MvGaussianPrediction>(r.prediction());
      values.push_back(chi_squared_cdf(g.mahalanobis_sq(r.outcome()),
                                       static_cast<int>(g.dim())));
    }
  } else {
    throw UnsupportedMetric("PIT is undefined for " +
                            std::string(to_string(family)) + " predictions");
  }
  return PitSample(std::move(values), false);
}

PitSample fold(const PitSample& sample) {
  if (sample.folded()) {
    throw InvalidArgument("sample is already folded");
  }
  std::vector<double> v(sample.values().size());
  std::transform(sample.values().begin(), sample.values().end(), v.begin(),
                 [](double u) { return std::abs(2.0 * u - 1.0); });
  return PitSample(std::move(v), true);
}

double ecdf_eval(const PitSample& sample, double t) {
  if (sample.size() == 0) {
    throw InvalidArgument("ECDF of an empty sample");
  }
  const auto below = std::count_if(sample.values().begin(), sample.values().end(),
                                   [t](double v) { return v <= t; });
  return static_cast<double>(below) / static_cast<double>(sample.size());
}

std::vector<std::size_t> VarianceBins::members(std::size_t bin) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] == bin) {
      out.push_back(i);
    }
  }
  return out;
}

double uncertainty_scalar(const PredictiveDistribution& prediction) {
  if (const auto* g = std::get_if<GaussianPrediction>(&prediction)) {
    return g->sigma();
  }
  if (const auto* m = std::get_if<MvGaussianPrediction>(&prediction)) {
    return m->log_det();
  }
  throw UnsupportedMetric("variance binning needs gaussian or mv_gaussian predictions");
}

VarianceBins variance_bin(std::span<const PredictionRecord> records,
                          std::size_t k_bins) {
  const std::size_t n = records.size();
  if (k_bins < 1 || k_bins > n) {
    throw InvalidArgument("need 1 <= k_bins <= number of records");
  }
  std::vector<double> u(n);
  for (std::size_t i = 0; i < n; ++i) {
    u[i] = uncertainty_scalar(records[i].prediction());
  }
  // Stable sort by (uncertainty, record index).
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return u[a] < u[b]; });

  VarianceBins bins;
  bins.assignments.assign(n, 0);
  bins.bin_edges.push_back(u[order.front()]);
  for (std::size_t j = 0; j < k_bins; ++j) {
    const std::size_t begin = j * n / k_bins;
    const std::size_t end = (j + 1) * n / k_bins;
    for (std::size_t r = begin; r < end; ++r) {
      bins.assignments[order[r]] = j;
    }
    bins.bin_edges.push_back(u[order[end - 1]]);
  }
  return bins;
}

Eigen::VectorXd random_direction(Eigen::Index dim, std::mt19937_64& rng) {
  if (dim < 1) {
    throw InvalidArgument("direction dimension must be >= 1");
  }
  Eigen::VectorXd d(dim);
  if (dim == 1) {
    d[0] = 1.0;
  } else if (dim == 2) {
    const double theta =
        std::uniform_real_distribution<double>(0.0, std::numbers::pi)(rng);
    d << std::cos(theta), std::sin(theta);
  } else {
    std::normal_distribution<double> normal;
    do {
      for (Eigen::Index i = 0; i < dim; ++i) {
        d[i] = normal(rng);
      }
    } while (d.norm() == 0.0);
    d.normalize();
  }
  return d;
}

std::vector<Eigen::VectorXd> sample_directions(Eigen::Index dim,
                                               std::size_t count,
                                               std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Eigen::VectorXd> out;
  out.reserve(count);
  for (std::size_t l = 0; l < count; ++l) {
    out.push_back(random_direction(dim, rng));
  }
  return out;
}

std::vector<HalfPlaneProbe> sample_probes(Eigen::Index dim, std::size_t count,
                                          const LevelGrid& grid,
                                          std::uint64_t seed,
                                          const ParticleCloudPrediction& reference) {
  if (count < 1) {
    throw InvalidArgument("probe count must be >= 1");
  }
  if (reference.dim() != dim) {
    throw InvalidArgument("reference cloud dimension does not match");
  }
  const auto directions = sample_directions(dim, count, seed);
  std::vector<HalfPlaneProbe> probes;
  probes.reserve(count);
  for (std::size_t l = 0; l < count; ++l) {
    const double level = grid[l % grid.size()];
    const auto projected = project_particles(reference, directions[l]);
    const double b = weighted_quantile(projected, 1.0 - level);
    double above = 0.0;
    for (const auto& s : projected) {
      above += s.value > b ? s.weight : 0.0;
    }
    probes.push_back({directions[l], b, level, above});
  }
  return probes;
}

double halfplane_delta(const HalfPlaneProbe& probe,
                       const ParticleCloudPrediction& prediction,
                       const Eigen::VectorXd& y) {
  if (y.size() != prediction.dim() || probe.direction.size() != prediction.dim()) {
    throw InvalidArgument("half-plane probe dimension mismatch");
  }
  const Eigen::VectorXd z = prediction.points() * probe.direction;
  double predicted = 0.0;
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    if (z[j] > probe.threshold) {
      predicted += prediction.weights()[static_cast<std::size_t>(j)];
    }
  }
  const double observed = y.dot(probe.direction) > probe.threshold ? 1.0 : 0.0;
  return predicted - observed;
}

bool projected_interval_contains(const ParticleCloudPrediction& prediction,
                                 const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& direction,
                                 double level) {
  if (!(level > 0.0 && level < 1.0)) {
    throw InvalidArgument("level must lie in (0, 1)");
  }
  if (y.size() != prediction.dim()) {
    throw InvalidArgument("outcome dimension does not match particle cloud");
  }
  const WeightedEcdf ecdf(project_particles(prediction, direction));
  const double z = y.dot(direction);
  return ecdf.quantile(0.5 * (1.0 - level)) <= z &&
         z <= ecdf.quantile(0.5 * (1.0 + level));
}

std::vector<CoverageCurve> halfplane_coverage(
    std::span<const PredictionRecord> records,
    std::span<const Eigen::VectorXd> directions, const LevelGrid& grid) {
  if (common_family(records) != ModelKind::particles) {
    throw UnsupportedMetric("half-plane coverage needs particle predictions");
  }
  std::vector<std::vector<std::int64_t>> counts(
      directions.size(), std::vector<std::int64_t>(grid.size(), 0));
  for (const auto& r : records) {
    const auto& cloud = std::get<ParticleCloudPrediction>(r.prediction());
    for (std::size_t l = 0; l < directions.size(); ++l) {
      const WeightedEcdf ecdf(project_particles(cloud, directions[l]));
      const double z = r.outcome().dot(directions[l]);
      for (std::size_t k = 0; k < grid.size(); ++k) {
        const bool inside = ecdf.quantile(0.5 * (1.0 - grid[k])) <= z &&
                            z <= ecdf.quantile(0.5 * (1.0 + grid[k]));
        counts[l][k] += inside ? 1 : 0;
      }
    }
  }
  std::vector<CoverageCurve> curves;
  curves.reserve(directions.size());
  for (auto& c : counts) {
    curves.emplace_back(grid, std::move(c),
                        static_cast<std::int64_t>(records.size()));
  }
  return curves;
}

}  // namespace calcheck
