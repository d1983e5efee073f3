#include "calcheck/hyptest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "calcheck/error.hpp"

namespace calcheck {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void require_probability(double p, const char* what) {
  if (!(p > 0.0 && p < 1.0)) {
    throw InvalidArgument(std::string(what) + " must lie in (0, 1)");
  }
}

void require_trials(std::int64_t n) {
  if (n < 1) {
    throw InvalidArgument("number of trials must be >= 1");
  }
}

std::int64_t binom_mode(std::int64_t n, double p) {
  return std::min<std::int64_t>(
      n, static_cast<std::int64_t>(std::floor(static_cast<double>(n + 1) * p)));
}

// log sum_{k=0}^{c} pmf(k), for 0 <= c < mode (terms decrease away from c).
double log_sum_below(std::int64_t c, std::int64_t n, double p) {
  const long double odds = (1.0L - p) / p;
  long double term = 1.0L;
  long double sum = 1.0L;
  for (std::int64_t k = c; k > 0; --k) {
    term *= static_cast<long double>(k) / static_cast<long double>(n - k + 1) * odds;
    sum += term;
    if (term < sum * 1e-21L) {
      break;
    }
  }
  return binom_log_pmf(c, n, p) + static_cast<double>(std::log(sum));
}

// log sum_{k=c}^{n} pmf(k), for mode < c <= n.
double log_sum_above(std::int64_t c, std::int64_t n, double p) {
  const long double odds = p / (1.0L - p);
  long double term = 1.0L;
  long double sum = 1.0L;
  for (std::int64_t k = c; k < n; ++k) {
    term *= static_cast<long double>(n - k) / static_cast<long double>(k + 1) * odds;
    sum += term;
    if (term < sum * 1e-21L) {
      break;
    }
  }
  return binom_log_pmf(c, n, p) + static_cast<double>(std::log(sum));
}

double log1mexp(double log_x) {
  return log_x > -0.6931471805599453 ? std::log(-std::expm1(log_x))
                                     : std::log1p(-std::exp(log_x));
}

void require_alpha(double alpha) { require_probability(alpha, "alpha"); }

}  // namespace

std::string_view to_string(Sidedness sidedness) {
  return sidedness == Sidedness::two_sided ? "two" : "one";
}

Sidedness parse_sidedness(std::string_view name) {
  if (name == "two" || name == "two_sided") return Sidedness::two_sided;
  if (name == "one" || name == "one_sided") return Sidedness::one_sided;
  throw ConfigError("unknown sidedness '" + std::string(name) + "'");
}

std::string_view to_string(Decision decision) {
  return decision == Decision::accept ? "accept" : "reject";
}

void HypothesisSpec::validate() const {
  if (!(tolerance >= 0.0 && tolerance < 0.5)) {
    throw InvalidArgument("tolerance must lie in [0, 0.5)");
  }
}

nlohmann::ordered_json to_json(const TestReport& report) {
  nlohmann::ordered_json j;
  j["test"] = report.test;
  j["decision"] = to_string(report.decision);
  j["statistic"] = report.statistic;
  j["threshold"] = report.threshold;
  j["alpha"] = report.alpha;
  j["p_value"] = report.p_value;
  if (!report.per_level.empty()) {
    auto& levels = j["per_level"] = nlohmann::ordered_json::array();
    for (const auto& v : report.per_level) {
      levels.push_back({{"level", v.level},
                        {"count", v.count},
                        {"n", v.n},
                        {"p_value", v.p_value},
                        {"lower_bound", v.lower_bound},
                        {"upper_bound", v.upper_bound},
                        {"rejected", v.rejected}});
    }
  }
  if (!report.rejections.empty()) {
    j["rejections"] = report.rejections;
  }
  if (!report.band.empty()) {
    auto& band = j["band"] = nlohmann::ordered_json::array();
    for (const auto& b : report.band) {
      band.push_back(
          {{"level", b.level}, {"ecdf", b.ecdf}, {"lower", b.lower}, {"upper", b.upper}});
    }
  }
  j["config"] = report.config;
  return j;
}

double binom_log_pmf(std::int64_t k, std::int64_t n, double p) {
  if (k < 0 || k > n) {
    return kNegInf;
  }
  const double nd = static_cast<double>(n);
  const double kd = static_cast<double>(k);
  return std::lgamma(nd + 1.0) - std::lgamma(kd + 1.0) - std::lgamma(nd - kd + 1.0) +
         kd * std::log(p) + (nd - kd) * std::log1p(-p);
}

double binom_log_cdf(std::int64_t c, std::int64_t n, double p) {
  require_trials(n);
  require_probability(p, "success probability");
  if (c < 0) return kNegInf;
  if (c >= n) return 0.0;
  if (c < binom_mode(n, p)) {
    return log_sum_below(c, n, p);
  }
  return log1mexp(log_sum_above(c + 1, n, p));
}

double binom_log_sf(std::int64_t c, std::int64_t n, double p) {
  require_trials(n);
  require_probability(p, "success probability");
  if (c <= 0) return 0.0;
  if (c > n) return kNegInf;
  if (c > binom_mode(n, p)) {
    return log_sum_above(c, n, p);
  }
  return log1mexp(log_sum_below(c - 1, n, p));
}

double binom_cdf(std::int64_t c, std::int64_t n, double p) {
  return std::exp(binom_log_cdf(c, n, p));
}

double binom_sf(std::int64_t c, std::int64_t n, double p) {
  return std::exp(binom_log_sf(c, n, p));
}

std::int64_t binom_lower_quantile(std::int64_t n, double p, double a) {
  require_trials(n);
  require_probability(p, "success probability");
  require_probability(a, "quantile level");
  std::int64_t lo = 0;
  std::int64_t hi = n;
  while (lo < hi) {
    const std::int64_t mid = lo + (hi - lo) / 2;
    if (binom_cdf(mid, n, p) >= a) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return lo;
}

std::int64_t binom_upper_quantile(std::int64_t n, double p, double a) {
  require_trials(n);
  require_probability(p, "success probability");
  require_probability(a, "quantile level");
  std::int64_t lo = 0;
  std::int64_t hi = n;
  while (lo < hi) {
    const std::int64_t mid = lo + (hi - lo + 1) / 2;
    if (binom_sf(mid, n, p) >= a) {
      lo = mid;
    } else {
      hi = mid - 1;
    }
  }
  return lo;
}

double binom_p_value(std::int64_t count, std::int64_t n, double level) {
  if (count < 0 || count > n) {
    throw InvalidArgument("count must lie in [0, n]");
  }
  return binom_cdf(count, n, level);
}

LevelVerdict binom_test(std::int64_t count, std::int64_t n, double level,
                        const HypothesisSpec& spec, double alpha) {
  spec.validate();
  require_alpha(alpha);
  require_trials(n);
  if (count < 0 || count > n) {
    throw InvalidArgument("count must lie in [0, n]");
  }
  require_probability(level, "level");
  const double p_lo = level - spec.tolerance;
  const double p_hi = level + spec.tolerance;
  if (!(p_lo > 0.0) || (spec.sidedness == Sidedness::two_sided && !(p_hi < 1.0))) {
    throw InvalidArgument("level shifted by the tolerance leaves (0, 1)");
  }

  LevelVerdict v;
  v.level = level;
  v.count = count;
  v.n = n;
  if (spec.sidedness == Sidedness::two_sided) {
    v.lower_bound = binom_lower_quantile(n, p_lo, alpha / 2.0);
    v.upper_bound = binom_upper_quantile(n, p_hi, alpha / 2.0);
    const double tail = std::min(binom_cdf(count, n, p_lo), binom_sf(count, n, p_hi));
    v.p_value = std::min(1.0, 2.0 * tail);
  } else {
    v.lower_bound = binom_lower_quantile(n, p_lo, alpha);
    v.upper_bound = n;
    v.p_value = binom_cdf(count, n, p_lo);
  }
  v.rejected = v.p_value < alpha;
  return v;
}

TestReport bonferroni(std::span<const double> p_values, double alpha) {
  require_alpha(alpha);
  if (p_values.empty()) {
    throw InvalidArgument("bonferroni needs at least one p-value");
  }
  const double k = static_cast<double>(p_values.size());
  TestReport r;
  r.test = "bonferroni";
  r.alpha = alpha;
  r.threshold = alpha / k;
  r.statistic = *std::min_element(p_values.begin(), p_values.end());
  r.p_value = std::min(1.0, k * r.statistic);
  r.rejections.reserve(p_values.size());
  for (double p : p_values) {
    r.rejections.push_back(p < r.threshold);
  }
  r.decision = r.statistic < r.threshold ? Decision::reject : Decision::accept;
  r.config = {{"correction", "bonferroni"}, {"alpha", alpha}, {"k", p_values.size()}};
  return r;
}

TestReport holm(std::span<const double> p_values, double alpha) {
  require_alpha(alpha);
  if (p_values.empty()) {
    throw InvalidArgument("holm needs at least one p-value");
  }
  const std::size_t k = p_values.size();
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return p_values[a] < p_values[b];
  });

  TestReport r;
  r.test = "holm";
  r.alpha = alpha;
  r.threshold = alpha / static_cast<double>(k);
  r.statistic = p_values[order.front()];
  r.p_value = std::min(1.0, static_cast<double>(k) * r.statistic);
  r.rejections.assign(k, false);
  for (std::size_t i = 0; i < k; ++i) {
    const double p = p_values[order[i]];
    const double remaining = static_cast<double>(k - i);
    if (!(p < alpha / remaining)) {
      break;
    }
    r.rejections[order[i]] = true;
  }
  r.decision = r.rejections[order.front()] ? Decision::reject : Decision::accept;
  r.config = {{"correction", "holm"}, {"alpha", alpha}, {"k", k}};
  return r;
}

TestReport binom_coverage_test(const CoverageCurve& curve,
                               const HypothesisSpec& spec, double alpha,
                               Correction correction) {
  require_alpha(alpha);
  const std::size_t k = curve.levels().size();
  const double per_level_alpha = alpha / static_cast<double>(k);
  std::vector<LevelVerdict> verdicts;
  std::vector<double> p_values;
  verdicts.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    verdicts.push_back(binom_test(curve.counts()[i], curve.n(), curve.levels()[i],
                                  spec, per_level_alpha));
    p_values.push_back(verdicts.back().p_value);
  }
  TestReport r = correction == Correction::bonferroni ? bonferroni(p_values, alpha)
                                                      : holm(p_values, alpha);
  if (correction == Correction::holm) {
    for (std::size_t i = 0; i < k; ++i) {
      verdicts[i].rejected = r.rejections[i];
    }
  }
  r.test = std::string("binomial_") + r.test;
  r.per_level = std::move(verdicts);
  r.config["sidedness"] = to_string(spec.sidedness);
  r.config["tolerance"] = spec.tolerance;
  r.config["n"] = curve.n();
  r.config["levels"] = curve.levels().levels();
  return r;
}

double ks_statistic(const PitSample& sample, const HypothesisSpec& spec) {
  spec.validate();
  if (sample.size() == 0) {
    throw InvalidArgument("KS statistic of an empty sample");
  }
  if (spec.sidedness == Sidedness::one_sided && !sample.folded()) {
    throw InvalidArgument("the one-sided KS test needs a folded sample");
  }
  std::vector<double> v = sample.values();
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  double d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double below = static_cast<double>(i) / n;
    const double at = static_cast<double>(i + 1) / n;
    if (spec.sidedness == Sidedness::two_sided) {
      d = std::max({d, at - v[i], v[i] - below});
    } else {
      d = std::max(d, v[i] - below);
    }
  }
  return d;
}

double ks_critical(std::int64_t n, double alpha, Sidedness sidedness) {
  require_trials(n);
  require_alpha(alpha);
  const double numer = sidedness == Sidedness::two_sided ? std::log(2.0 / alpha)
                                                         : std::log(1.0 / alpha);
  return std::sqrt(numer / (2.0 * static_cast<double>(n)));
}

double ks_p_value(double statistic, std::int64_t n, Sidedness sidedness) {
  require_trials(n);
  if (!(statistic >= 0.0 && statistic <= 1.0)) {
    throw InvalidArgument("KS statistic must lie in [0, 1]");
  }
  const double bound =
      std::exp(-2.0 * static_cast<double>(n) * statistic * statistic);
  return sidedness == Sidedness::two_sided ? std::min(1.0, 2.0 * bound) : bound;
}

TestReport ks_test(const PitSample& sample, const HypothesisSpec& spec,
                   double alpha) {
  spec.validate();
  require_alpha(alpha);
  if (spec.sidedness == Sidedness::two_sided && spec.tolerance > 0.0) {
    throw ConfigError("a tolerance is only defined for the one-sided KS band");
  }
  const double d = ks_statistic(sample, spec);
  const auto n = static_cast<std::int64_t>(sample.size());
  const double c = ks_critical(n, alpha, spec.sidedness);

  TestReport r;
  r.test = spec.sidedness == Sidedness::two_sided ? "ks_two_sided" : "ks_one_sided";
  r.alpha = alpha;
  r.statistic = d;
  r.threshold = c + spec.tolerance;
  r.p_value = ks_p_value(std::max(0.0, d - spec.tolerance), n, spec.sidedness);
  r.decision = d > r.threshold ? Decision::reject : Decision::accept;

  std::vector<double> sorted = sample.values();
  std::sort(sorted.begin(), sorted.end());
  r.band.reserve(101);
  for (int j = 0; j <= 100; ++j) {
    const double level = j / 100.0;
    const double ecdf =
        static_cast<double>(std::upper_bound(sorted.begin(), sorted.end(), level) -
                            sorted.begin()) /
        static_cast<double>(n);
    const double lower = std::max(0.0, level - c - spec.tolerance);
    const double upper =
        spec.sidedness == Sidedness::two_sided ? std::min(1.0, level + c) : 1.0;
    r.band.push_back({level, ecdf, lower, upper});
  }
  r.config = {{"test", r.test},
              {"sidedness", to_string(spec.sidedness)},
              {"tolerance", spec.tolerance},
              {"alpha", alpha},
              {"n", n},
              {"folded", sample.folded()}};
  return r;
}

}  // namespace calcheck
