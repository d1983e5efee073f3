#ifndef CALCHECK_HYPTEST_HPP_
#define CALCHECK_HYPTEST_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "calcheck/metric.hpp"

/*
 * Offline calibration tests: exact Binomial tests per coverage level, family
 * corrections across levels, and Kolmogorov-Smirnov bands on (folded) PIT
 * samples. Pure functions, no state.
 */
namespace calcheck {

// one_sided only detects over-confidence: coverage too low.
enum class Sidedness { two_sided, one_sided };

std::string_view to_string(Sidedness sidedness);
Sidedness parse_sidedness(std::string_view name);

struct HypothesisSpec {
  Sidedness sidedness = Sidedness::two_sided;
  // Acceptable coverage deviation, in coverage units. Must lie in [0, 0.5).
  double tolerance = 0.0;

  void validate() const;
};

enum class Decision { accept, reject };

std::string_view to_string(Decision decision);

struct LevelVerdict {
  double level = 0.0;
  std::int64_t count = 0;
  std::int64_t n = 0;
  double p_value = 1.0;
  // Accepted counts are exactly [lower_bound, upper_bound].
  std::int64_t lower_bound = 0;
  std::int64_t upper_bound = 0;
  bool rejected = false;
};

// Acceptance band of a KS test at one level.
struct BandPoint {
  double level;
  double ecdf;
  double lower;
  double upper;
};

struct TestReport {
  std::string test;
  Decision decision = Decision::accept;
  double statistic = 0.0;
  double threshold = 0.0;
  double alpha = 0.0;
  double p_value = 1.0;
  std::vector<LevelVerdict> per_level;
  // Per input hypothesis, for corrections.
  std::vector<bool> rejections;
  std::vector<BandPoint> band;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();

  bool rejected() const { return decision == Decision::reject; }
};

nlohmann::ordered_json to_json(const TestReport& report);

// Binomial(n, p) tails. Terms are summed in long double away from the mode
// and anchored at an lgamma-evaluated pmf; the complement is taken only on
// the side where it is well conditioned.
double binom_log_pmf(std::int64_t k, std::int64_t n, double p);
double binom_cdf(std::int64_t c, std::int64_t n, double p);  // P(C <= c)
double binom_sf(std::int64_t c, std::int64_t n, double p);   // P(C >= c)
double binom_log_cdf(std::int64_t c, std::int64_t n, double p);
double binom_log_sf(std::int64_t c, std::int64_t n, double p);

// Smallest c with P(C <= c) >= a.
std::int64_t binom_lower_quantile(std::int64_t n, double p, double a);
// Largest c with P(C >= c) >= a.
std::int64_t binom_upper_quantile(std::int64_t n, double p, double a);

// P(C <= count) for C ~ Binomial(n, level).
double binom_p_value(std::int64_t count, std::int64_t n, double level);

/*
 * Exact test of one coverage count at one level.
 *
 * two_sided: accept iff lower_q(lambda - eps, alpha / 2) <= count <=
 *   upper_q(lambda + eps, alpha / 2); p = min(1, 2 min(P(C <= c | lambda - eps),
 *   P(C >= c | lambda + eps))).
 * one_sided: accept iff count >= lower_q(lambda - eps, alpha);
 *   p = P(C <= c | lambda - eps).
 *
 * In both cases rejected == (p_value < alpha).
 */
LevelVerdict binom_test(std::int64_t count, std::int64_t n, double level,
                        const HypothesisSpec& spec, double alpha);

TestReport bonferroni(std::span<const double> p_values, double alpha);

// Step-down: reject H_(i) while p_(i) < alpha / (K - i + 1).
TestReport holm(std::span<const double> p_values, double alpha);

enum class Correction { bonferroni, holm };

// Per-level tests at alpha / K followed by the correction across levels.
TestReport binom_coverage_test(const CoverageCurve& curve,
                               const HypothesisSpec& spec, double alpha,
                               Correction correction);

/*
 * Sup distance between the sample ECDF and the diagonal, exact over the jump
 * points. Two-sided: max_i max(i/N - v_(i), v_(i) - (i-1)/N). One-sided
 * (folded samples only): sup_l (l - F(l)) = max(0, max_i v_(i) - (i-1)/N).
 */
double ks_statistic(const PitSample& sample, const HypothesisSpec& spec);

// sqrt(ln(2/alpha) / 2n) two-sided, sqrt(ln(1/alpha) / 2n) one-sided.
double ks_critical(std::int64_t n, double alpha, Sidedness sidedness);

// Inverse of ks_critical in alpha: min(1, 2 exp(-2 n D^2)) or exp(-2 n D^2).
double ks_p_value(double statistic, std::int64_t n, Sidedness sidedness);

/*
 * Two-sided: reject iff D > c. One-sided: reject iff D+ > c+ + tolerance,
 * i.e. the diagonal band translated down by the tolerance. The band is
 * reported on 101 evenly spaced levels. Two-sided with tolerance is refused.
 */
TestReport ks_test(const PitSample& sample, const HypothesisSpec& spec,
                   double alpha);

}  // namespace calcheck

#endif  // CALCHECK_HYPTEST_HPP_
