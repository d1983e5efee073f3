#ifndef CALCHECK_RECIPE_HPP_
#define CALCHECK_RECIPE_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "calcheck/dist.hpp"
#include "calcheck/hyptest.hpp"
#include "calcheck/metric.hpp"
#include "calcheck/records.hpp"
#include "calcheck/seqtest.hpp"

/*
 * A calibration check is four slots filled independently: the prediction
 * model, the metric computed from (prediction, outcome) pairs, the hypothesis
 * (sidedness and tolerance), and the testing procedure. RecipeConfig names one
 * choice per slot and rejects incompatible combinations up front.
 */
namespace calcheck {

inline constexpr std::string_view kToolName = "calcheck";
inline constexpr std::string_view kToolVersion = "0.1.0";

enum class MetricKind { coverage, pit_ks, folded_ks, halfplane };
enum class TestingKind { binom_bonferroni, binom_holm, ks, evalue_monitor };

std::string_view to_string(MetricKind kind);
std::string_view to_string(TestingKind kind);
MetricKind parse_metric_kind(std::string_view name);
TestingKind parse_testing_kind(std::string_view name);

struct RecipeConfig {
  ModelKind model = ModelKind::gaussian;
  MetricKind metric = MetricKind::coverage;
  HypothesisSpec hypothesis;
  TestingKind testing = TestingKind::binom_bonferroni;
  double alpha = 0.05;
  LevelGrid levels = LevelGrid::standard();
  // Variance-bin wrap: the check runs per bin at alpha / bins.
  std::optional<int> bins;
  // Required for evalue_monitor; its alpha must equal the recipe's.
  std::optional<EValueConfig> evalue;
  std::uint64_t seed = 0;
  // Half-plane directions per outcome dimension.
  int probes_per_dim = 10;

  // Throws ConfigError on any inconsistency.
  void validate() const;

  nlohmann::ordered_json to_json() const;
  // Field names as in to_json; unknown keys are a ConfigError. Missing keys
  // keep their defaults.
  static RecipeConfig from_json(const nlohmann::json& j);
  // Applies the keys present in j on top of this config.
  void merge_json(const nlohmann::json& j);
};

// Rectangular table written as CSV with a header row.
struct CurveTable {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

std::string to_csv(const CurveTable& table);
// One comma-separated line, shortest round-trip formatting, newline-terminated.
std::string csv_row(std::span<const double> values);

struct RunReport {
  Decision decision = Decision::accept;
  bool complete = true;
  std::optional<std::string> error;
  TestReport report;
  std::vector<TestReport> bins;
  std::optional<MartingaleState> monitor;
  std::vector<CurveTable> curves;
  RecipeConfig config;
  std::string input_sha256;
  std::size_t n_records = 0;
};

nlohmann::ordered_json to_json(const RunReport& report);

std::string sha256_hex(std::string_view bytes);

// Incremental SHA-256.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(std::string_view bytes);
  // Finalizes; further updates are an error.
  std::string hex();

 private:
  struct Impl;
  Impl* impl_;
};

// Offline check. With bins set, records are binned by predicted uncertainty
// and each bin is checked at alpha / bins; any failing bin rejects.
RunReport run_check(const RecipeConfig& config,
                    std::span<const PredictionRecord> records);

// Per-record coverage indicator feeding a test martingale. Gaussian records
// use the centered interval, particle clouds a fresh random half-plane
// projection, other families their level sets.
class Monitor {
 public:
  Monitor(const EValueConfig& config, std::uint64_t seed);

  const MartingaleState& step(const PredictionRecord& record);
  const MartingaleState& state() const { return state_; }
  const EValueConfig& config() const { return config_; }

 private:
  EValueConfig config_;
  std::mt19937_64 rng_;
  MartingaleState state_;
};

struct MonitorRow {
  std::int64_t t;
  double e_value;
  double log_e;
  double threshold;
  bool alarmed;
};

/*
 * Streams records through a Monitor, calling on_row after each step. A data
 * error mid-stream ends the run with the last state and complete = false.
 */
RunReport run_monitor(const RecipeConfig& config, RecordReader& reader,
                      const std::function<void(const MonitorRow&)>& on_row);

}  // namespace calcheck

#endif  // CALCHECK_RECIPE_HPP_
