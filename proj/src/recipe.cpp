#include "calcheck/recipe.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <limits>
#include <string>

#include "calcheck/error.hpp"

namespace calcheck {

namespace {

using OrderedJson = nlohmann::ordered_json;

struct InnerResult {
  TestReport report;
  std::vector<CurveTable> curves;
  std::optional<MartingaleState> monitor;
};

bool is_binomial(TestingKind t) {
  return t == TestingKind::binom_bonferroni || t == TestingKind::binom_holm;
}

Correction correction_of(TestingKind t) {
  return t == TestingKind::binom_holm ? Correction::holm : Correction::bonferroni;
}

std::string format_double(double x) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return ec == std::errc() ? std::string(buf, end) : std::string("nan");
}

OrderedJson state_json(const MartingaleState& s) {
  OrderedJson j;
  j["t"] = s.t;
  j["log_e"] = s.log_e;
  j["e_value"] = s.e_value();
  j["alarmed"] = s.alarmed;
  j["first_crossing"] = s.first_crossing ? OrderedJson(*s.first_crossing) : OrderedJson();
  return j;
}

TestReport monitor_report(const MartingaleState& state, double sup_log_e,
                          const EValueConfig& ev) {
  TestReport r;
  r.test = "evalue_monitor";
  r.alpha = ev.alpha;
  r.statistic = std::exp(sup_log_e);
  r.threshold = 1.0 / ev.alpha;
  r.p_value = std::min(1.0, std::exp(-sup_log_e));
  r.decision = state.alarmed ? Decision::reject : Decision::accept;
  r.config = {{"level", ev.level}, {"p_alt", ev.p_alt}, {"alpha", ev.alpha}};
  return r;
}

InnerResult replay_monitor(const RecipeConfig& config,
                           std::span<const PredictionRecord> records) {
  Monitor monitor(*config.evalue, config.seed);
  CurveTable trace{"e_trace", {"t", "e_value", "log_e", "threshold", "alarmed"}, {}};
  double sup_log_e = 0.0;
  for (const auto& r : records) {
    const auto& s = monitor.step(r);
    sup_log_e = std::max(sup_log_e, s.log_e);
    trace.rows.push_back({static_cast<double>(s.t), s.e_value(), s.log_e,
                          1.0 / config.evalue->alpha, s.alarmed ? 1.0 : 0.0});
  }
  return {monitor_report(monitor.state(), sup_log_e, *config.evalue),
          {std::move(trace)},
          monitor.state()};
}

InnerResult coverage_check(const RecipeConfig& config,
                           std::span<const PredictionRecord> records, double alpha) {
  const CoverageCurve curve = coverage_counts(records, config.levels);
  TestReport report =
      binom_coverage_test(curve, config.hypothesis, alpha, correction_of(config.testing));
  CurveTable table{"coverage", {"level", "coverage", "lower", "upper", "count"}, {}};
  const double n = static_cast<double>(curve.n());
  for (std::size_t k = 0; k < curve.levels().size(); ++k) {
    const auto& v = report.per_level[k];
    table.rows.push_back({v.level, curve.fraction(k), v.lower_bound / n,
                          v.upper_bound / n, static_cast<double>(v.count)});
  }
  return {std::move(report), {std::move(table)}, std::nullopt};
}

InnerResult halfplane_check(const RecipeConfig& config,
                            std::span<const PredictionRecord> records, double alpha) {
  const Eigen::Index dim = records.front().outcome().size();
  const auto n_dirs = static_cast<std::size_t>(config.probes_per_dim * dim);
  const auto directions = sample_directions(dim, n_dirs, config.seed);
  const auto curves = halfplane_coverage(records, directions, config.levels);
  const std::size_t k = config.levels.size();
  const double per_test_alpha = alpha / static_cast<double>(n_dirs * k);

  std::vector<LevelVerdict> verdicts;
  std::vector<double> p_values;
  for (const auto& curve : curves) {
    for (std::size_t i = 0; i < k; ++i) {
      verdicts.push_back(binom_test(curve.counts()[i], curve.n(), config.levels[i],
                                    config.hypothesis, per_test_alpha));
      p_values.push_back(verdicts.back().p_value);
    }
  }
  TestReport report = config.testing == TestingKind::binom_holm
                          ? holm(p_values, alpha)
                          : bonferroni(p_values, alpha);
  if (config.testing == TestingKind::binom_holm) {
    for (std::size_t i = 0; i < verdicts.size(); ++i) {
      verdicts[i].rejected = report.rejections[i];
    }
  }
  report.test = "halfplane_" + report.test;
  report.per_level = std::move(verdicts);
  report.config["sidedness"] = to_string(config.hypothesis.sidedness);
  report.config["tolerance"] = config.hypothesis.tolerance;
  report.config["n"] = records.size();
  report.config["directions"] = n_dirs;
  report.config["levels"] = config.levels.levels();

  CurveTable table{"halfplane_coverage", {"level", "mean", "min", "max"}, {}};
  for (std::size_t i = 0; i < k; ++i) {
    double sum = 0.0;
    double lo = 1.0;
    double hi = 0.0;
    for (const auto& c : curves) {
      sum += c.fraction(i);
      lo = std::min(lo, c.fraction(i));
      hi = std::max(hi, c.fraction(i));
    }
    table.rows.push_back({config.levels[i], sum / static_cast<double>(curves.size()), lo, hi});
  }
  return {std::move(report), {std::move(table)}, std::nullopt};
}

InnerResult ks_check(const RecipeConfig& config,
                     std::span<const PredictionRecord> records, double alpha) {
  PitSample sample = pit(records);
  if (config.metric == MetricKind::folded_ks) {
    sample = fold(sample);
  }
  TestReport report = ks_test(sample, config.hypothesis, alpha);
  CurveTable table{"ecdf_band", {"level", "ecdf", "lower", "upper"}, {}};
  for (const auto& b : report.band) {
    table.rows.push_back({b.level, b.ecdf, b.lower, b.upper});
  }
  return {std::move(report), {std::move(table)}, std::nullopt};
}

InnerResult run_inner(const RecipeConfig& config,
                      std::span<const PredictionRecord> records, double alpha) {
  if (config.testing == TestingKind::evalue_monitor) {
    return replay_monitor(config, records);
  }
  switch (config.metric) {
    case MetricKind::coverage:
      return coverage_check(config, records, alpha);
    case MetricKind::halfplane:
      return halfplane_check(config, records, alpha);
    case MetricKind::pit_ks:
    case MetricKind::folded_ks:
      return ks_check(config, records, alpha);
  }
  throw ConfigError("unknown metric");
}

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view name, const std::array<Enum, N>& values,
                const char* what) {
  for (Enum e : values) {
    if (to_string(e) == name) {
      return e;
    }
  }
  throw ConfigError(std::string("unknown ") + what + " '" + std::string(name) + "'");
}

}  // namespace

std::string_view to_string(MetricKind kind) {
  switch (kind) {
    case MetricKind::coverage: return "coverage";
    case MetricKind::pit_ks: return "pit_ks";
    case MetricKind::folded_ks: return "folded_ks";
    case MetricKind::halfplane: return "halfplane";
  }
  return "unknown";
}

std::string_view to_string(TestingKind kind) {
  switch (kind) {
    case TestingKind::binom_bonferroni: return "binom_bonferroni";
    case TestingKind::binom_holm: return "binom_holm";
    case TestingKind::ks: return "ks";
    case TestingKind::evalue_monitor: return "evalue_monitor";
  }
  return "unknown";
}

MetricKind parse_metric_kind(std::string_view name) {
  return parse_enum(name,
                    std::array{MetricKind::coverage, MetricKind::pit_ks,
                               MetricKind::folded_ks, MetricKind::halfplane},
                    "metric");
}

TestingKind parse_testing_kind(std::string_view name) {
  return parse_enum(name,
                    std::array{TestingKind::binom_bonferroni, TestingKind::binom_holm,
                               TestingKind::ks, TestingKind::evalue_monitor},
                    "testing procedure");
}

void RecipeConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ConfigError("alpha must lie in (0, 1)");
  }
  const double tol = hypothesis.tolerance;
  if (!(tol >= 0.0 && tol < 0.5)) {
    throw ConfigError("tolerance must lie in [0, 0.5)");
  }
  const std::string model_name(to_string(model));
  switch (metric) {
    case MetricKind::coverage:
      if (model == ModelKind::particles) {
        throw ConfigError("particle clouds have no level sets; use the halfplane metric");
      }
      break;
    case MetricKind::pit_ks:
    case MetricKind::folded_ks:
      if (model == ModelKind::particles || model == ModelKind::set_provider) {
        throw ConfigError("the PIT is undefined for " + model_name + " predictions");
      }
      break;
    case MetricKind::halfplane:
      if (model != ModelKind::particles) {
        throw ConfigError("the halfplane metric needs particle predictions");
      }
      break;
  }
  const bool pit_metric = metric == MetricKind::pit_ks || metric == MetricKind::folded_ks;
  if (testing == TestingKind::ks && !pit_metric) {
    throw ConfigError("the ks test needs the pit_ks or folded_ks metric");
  }
  if (testing != TestingKind::ks && pit_metric) {
    throw ConfigError("PIT metrics are tested with ks");
  }
  if (testing == TestingKind::ks) {
    if (hypothesis.sidedness == Sidedness::two_sided && tol > 0.0) {
      throw ConfigError("a tolerance is only defined for the one-sided KS band");
    }
    if (hypothesis.sidedness == Sidedness::one_sided && metric == MetricKind::pit_ks) {
      throw ConfigError("the one-sided KS test needs the folded_ks metric");
    }
  }
  if (is_binomial(testing)) {
    for (double level : levels.levels()) {
      if (!(level - tol > 0.0) ||
          (hypothesis.sidedness == Sidedness::two_sided && !(level + tol < 1.0))) {
        throw ConfigError("level " + format_double(level) +
                          " shifted by the tolerance leaves (0, 1)");
      }
    }
  }
  if (testing == TestingKind::evalue_monitor) {
    if (!evalue) {
      throw ConfigError("evalue_monitor needs an e-value configuration");
    }
    try {
      evalue->validate();
    } catch (const InvalidArgument& e) {
      throw ConfigError(e.what());
    }
    if (evalue->alpha != alpha) {
      throw ConfigError("e-value alpha differs from the recipe alpha");
    }
    if (bins) {
      throw ConfigError("variance binning wraps offline tests only");
    }
  }
  if (bins) {
    if (*bins < 1) {
      throw ConfigError("bins must be >= 1");
    }
    if (model != ModelKind::gaussian && model != ModelKind::mv_gaussian) {
      throw ConfigError("variance binning needs gaussian or mv_gaussian predictions");
    }
  }
  if (probes_per_dim < 1) {
    throw ConfigError("probes_per_dim must be >= 1");
  }
}

nlohmann::ordered_json RecipeConfig::to_json() const {
  OrderedJson j;
  j["model"] = to_string(model);
  j["metric"] = to_string(metric);
  j["hypothesis"] = {{"sidedness", to_string(hypothesis.sidedness)},
                     {"tolerance", hypothesis.tolerance}};
  j["testing"] = to_string(testing);
  j["alpha"] = alpha;
  j["levels"] = levels.levels();
  j["bins"] = bins ? OrderedJson(*bins) : OrderedJson();
  j["evalue"] = evalue ? OrderedJson{{"level", evalue->level}, {"p_alt", evalue->p_alt}}
                       : OrderedJson();
  j["seed"] = seed;
  j["probes_per_dim"] = probes_per_dim;
  return j;
}

void RecipeConfig::merge_json(const nlohmann::json& j) {
  if (!j.is_object()) {
    throw ConfigError("recipe configuration must be a JSON object");
  }
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "model") {
        model = parse_model_kind(value.get<std::string>());
      } else if (key == "metric") {
        metric = parse_metric_kind(value.get<std::string>());
      } else if (key == "hypothesis") {
        for (const auto& [hk, hv] : value.items()) {
          if (hk == "sidedness") {
            hypothesis.sidedness = parse_sidedness(hv.get<std::string>());
          } else if (hk == "tolerance") {
            hypothesis.tolerance = hv.get<double>();
          } else {
            throw ConfigError("unknown hypothesis field '" + hk + "'");
          }
        }
      } else if (key == "testing") {
        testing = parse_testing_kind(value.get<std::string>());
      } else if (key == "alpha") {
        alpha = value.get<double>();
      } else if (key == "levels") {
        levels = value.is_string() ? LevelGrid::parse(value.get<std::string>())
                                   : LevelGrid(value.get<std::vector<double>>());
      } else if (key == "bins") {
        bins = value.is_null() ? std::nullopt : std::optional<int>(value.get<int>());
      } else if (key == "evalue") {
        if (value.is_null()) {
          evalue.reset();
          continue;
        }
        const bool fresh = !evalue;
        EValueConfig ev = evalue.value_or(EValueConfig{});
        if (fresh && value.contains("level") && !value.contains("p_alt")) {
          ev.p_alt = value["level"].get<double>() - 0.1;
        }
        for (const auto& [ek, evv] : value.items()) {
          if (ek == "level") {
            ev.level = evv.get<double>();
          } else if (ek == "p_alt") {
            ev.p_alt = evv.get<double>();
          } else {
            throw ConfigError("unknown evalue field '" + ek + "'");
          }
        }
        evalue = ev;
      } else if (key == "seed") {
        seed = value.get<std::uint64_t>();
      } else if (key == "probes_per_dim") {
        probes_per_dim = value.get<int>();
      } else {
        throw ConfigError("unknown configuration field '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad configuration value: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  if (evalue) {
    evalue->alpha = alpha;
  }
}

RecipeConfig RecipeConfig::from_json(const nlohmann::json& j) {
  RecipeConfig config;
  config.merge_json(j);
  return config;
}

std::string to_csv(const CurveTable& table) {
  std::string out;
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    out += (c ? "," : "") + table.columns[c];
  }
  out += '\n';
  for (const auto& row : table.rows) {
    out += csv_row(row);
  }
  return out;
}

std::string csv_row(std::span<const double> values) {
  std::string out;
  for (std::size_t c = 0; c < values.size(); ++c) {
    if (c) out += ',';
    out += format_double(values[c]);
  }
  out += '\n';
  return out;
}

nlohmann::ordered_json to_json(const RunReport& report) {
  OrderedJson j;
  j["tool"] = kToolName;
  j["version"] = kToolVersion;
  j["decision"] = to_string(report.decision);
  j["complete"] = report.complete;
  if (report.error) {
    j["error"] = *report.error;
  }
  j["report"] = to_json(report.report);
  if (report.monitor) {
    j["monitor"] = state_json(*report.monitor);
  }
  if (!report.bins.empty()) {
    auto& bins = j["bins"] = OrderedJson::array();
    for (const auto& b : report.bins) {
      bins.push_back(to_json(b));
    }
  }
  auto& curves = j["curves"] = OrderedJson::object();
  for (const auto& c : report.curves) {
    curves[c.name] = {{"columns", c.columns}, {"rows", c.rows}};
  }
  j["config"] = report.config.to_json();
  j["provenance"] = {{"input_sha256", report.input_sha256},
                     {"n_records", report.n_records}};
  return j;
}

struct Sha256::Impl {
  EVP_MD_CTX* ctx = nullptr;
  bool finished = false;
};

Sha256::Sha256() : impl_(new Impl) {
  impl_->ctx = EVP_MD_CTX_new();
  if (impl_->ctx == nullptr || EVP_DigestInit_ex(impl_->ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(impl_->ctx);
    delete impl_;
    throw Error("SHA-256 initialization failed");
  }
}

Sha256::~Sha256() {
  EVP_MD_CTX_free(impl_->ctx);
  delete impl_;
}

void Sha256::update(std::string_view bytes) {
  if (impl_->finished || EVP_DigestUpdate(impl_->ctx, bytes.data(), bytes.size()) != 1) {
    throw Error("SHA-256 update failed");
  }
}

std::string Sha256::hex() {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (impl_->finished || EVP_DigestFinal_ex(impl_->ctx, digest, &len) != 1) {
    throw Error("SHA-256 finalization failed");
  }
  impl_->finished = true;
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xf];
  }
  return out;
}

std::string sha256_hex(std::string_view bytes) {
  Sha256 h;
  h.update(bytes);
  return h.hex();
}

RunReport run_check(const RecipeConfig& config,
                    std::span<const PredictionRecord> records) {
  config.validate();
  if (records.empty()) {
    throw DataError("no records to check");
  }
  for (const auto& r : records) {
    if (model_kind(r.prediction()) != config.model) {
      throw ConfigError("records are " + std::string(to_string(model_kind(r.prediction()))) +
                        " but the recipe model is " + std::string(to_string(config.model)));
    }
  }

  RunReport out;
  out.config = config;
  out.n_records = records.size();

  if (!config.bins) {
    InnerResult inner = run_inner(config, records, config.alpha);
    out.report = std::move(inner.report);
    out.curves = std::move(inner.curves);
    out.monitor = inner.monitor;
  } else {
    const auto n_bins = static_cast<std::size_t>(*config.bins);
    const VarianceBins vb = variance_bin(records, n_bins);
    const double bin_alpha = config.alpha / static_cast<double>(n_bins);
    TestReport across;
    across.test = "variance_bins";
    across.alpha = config.alpha;
    across.threshold = bin_alpha;
    across.statistic = 1.0;
    for (std::size_t b = 0; b < n_bins; ++b) {
      std::vector<PredictionRecord> subset;
      for (std::size_t i : vb.members(b)) {
        subset.push_back(records[i]);
      }
      InnerResult inner = run_inner(config, subset, bin_alpha);
      across.statistic = std::min(across.statistic, inner.report.p_value);
      across.rejections.push_back(inner.report.rejected());
      for (auto& c : inner.curves) {
        c.name = "bin" + std::to_string(b) + "_" + c.name;
        out.curves.push_back(std::move(c));
      }
      out.bins.push_back(std::move(inner.report));
    }
    across.p_value = std::min(1.0, static_cast<double>(n_bins) * across.statistic);
    across.decision = std::any_of(across.rejections.begin(), across.rejections.end(),
                                  [](bool r) { return r; })
                          ? Decision::reject
                          : Decision::accept;
    across.config = {{"bins", n_bins}, {"bin_edges", vb.bin_edges}, {"alpha", config.alpha}};
    out.report = std::move(across);
  }
  out.decision = out.report.decision;
  return out;
}

Monitor::Monitor(const EValueConfig& config, std::uint64_t seed)
    : config_(config), rng_(seed) {
  config_.validate();
}

const MartingaleState& Monitor::step(const PredictionRecord& record) {
  const auto& pred = record.prediction();
  if (const auto* g = std::get_if<GaussianPrediction>(&pred)) {
    state_ = monitor_step_gaussian(state_, *g, record.outcome()[0], config_);
  } else if (const auto* c = std::get_if<ParticleCloudPrediction>(&pred)) {
    state_ = monitor_step_halfplane(state_, *c, record.outcome(), config_, rng_);
  } else {
    state_ = monitor_step_indicator(
        state_, level_set_contains(record, config_.level) ? 1 : 0, config_);
  }
  return state_;
}

RunReport run_monitor(const RecipeConfig& config, RecordReader& reader,
                      const std::function<void(const MonitorRow&)>& on_row) {
  config.validate();
  if (!config.evalue) {
    throw ConfigError("monitoring needs an e-value configuration");
  }
  Monitor monitor(*config.evalue, config.seed);
  RunReport out;
  out.config = config;
  double sup_log_e = 0.0;
  const double threshold = 1.0 / config.evalue->alpha;
  while (true) {
    std::optional<PredictionRecord> record;
    try {
      record = reader.next();
    } catch (const DataError& e) {
      out.complete = false;
      out.error = e.what();
      break;
    }
    if (!record) {
      break;
    }
    if (model_kind(record->prediction()) != config.model) {
      throw ConfigError("record family does not match the recipe model");
    }
    const auto& s = monitor.step(*record);
    ++out.n_records;
    sup_log_e = std::max(sup_log_e, s.log_e);
    on_row({s.t, s.e_value(), s.log_e, threshold, s.alarmed});
  }
  if (out.complete && out.n_records == 0) {
    throw DataError("no records in input");
  }
  out.monitor = monitor.state();
  out.report = monitor_report(monitor.state(), sup_log_e, *config.evalue);
  out.decision = out.report.decision;
  return out;
}

}  // namespace calcheck
