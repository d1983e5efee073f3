// calcheck: offline calibration checks, online e-value monitors, simulators.
//
// Exit status: 0 accept / clean, 1 reject / alarm, 2 usage or configuration
// error, 3 data error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "calcheck/error.hpp"
#include "calcheck/recipe.hpp"
#include "calcheck/records.hpp"
#include "calcheck/sim.hpp"

namespace fs = std::filesystem;
using namespace calcheck;

namespace {

constexpr int kExitAccept = 0;
constexpr int kExitReject = 1;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;

struct RecipeFlags {
  std::string model;
  std::string metric;
  std::string testing;
  std::string sided;
  std::string levels;
  std::string config_path;
  double alpha = 0.05;
  double tolerance = 0.0;
  double lambda = 0.9;
  double p_alt = 0.8;
  int bins = 0;
  std::uint64_t seed = 0;

  CLI::Option* alpha_opt = nullptr;
  CLI::Option* tolerance_opt = nullptr;
  CLI::Option* lambda_opt = nullptr;
  CLI::Option* p_alt_opt = nullptr;
  CLI::Option* bins_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
};

void add_recipe_flags(CLI::App& app, RecipeFlags& f) {
  app.add_option("--model", f.model,
                 "gaussian | mv_gaussian | parametric | particles | set_provider");
  app.add_option("--metric", f.metric, "coverage | pit_ks | folded_ks | halfplane");
  app.add_option("--testing", f.testing,
                 "binom_bonferroni | binom_holm | ks | evalue_monitor");
  app.add_option("--sided", f.sided, "one | two");
  app.add_option("--levels", f.levels, "comma-separated coverage levels");
  app.add_option("--config", f.config_path, "recipe configuration (JSON)");
  f.alpha_opt = app.add_option("--alpha", f.alpha, "significance level");
  f.tolerance_opt = app.add_option("--tolerance", f.tolerance, "coverage tolerance");
  f.lambda_opt = app.add_option("--lambda", f.lambda, "monitored coverage level");
  f.p_alt_opt = app.add_option("--p-alt", f.p_alt, "alternative coverage (default lambda - 0.1)");
  f.bins_opt = app.add_option("--bins", f.bins, "variance bins");
  f.seed_opt = app.add_option("--seed", f.seed, "random seed");
}

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("CALCHECK_SEED");
  if (s == nullptr || *s == '\0') {
    return std::nullopt;
  }
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(s, &used);
    if (used != std::string(s).size()) {
      throw std::invalid_argument(s);
    }
    return v;
  } catch (const std::exception&) {
    throw ConfigError(std::string("CALCHECK_SEED is not an integer: ") + s);
  }
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open configuration " + path);
  }
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("malformed configuration " + path + ": " + e.what());
  }
}

// Flags override the config file, which overrides the defaults. The seed falls
// back to CALCHECK_SEED, then 0.
RecipeConfig resolve_config(const RecipeFlags& f, bool monitor) {
  RecipeConfig config;
  bool seed_from_file = false;
  bool metric_set = false;
  if (!f.config_path.empty()) {
    const auto j = read_json_file(f.config_path);
    config.merge_json(j);
    seed_from_file = j.contains("seed");
    metric_set = j.contains("metric");
  }
  if (!f.model.empty()) config.model = parse_model_kind(f.model);
  if (!f.metric.empty()) {
    config.metric = parse_metric_kind(f.metric);
    metric_set = true;
  }
  if (!metric_set && config.model == ModelKind::particles) {
    config.metric = MetricKind::halfplane;
  }
  if (!f.testing.empty()) config.testing = parse_testing_kind(f.testing);
  if (monitor) config.testing = TestingKind::evalue_monitor;
  if (!f.sided.empty()) config.hypothesis.sidedness = parse_sidedness(f.sided);
  if (!f.levels.empty()) {
    try {
      config.levels = LevelGrid::parse(f.levels);
    } catch (const InvalidArgument& e) {
      throw ConfigError(e.what());
    }
  }
  if (f.alpha_opt->count()) config.alpha = f.alpha;
  if (f.tolerance_opt->count()) config.hypothesis.tolerance = f.tolerance;
  if (f.bins_opt->count()) config.bins = f.bins;
  if (f.seed_opt->count()) {
    config.seed = f.seed;
  } else if (!seed_from_file) {
    config.seed = env_seed().value_or(0);
  }

  const bool wants_evalue = config.testing == TestingKind::evalue_monitor ||
                            f.lambda_opt->count() || f.p_alt_opt->count();
  if (wants_evalue) {
    EValueConfig ev = config.evalue.value_or(EValueConfig{});
    if (f.lambda_opt->count()) {
      ev.level = f.lambda;
      if (!f.p_alt_opt->count()) ev.p_alt = f.lambda - 0.1;
    }
    if (f.p_alt_opt->count()) ev.p_alt = f.p_alt;
    config.evalue = ev;
  }
  if (config.evalue) config.evalue->alpha = config.alpha;
  config.validate();
  return config;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << content)) {
    throw Error("cannot write " + path.string());
  }
}

void emit_outputs(const RunReport& report, const std::string& out_dir) {
  const std::string json = to_json(report).dump(2) + "\n";
  std::cout << json;
  if (out_dir.empty()) {
    return;
  }
  fs::create_directories(out_dir);
  write_file(fs::path(out_dir) / "report.json", json);
  for (const auto& c : report.curves) {
    write_file(fs::path(out_dir) / (c.name + ".csv"), to_csv(c));
  }
}

int decision_exit(Decision d) { return d == Decision::reject ? kExitReject : kExitAccept; }

int run_check_command(const RecipeFlags& flags, const std::string& input,
                      const std::string& out_dir) {
  const RecipeConfig config = resolve_config(flags, false);
  std::ifstream file;
  if (input != "-") {
    file.open(input);
    if (!file) throw DataError("cannot open " + input);
  }
  std::istream& in = input == "-" ? std::cin : file;
  Sha256 digest;
  RecordReader reader(in, config.model);
  reader.set_line_observer([&](std::string_view line) {
    digest.update(line);
    digest.update("\n");
  });
  std::vector<PredictionRecord> records;
  while (auto r = reader.next()) {
    records.push_back(std::move(*r));
  }
  if (records.empty()) throw DataError("no records in " + input);
  RunReport report = run_check(config, records);
  report.input_sha256 = digest.hex();
  emit_outputs(report, out_dir);
  return decision_exit(report.decision);
}

int run_monitor_command(const RecipeFlags& flags, const std::string& input,
                        const std::string& out_dir) {
  const RecipeConfig config = resolve_config(flags, true);
  std::ifstream file;
  if (input != "-") {
    file.open(input);
    if (!file) throw DataError("cannot open " + input);
  }
  std::istream& in = input == "-" ? std::cin : file;
  std::ofstream trace;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    trace.open(fs::path(out_dir) / "e_trace.csv");
    if (!trace) throw Error("cannot write e_trace.csv in " + out_dir);
  }
  Sha256 digest;
  RecordReader reader(in, config.model);
  reader.set_line_observer([&](std::string_view line) {
    digest.update(line);
    digest.update("\n");
  });
  const std::string header = "t,e_value,log_e,threshold,alarmed\n";
  std::cout << header;
  if (trace) trace << header;
  auto on_row = [&](const MonitorRow& row) {
    const double values[] = {static_cast<double>(row.t), row.e_value, row.log_e,
                             row.threshold, row.alarmed ? 1.0 : 0.0};
    const std::string line = csv_row(values);
    std::cout << line << std::flush;
    if (trace) trace << line << std::flush;
  };
  RunReport report = run_monitor(config, reader, on_row);
  report.input_sha256 = digest.hex();
  const std::string json = to_json(report).dump(2) + "\n";
  if (!out_dir.empty()) {
    write_file(fs::path(out_dir) / "report.json", json);
  }
  std::cerr << "decision: " << to_string(report.decision)
            << (report.monitor && report.monitor->first_crossing
                    ? " (first crossing t=" + std::to_string(*report.monitor->first_crossing) + ")"
                    : std::string())
            << "\n";
  if (!report.complete) {
    std::cerr << "incomplete: " << report.error.value_or("stream interrupted") << "\n";
    return kExitData;
  }
  return decision_exit(report.decision);
}

struct SimFlags {
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
  WeatherSimConfig weather;
  RobotSimConfig robot;
  int n_seeds = 20;
  std::vector<double> multipliers{0.5, 1.0, 2.0};
  double lambda = 0.9;
  double p_alt = 0.0;
  double alpha = 0.05;
  CLI::Option* p_alt_opt = nullptr;
};

std::uint64_t sim_seed(const SimFlags& f) {
  if (f.seed_opt->count()) return f.seed;
  return env_seed().value_or(0);
}

void write_records_file(const fs::path& path, const std::vector<PredictionRecord>& records) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_records(out, records);
}

int run_simulate_weather(SimFlags& f) {
  f.weather.seed = sim_seed(f);
  const auto records = run_weather_sim(f.weather);
  fs::create_directories(f.out_dir);
  const fs::path path = fs::path(f.out_dir) / "weather.jsonl";
  write_records_file(path, records);
  std::cout << "wrote " << records.size() << " records to " << path.string() << "\n";
  return kExitAccept;
}

int run_simulate_robot(SimFlags& f) {
  f.robot.seed = sim_seed(f);
  const auto records = run_robot_sim(f.robot);
  fs::create_directories(f.out_dir);
  const fs::path path = fs::path(f.out_dir) / "robot.jsonl";
  write_records_file(path, records);
  std::cout << "wrote " << records.size() << " records to " << path.string() << "\n";
  return kExitAccept;
}

int run_simulate_sweep(SimFlags& f) {
  f.robot.seed = sim_seed(f);
  EValueConfig monitor{f.lambda, f.p_alt_opt->count() ? f.p_alt : f.lambda - 0.1, f.alpha};
  try {
    monitor.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  const auto report = drift_sweep(f.robot, f.multipliers, f.n_seeds, monitor);
  fs::create_directories(f.out_dir);
  write_file(fs::path(f.out_dir) / "drift_sweep.json", to_json(report).dump(2) + "\n");

  CurveTable summary{"drift_sweep",
                     {"multiplier", "n_seeds", "alarms", "median_first_crossing",
                      "median_first_crossing_alarmed"},
                     {}};
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& row : report.rows) {
    summary.rows.push_back({row.multiplier, static_cast<double>(row.n_seeds),
                            static_cast<double>(row.alarms),
                            row.median_first_crossing.value_or(nan),
                            row.median_first_crossing_alarmed.value_or(nan)});
    CurveTable env{"", {"t", "q05", "q50", "q95"}, {}};
    for (std::size_t t = 0; t < row.envelope.size(); ++t) {
      const auto& e = row.envelope[t];
      env.rows.push_back({static_cast<double>(t + 1), e[0], e[1], e[2]});
    }
    std::ostringstream name;
    name << "envelope_x" << row.multiplier << ".csv";
    write_file(fs::path(f.out_dir) / name.str(), to_csv(env));
  }
  const std::string csv = to_csv(summary);
  write_file(fs::path(f.out_dir) / "drift_sweep.csv", csv);
  std::cout << csv;
  return kExitAccept;
}

int run_report_command(const std::string& path, const std::string& out_dir) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
  if (!j.is_object() || !j.contains("decision") || !j.contains("report")) {
    throw DataError("not a calcheck report: " + path);
  }
  try {
    const auto& r = j["report"];
    std::cout << "decision: " << j["decision"].get<std::string>() << "\n"
              << "test: " << r.value("test", "") << "\n"
              << "statistic: " << r.value("statistic", 0.0) << "\n"
              << "threshold: " << r.value("threshold", 0.0) << "\n"
              << "p_value: " << r.value("p_value", 1.0) << "\n";
    if (r.contains("per_level")) {
      std::cout << "level,count,n,p_value,lower_bound,upper_bound,rejected\n";
      for (const auto& v : r["per_level"]) {
        std::cout << v["level"].get<double>() << "," << v["count"].get<long long>() << ","
                  << v["n"].get<long long>() << "," << v["p_value"].get<double>() << ","
                  << v["lower_bound"].get<long long>() << ","
                  << v["upper_bound"].get<long long>() << ","
                  << (v["rejected"].get<bool>() ? 1 : 0) << "\n";
      }
    }
    if (!out_dir.empty() && j.contains("curves")) {
      fs::create_directories(out_dir);
      for (const auto& [name, table] : j["curves"].items()) {
        CurveTable c{name, table["columns"].get<std::vector<std::string>>(),
                     table["rows"].get<std::vector<std::vector<double>>>()};
        write_file(fs::path(out_dir) / (name + ".csv"), to_csv(c));
      }
    }
    return j["decision"].get<std::string>() == "reject" ? kExitReject : kExitAccept;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Calibration checks for probabilistic predictions"};
  app.require_subcommand(1);

  RecipeFlags check_flags;
  std::string check_input;
  std::string check_out;
  auto* check = app.add_subcommand("check", "run an offline calibration check");
  add_recipe_flags(*check, check_flags);
  check->add_option("input", check_input, "records file (JSONL), '-' for stdin")->required();
  check->add_option("--out", check_out, "directory for report.json and curve tables");

  RecipeFlags monitor_flags;
  std::string monitor_input;
  std::string monitor_out;
  auto* monitor = app.add_subcommand("monitor", "stream records through an e-value monitor");
  add_recipe_flags(*monitor, monitor_flags);
  monitor->add_option("input", monitor_input, "records file (JSONL), '-' for stdin")
      ->required();
  monitor->add_option("--out", monitor_out, "directory for e_trace.csv and report.json");

  SimFlags sim;
  auto* simulate = app.add_subcommand("simulate", "generate synthetic record streams");
  simulate->require_subcommand(1);
  simulate->fallthrough();
  simulate->add_option("--out", sim.out_dir, "output directory");
  sim.seed_opt = simulate->add_option("--seed", sim.seed, "simulation seed");

  auto* weather = simulate->add_subcommand("weather", "seasonal series with an OLS forecaster");
  weather->add_option("--window", sim.weather.window);
  weather->add_option("--n-days", sim.weather.n_days);
  weather->add_option("--amplitude", sim.weather.seasonal_amplitude);
  weather->add_option("--noise-sd", sim.weather.noise_sd);
  weather->add_option("--bias", sim.weather.injected_mean_bias, "mean bias in predicted sds");
  weather->add_option("--sd-scale", sim.weather.injected_sd_scale);

  auto add_robot_flags = [&](CLI::App* sub) {
    sub->add_option("--particles", sim.robot.n_particles);
    sub->add_option("--steps", sim.robot.n_steps);
    sub->add_option("--range-noise", sim.robot.range_noise_sd);
    sub->add_option("--process-noise", sim.robot.process_noise_sd);
  };
  auto* robot = simulate->add_subcommand("robot", "particle-filter localization run");
  add_robot_flags(robot);
  robot->add_option("--drift", sim.robot.drift_multiplier, "drift multiplier");

  auto* sweep = simulate->add_subcommand("drift_sweep", "half-plane monitor across drift levels");
  add_robot_flags(sweep);
  sweep->add_option("--seeds", sim.n_seeds, "seeds per multiplier");
  sweep->add_option("--multipliers", sim.multipliers, "drift multipliers")->delimiter(',');
  sweep->add_option("--lambda", sim.lambda, "monitored coverage level");
  sim.p_alt_opt = sweep->add_option("--p-alt", sim.p_alt, "alternative coverage");
  sweep->add_option("--alpha", sim.alpha, "significance level");

  std::string report_input;
  std::string report_out;
  auto* report = app.add_subcommand("report", "summarize a report and export its curves");
  report->add_option("input", report_input, "report.json")->required();
  report->add_option("--out", report_out, "directory for curve tables");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitAccept : kExitUsage;
  }

  try {
    if (check->parsed()) return run_check_command(check_flags, check_input, check_out);
    if (monitor->parsed()) return run_monitor_command(monitor_flags, monitor_input, monitor_out);
    if (weather->parsed()) return run_simulate_weather(sim);
    if (robot->parsed()) return run_simulate_robot(sim);
    if (sweep->parsed()) return run_simulate_sweep(sim);
    if (report->parsed()) return run_report_command(report_input, report_out);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InvalidArgument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UnsupportedMetric& e) {
    std::cerr << "unsupported: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
