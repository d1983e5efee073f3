#include <gtest/gtest.h>

#include <sstream>

#include "calcheck/error.hpp"
#include "calcheck/recipe.hpp"
#include "calcheck/sim.hpp"

namespace calcheck {
namespace {

using nlohmann::json;

RecipeConfig with(const std::string& text) { return RecipeConfig::from_json(json::parse(text)); }

std::vector<PredictionRecord> weather(std::uint64_t seed, double bias = 0.0,
                                      double scale = 1.0) {
  WeatherSimConfig c;
  c.seed = seed;
  c.injected_mean_bias = bias;
  c.injected_sd_scale = scale;
  return run_weather_sim(c);
}

TEST(Sha256, KnownDigests) {
  EXPECT_EQ(sha256_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex(""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  Sha256 inc;
  inc.update("a");
  inc.update("bc");
  EXPECT_EQ(inc.hex(), sha256_hex("abc"));
}

TEST(Kinds, NamesRoundTrip) {
  for (auto m : {MetricKind::coverage, MetricKind::pit_ks, MetricKind::folded_ks,
                 MetricKind::halfplane}) {
    EXPECT_EQ(parse_metric_kind(to_string(m)), m);
  }
  for (auto t : {TestingKind::binom_bonferroni, TestingKind::binom_holm, TestingKind::ks,
                 TestingKind::evalue_monitor}) {
    EXPECT_EQ(parse_testing_kind(to_string(t)), t);
  }
  EXPECT_THROW(parse_metric_kind("crps"), ConfigError);
  EXPECT_THROW(parse_testing_kind("t_test"), ConfigError);
}

TEST(Validate, IncompatibleSlots) {
  const char* bad[] = {
      R"({"model":"particles","metric":"coverage"})",
      R"({"model":"particles","metric":"pit_ks","testing":"ks"})",
      R"({"model":"set_provider","metric":"folded_ks","testing":"ks"})",
      R"({"model":"gaussian","metric":"halfplane"})",
      R"({"metric":"coverage","testing":"ks"})",
      R"({"metric":"pit_ks","testing":"binom_bonferroni"})",
      R"({"metric":"folded_ks","testing":"ks","hypothesis":{"tolerance":0.02}})",
      R"({"metric":"pit_ks","testing":"ks","hypothesis":{"sidedness":"one"}})",
      R"({"levels":[0.5,0.99],"hypothesis":{"tolerance":0.02}})",
      R"({"testing":"evalue_monitor"})",
      R"({"testing":"evalue_monitor","evalue":{"level":0.9,"p_alt":0.95}})",
      R"({"testing":"evalue_monitor","evalue":{"level":0.9},"bins":3})",
      R"({"bins":0})",
      R"({"model":"parametric","bins":3})",
      R"({"alpha":1.5})",
      R"({"hypothesis":{"tolerance":0.5}})",
  };
  for (const char* text : bad) {
    EXPECT_THROW(with(text).validate(), ConfigError) << text;
  }
  EXPECT_NO_THROW(with(R"({"levels":[0.5,0.99],"hypothesis":{"sidedness":"one","tolerance":0.02}})")
                      .validate());
  EXPECT_NO_THROW(with(R"({"metric":"folded_ks","testing":"ks","hypothesis":{"sidedness":"one","tolerance":0.02}})")
                      .validate());
}

TEST(Config, JsonRoundTrip) {
  const RecipeConfig c = with(
      R"({"model":"mv_gaussian","metric":"coverage","testing":"binom_holm","alpha":0.01,)"
      R"("levels":"0.1,0.9","bins":5,"seed":42,"hypothesis":{"sidedness":"one_sided","tolerance":0.03}})");
  const RecipeConfig back = RecipeConfig::from_json(json::parse(c.to_json().dump()));
  EXPECT_EQ(back.to_json().dump(), c.to_json().dump());
  EXPECT_EQ(back.levels.levels(), (std::vector<double>{0.1, 0.9}));
  EXPECT_EQ(back.bins, 5);
}

TEST(Config, UnknownKeysAndBadValues) {
  EXPECT_THROW(with(R"({"alhpa":0.05})"), ConfigError);
  EXPECT_THROW(with(R"({"hypothesis":{"side":"one"}})"), ConfigError);
  EXPECT_THROW(with(R"({"alpha":"high"})"), ConfigError);
  EXPECT_THROW(with(R"({"levels":"0.9,0.1"})"), ConfigError);
  EXPECT_THROW(with(R"({"hypothesis":{"sidedness":"left"}})"), ConfigError);
}

TEST(Config, EValueDefaultsAndAlphaSync) {
  const RecipeConfig c = with(R"({"alpha":0.01,"testing":"evalue_monitor","evalue":{"level":0.8}})");
  ASSERT_TRUE(c.evalue);
  EXPECT_NEAR(c.evalue->p_alt, 0.7, 1e-15);
  EXPECT_EQ(c.evalue->alpha, 0.01);
  EXPECT_NO_THROW(c.validate());
}

TEST(Csv, ShortestRoundTrip) {
  const std::vector<double> row = {0.1, 1.0, 1e-300, 2.0 / 3.0};
  EXPECT_EQ(csv_row(row), "0.1,1,1e-300,0.6666666666666666\n");
  const CurveTable t{"x", {"a", "b"}, {{1.0, 2.5}}};
  EXPECT_EQ(to_csv(t), "a,b\n1,2.5\n");
}

TEST(RunCheck, RecipeOneOnUnbiasedWeatherAccepts) {
  const RunReport r = run_check(RecipeConfig{}, weather(1));
  EXPECT_EQ(r.n_records, 365u);
  EXPECT_EQ(r.report.test, "binomial_bonferroni");
  ASSERT_EQ(r.curves.size(), 1u);
  EXPECT_EQ(r.curves[0].name, "coverage");
  EXPECT_EQ(r.curves[0].rows.size(), 10u);
}

TEST(RunCheck, BiasedWeatherSignature) {
  // +0.5 sd mean bias with the sd widened to keep the mean squared error.
  int unfolded = 0;
  int folded = 0;
  int coverage_tol = 0;
  RecipeConfig ks = with(R"({"metric":"pit_ks","testing":"ks"})");
  RecipeConfig fks = with(R"({"metric":"folded_ks","testing":"ks","hypothesis":{"sidedness":"one"}})");
  RecipeConfig cov = with(R"({"hypothesis":{"tolerance":0.02}})");
  cov.levels = LevelGrid::midpoints(18);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto r = weather(100 + s, 0.5, std::sqrt(1.25));
    unfolded += run_check(ks, r).report.rejected() ? 1 : 0;
    folded += run_check(fks, r).report.rejected() ? 0 : 1;
    coverage_tol += run_check(cov, r).report.rejected() ? 0 : 1;
  }
  EXPECT_GE(unfolded, 16);
  EXPECT_GE(folded, 16);
  EXPECT_GE(coverage_tol, 16);
}

TEST(RunCheck, BinsWrap) {
  RecipeConfig c = with(R"({"bins":3,"hypothesis":{"tolerance":0.02}})");
  const RunReport r = run_check(c, weather(2));
  EXPECT_EQ(r.report.test, "variance_bins");
  ASSERT_EQ(r.bins.size(), 3u);
  EXPECT_EQ(r.report.rejections.size(), 3u);
  EXPECT_EQ(r.decision, Decision::accept);
  for (const auto& b : r.bins) EXPECT_NEAR(b.alpha, 0.05 / 3, 1e-15);
  EXPECT_EQ(r.curves.front().name.rfind("bin0_", 0), 0u);
}

TEST(RunCheck, ModelMismatch) {
  EXPECT_THROW(run_check(with(R"({"model":"mv_gaussian"})"), weather(3)), ConfigError);
  EXPECT_THROW(run_check(RecipeConfig{}, std::vector<PredictionRecord>{}), DataError);
}

TEST(RunCheck, Deterministic) {
  const auto records = weather(4);
  for (const char* text :
       {R"({})", R"({"metric":"pit_ks","testing":"ks"})", R"({"bins":3})",
        R"({"testing":"evalue_monitor","evalue":{"level":0.9}})"}) {
    const RecipeConfig c = with(text);
    EXPECT_EQ(to_json(run_check(c, records)).dump(), to_json(run_check(c, records)).dump());
  }
  RobotSimConfig robot;
  robot.n_steps = 100;
  robot.n_particles = 100;
  const auto clouds = run_robot_sim(robot);
  const RecipeConfig hp = with(R"({"model":"particles","metric":"halfplane","seed":7})");
  EXPECT_EQ(to_json(run_check(hp, clouds)).dump(), to_json(run_check(hp, clouds)).dump());
}

TEST(RunCheck, TestingSlotSwap) {
  const auto records = weather(5);
  RecipeConfig c;
  const RunReport offline = run_check(c, records);
  c.testing = TestingKind::evalue_monitor;
  c.evalue = EValueConfig{0.9, 0.8, 0.05};
  const RunReport online = run_check(c, records);
  EXPECT_EQ(online.config.model, offline.config.model);
  EXPECT_EQ(online.config.metric, offline.config.metric);
  ASSERT_TRUE(online.monitor);
  EXPECT_EQ(online.monitor->t, 365);
  EXPECT_EQ(online.curves.front().name, "e_trace");
}

TEST(RunCheck, ReportFieldOrder) {
  RunReport r = run_check(RecipeConfig{}, weather(6));
  r.input_sha256 = sha256_hex("x");
  const auto j = to_json(r);
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  EXPECT_EQ(keys, (std::vector<std::string>{"tool", "version", "decision", "complete", "report",
                                            "curves", "config", "provenance"}));
  EXPECT_EQ(j["provenance"]["n_records"], 365);
}

std::string gaussian_lines(int n, double y) {
  std::string s;
  for (int i = 0; i < n; ++i) {
    s += "{\"mu\":0,\"sigma\":1,\"y\":" + std::to_string(y) + "}\n";
  }
  return s;
}

TEST(RunMonitor, AllMissStreamAlarmsAtFive) {
  std::istringstream in(gaussian_lines(8, 40.0));
  RecordReader reader(in, ModelKind::gaussian);
  std::vector<MonitorRow> rows;
  const RecipeConfig c = with(R"({"testing":"evalue_monitor","evalue":{"level":0.9}})");
  const RunReport r = run_monitor(c, reader, [&](const MonitorRow& row) { rows.push_back(row); });
  ASSERT_EQ(rows.size(), 8u);
  EXPECT_FALSE(rows[3].alarmed);
  EXPECT_TRUE(rows[4].alarmed);
  EXPECT_EQ(rows[0].threshold, 20.0);
  EXPECT_EQ(r.decision, Decision::reject);
  EXPECT_EQ(r.monitor->first_crossing, 5);
  EXPECT_TRUE(r.complete);
}

TEST(RunMonitor, InterruptedStreamIsPartial) {
  std::istringstream in(gaussian_lines(3, 0.0) + "{\"mu\":0,\"sigma\":1}\n" +
                        gaussian_lines(2, 0.0));
  RecordReader reader(in, ModelKind::gaussian);
  const RecipeConfig c = with(R"({"testing":"evalue_monitor","evalue":{"level":0.9}})");
  const RunReport r = run_monitor(c, reader, [](const MonitorRow&) {});
  EXPECT_FALSE(r.complete);
  EXPECT_EQ(r.n_records, 3u);
  ASSERT_TRUE(r.error);
  EXPECT_NE(r.error->find("line 4"), std::string::npos);
  EXPECT_EQ(to_json(r)["complete"], false);
}

TEST(RunMonitor, EmptyStream) {
  std::istringstream in("");
  RecordReader reader(in, ModelKind::gaussian);
  const RecipeConfig c = with(R"({"testing":"evalue_monitor","evalue":{"level":0.9}})");
  EXPECT_THROW(run_monitor(c, reader, [](const MonitorRow&) {}), DataError);
}

TEST(RunMonitor, CalibratedStreamsRunClean) {
  int clean = 0;
  const RecipeConfig c = with(R"({"testing":"evalue_monitor","evalue":{"level":0.9}})");
  for (std::uint64_t s = 0; s < 100; ++s) {
    std::ostringstream text;
    std::mt19937_64 rng(s);
    std::normal_distribution<double> z;
    for (int t = 0; t < 365; ++t) {
      text << "{\"mu\":1,\"sigma\":2,\"y\":" << 1.0 + 2.0 * z(rng) << "}\n";
    }
    std::istringstream in(text.str());
    RecordReader reader(in, ModelKind::gaussian);
    clean += run_monitor(c, reader, [](const MonitorRow&) {}).decision == Decision::accept;
  }
  EXPECT_GE(clean / 100.0, 0.95 - 3.0 * std::sqrt(0.05 * 0.95 / 100));
}

}  // namespace
}  // namespace calcheck
