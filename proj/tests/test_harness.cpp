// Config parsing, pipelines, exit codes and report emission.

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lottery/harness.hpp"

using namespace lottery;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = LOTTERY_SOURCE_DIR;

Json two_players() {
  return Json::parse(R"({"benefits": [{"player_id": 1, "coefficient": 1.0}, {"player_id": 2, "coefficient": 1.0}]})");
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("lottery_harness_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Config, Defaults) {
  const ScenarioConfig cfg = parse_config(two_players(), "/base");
  EXPECT_EQ(cfg.benefits.size(), 2u);
  EXPECT_DOUBLE_EQ(cfg.reward, 1.0);
  EXPECT_EQ(cfg.constraint_source, ConstraintSource::none);
  EXPECT_DOUBLE_EQ(cfg.alpha, 1.0);
  EXPECT_EQ(cfg.workers, 1u);
}

TEST(Config, Rejections) {
  auto bad = [](const char* patch) {
    Json j = two_players();
    j.merge_patch(Json::parse(patch));
    return j;
  };
  EXPECT_THROW(parse_config(bad(R"({"unknown": 1})"), "."), ConfigError);
  EXPECT_THROW(parse_config(bad(R"({"design_point": {"reward": 0}})"), "."), ConfigError);
  EXPECT_THROW(parse_config(bad(R"({"design_point": {"perturbation": [1]}})"), "."), ConfigError);
  EXPECT_THROW(parse_config(bad(R"({"design_point": {"perturbation": [-1, 0]}})"), "."), ConfigError);
  EXPECT_THROW(parse_config(bad(R"({"alpha": -1})"), "."), ConfigError);
  EXPECT_THROW(parse_config(bad(R"({"workers": 0})"), "."), ConfigError);
  EXPECT_THROW(parse_config(bad(R"({"sweep": {"rewards": [1, -2]}})"), "."), ConfigError);
  EXPECT_THROW(parse_config(bad(R"({"individual_rationality": "sometimes"})"), "."), ConfigError);
  EXPECT_THROW(parse_config(bad(R"({"constraints": {"source": "inline", "rows": [{"coefficients": [1, 0], "bound": 1}]}})"), "."),
               ConfigError);
  EXPECT_THROW(parse_config(bad(R"({"constraints": {"source": "grid", "case": "nowhere.m"}})"), "."), ConfigError);
  EXPECT_THROW(parse_config(Json::parse(R"({"benefits": []})"), "."), ConfigError);
  EXPECT_THROW(parse_config(Json::parse(R"({"benefits": [{"player_id": 1, "coefficient": -2}]})"), "."), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Pipelines, EquilibriumReport) {
  Json j = two_players();
  j["design_point"] = Json::parse(R"({"reward": 1, "perturbation": [0.5, 0.5]})");
  const auto r = run_scenario(Pipeline::equilibrium, parse_config(j, "."));
  EXPECT_EQ(r.exit_code, kExitSuccess);
  EXPECT_EQ(r.report["status"], "pass");
  EXPECT_NEAR(r.report["equilibrium"]["public_good"].get<double>(), 1.0, 1e-10);
}

TEST(Pipelines, AnalyzeSweepAndInfinity) {
  Json j = two_players();
  j["sweep"] = Json::parse(R"({"rewards": [100, 1, 10]})");
  const auto r = run_scenario(Pipeline::analyze, parse_config(j, "."));
  EXPECT_EQ(r.exit_code, kExitSuccess);
  ASSERT_EQ(r.report["sweep"].size(), 3u);
  EXPECT_DOUBLE_EQ(r.report["sweep"][0]["reward"].get<double>(), 1.0);
  EXPECT_EQ(r.report["sweep"][0]["bounds"]["poa_upper"], "+inf");
  EXPECT_TRUE(r.report["poa_nonincreasing_in_reward"].get<bool>());
  ASSERT_EQ(r.files.size(), 1u);
  EXPECT_EQ(r.files[0].name, "sweep.csv");
}

TEST(Pipelines, AnalyzeEmptySweep) {
  const auto r = run_scenario(Pipeline::analyze, parse_config(two_players(), "."));
  EXPECT_EQ(r.exit_code, kExitSuccess);
  EXPECT_TRUE(r.report["sweep"].empty());
}

TEST(Pipelines, DesignConstrained) {
  const auto r = run_scenario(Pipeline::design, load_config(kRoot / "configs/i2_design_constrained.json"));
  EXPECT_EQ(r.exit_code, kExitSuccess);
  EXPECT_NEAR(r.report["summary"]["reward"].get<double>(), 2.0, 1e-9);
  EXPECT_NEAR(r.report["summary"]["objective"].get<double>(), 3.0, 1e-9);
}

TEST(Pipelines, InfeasibleDesignExitsWithVerificationCode) {
  Json j = two_players();
  j["constraints"] = Json::parse(R"({"source": "inline", "rows": [{"coefficients": [0, 0, 1], "bound": -1}]})");
  const auto r = run_scenario(Pipeline::design, parse_config(j, "."));
  EXPECT_EQ(r.exit_code, kExitVerification);
  EXPECT_EQ(r.report["status"], "fail");
}

TEST(Pipelines, CaseStudyGoldenNumbers) {
  const auto r = run_scenario(Pipeline::casestudy, load_config(kRoot / "configs/casestudy_ieee30.json"));
  ASSERT_EQ(r.exit_code, kExitSuccess) << r.report.dump(2);
  const auto& s = r.report["summary"];
  EXPECT_NEAR(s["optimal_good"].get<double>(), 2317.0, 1e-6);
  EXPECT_NEAR(s["reward"].get<double>(), 3358.0, 0.5);
  EXPECT_NEAR(s["total_investment"].get<double>(), 5675.0, 0.5);
  EXPECT_NEAR(s["generation_balance"].get<double>(), 18921.0, 0.5);
  EXPECT_NEAR(s["aggregate_payoff"].get<double>(), 15644.0, 1.0);
  EXPECT_EQ(r.report["problem"]["constraint_rows"], 103);
}

TEST(Pipelines, CaseStudyNeedsGrid) {
  const auto r = run_scenario(Pipeline::casestudy, parse_config(two_players(), "."));
  EXPECT_EQ(r.exit_code, kExitConfig);
  EXPECT_EQ(r.report["status"], "error");
}

TEST(Emit, WritesReportAndArtifactsDeterministically) {
  const auto cfg = load_config(kRoot / "configs/casestudy_ieee30.json");
  const fs::path a = scratch("a"), b = scratch("b");
  emit_report(run_scenario(Pipeline::casestudy, cfg), a);
  emit_report(run_scenario(Pipeline::casestudy, cfg), b);
  for (const char* f : {"report.json", "allocation.csv", "demand.csv", "lines.csv", "lp.txt"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  EXPECT_TRUE(Json::parse(slurp(a / "report.json")).contains("summary"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Emit, OutputDirPrecedence) {
  ScenarioConfig cfg = parse_config(two_players(), "/base");
  cfg.output_dir = "/from/config";
  ::unsetenv("LOTTERY_OUTPUT_DIR");
  EXPECT_EQ(resolve_output_dir(cfg, std::nullopt), fs::path("/from/config"));
  ::setenv("LOTTERY_OUTPUT_DIR", "/from/env", 1);
  EXPECT_EQ(resolve_output_dir(cfg, std::nullopt), fs::path("/from/env"));
  EXPECT_EQ(resolve_output_dir(cfg, std::string("/from/flag")), fs::path("/from/flag"));
  ::unsetenv("LOTTERY_OUTPUT_DIR");
}

TEST(Pipeline, NamesRoundTrip) {
  for (auto p : {Pipeline::equilibrium, Pipeline::analyze, Pipeline::design, Pipeline::casestudy}) {
    EXPECT_EQ(parse_pipeline(to_string(p)), p);
  }
  EXPECT_THROW(parse_pipeline("bogus"), ConfigError);
}
