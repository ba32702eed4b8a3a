// Command-line front end: runs a scenario pipeline from a JSON config and
// writes report.json plus CSV artifacts, or runs the acceptance self-test.
//
// Exit codes: 0 success, 1 config or IO error, 2 verification failure.

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "lottery/harness.hpp"
#include "lottery/testing/acceptance.hpp"

namespace {

struct Flags {
  std::string config;
  std::string out;
  std::optional<unsigned> workers;
  std::optional<std::uint64_t> seed;
};

int run_pipeline(lottery::Pipeline which, const Flags& f) {
  lottery::ScenarioConfig cfg;
  try {
    cfg = lottery::load_config(f.config);
  } catch (const lottery::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return lottery::kExitConfig;
  }
  if (f.workers) cfg.workers = *f.workers;
  if (f.seed) cfg.seed = *f.seed;
  const lottery::PipelineResult r = lottery::run_scenario(which, cfg);
  const auto dir = lottery::resolve_output_dir(cfg, f.out.empty() ? std::nullopt : std::optional<std::string>(f.out));
  try {
    lottery::emit_report(r, dir);
  } catch (const lottery::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return lottery::kExitConfig;
  }
  std::cout << lottery::to_string(which) << ": " << r.report.value("status", std::string("?")) << " -> "
            << (dir / "report.json").string() << "\n";
  if (r.report.contains("failure")) std::cerr << r.report["failure"].get<std::string>() << "\n";
  return r.exit_code;
}

int run_selftest(const std::string& root, std::optional<int> only, const Flags& f) {
  lottery::testing::AcceptanceOptions opt;
  opt.repo_root = root;
  if (f.seed) opt.seed = *f.seed;
  if (f.workers) opt.workers = *f.workers;
  bool all = true;
  for (const auto& r : lottery::testing::run_acceptance(opt, only)) {
    std::cout << lottery::testing::format_result(r) << "\n";
    all = all && r.passed;
  }
  return all ? lottery::kExitSuccess : lottery::kExitVerification;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Perturbed lottery games: equilibrium, efficiency analysis and optimal design"};
  app.require_subcommand(1);
  Flags flags;
  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("--config", flags.config, "Scenario config (JSON)");
    if (needs_config) opt->required()->check(CLI::ExistingFile);
    sub->add_option("--out", flags.out, "Output directory (overrides LOTTERY_OUTPUT_DIR and the config)");
    sub->add_option("--workers", flags.workers, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--seed", flags.seed, "Random seed");
  };
  std::optional<lottery::Pipeline> chosen;
  for (lottery::Pipeline p : {lottery::Pipeline::equilibrium, lottery::Pipeline::analyze, lottery::Pipeline::design,
                              lottery::Pipeline::casestudy}) {
    auto* sub = app.add_subcommand(lottery::to_string(p), std::string("Run the ") + lottery::to_string(p) + " pipeline");
    add_common(sub, true);
    sub->callback([&chosen, p] { chosen = p; });
  }
  std::string root = LOTTERY_SOURCE_DIR;
  std::optional<int> only;
  auto* self = app.add_subcommand("selftest", "Run acceptance criteria 1-8 and golden-number checks");
  add_common(self, false);
  self->add_option("--root", root, "Repository root holding configs/ and data/");
  self->add_option("--criterion", only, "Run a single criterion")->check(CLI::Range(1, 8));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : lottery::kExitConfig;
  }
  if (chosen) return run_pipeline(*chosen, flags);
  return run_selftest(root, only, flags);
}
