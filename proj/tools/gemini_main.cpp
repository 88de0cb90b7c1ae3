#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "gemini/config.hpp"
#include "gemini/experiment.hpp"

#include "CLI11.hpp"

// Experiment runner. Exit codes: 0 success, 2 invalid config or invocation,
// 3 training aborted on a non-finite objective, 1 anything else.
namespace {

std::string default_outdir() {
  const char* env = std::getenv("GEMINI_OUTDIR");
  return env && *env ? env : "out";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Clustering experiments driven by JSON configs"};
  app.require_subcommand(1);

  std::string config_path;
  std::string outdir = default_outdir();
  std::vector<std::uint64_t> seed_override;
  int threads = 1;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", config_path, "JSON experiment config")->required();
    sub->add_option("--outdir", outdir, "output directory (default $GEMINI_OUTDIR, then ./out)");
    sub->add_option("--seed", seed_override, "replace the config's seed list (repeatable)");
    sub->add_option("--threads", threads, "concurrent runs")->check(CLI::PositiveNumber);
  };
  CLI::App* run = app.add_subcommand("run", "train one objective over the config's seeds");
  CLI::App* sweep = app.add_subcommand("sweep", "train every objective in the config and aggregate a summary table");
  CLI::App* figures = app.add_subcommand("figures", "emit plot-ready CSVs for the config's figures section");
  add_common(run);
  add_common(sweep);
  add_common(figures);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  gemini::Command cmd = gemini::Command::Run;
  if (sweep->parsed()) cmd = gemini::Command::Sweep;
  if (figures->parsed()) cmd = gemini::Command::Figures;

  try {
    gemini::ExperimentConfig cfg = gemini::load_config(config_path);
    gemini::run_experiment(cfg, cmd, outdir, seed_override, threads, std::cout);
  } catch (const gemini::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const gemini::NonFiniteObjective& e) {
    std::cerr << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
