// modeswitch: command-line driver for the optimal switching solver.
//
//   modeswitch run <config> [--out DIR] [--scheme picard|penalized|both] [--seed N]
//
// Exit codes: 0 success, 1 usage/config/runtime error, 2 validation failure,
// 3 non-convergence, 4 check failure.
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "modeswitch/config.hpp"
#include "modeswitch/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Infinite-horizon optimal switching solver"};
  app.require_subcommand(1);

  auto* run_cmd = app.add_subcommand("run", "Solve, cross-check and simulate the problem described by a config file");
  std::string config_path;
  std::optional<std::string> out_dir;
  std::optional<std::string> scheme;
  std::optional<std::uint64_t> seed;
  run_cmd->add_option("config", config_path, "Path to the configuration file")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--out", out_dir, "Output directory (overrides [output] directory)");
  run_cmd->add_option("--scheme", scheme, "Solver scheme (overrides [solver] scheme)")
      ->check(CLI::IsMember({"picard", "penalized", "both"}));
  run_cmd->add_option("--seed", seed, "Strategy simulation seed (overrides [strategy] seed)");

  CLI11_PARSE(app, argc, argv);

  try {
    modeswitch::RunSpec spec = modeswitch::load_config(config_path);
    if (scheme) spec.solver.scheme = *modeswitch::parse_scheme(*scheme);
    if (seed) spec.strategy.seed = *seed;
    const std::string dir = out_dir.value_or(spec.output.directory);
    const auto outcome = modeswitch::run(spec, dir);
    std::cout << "status: " << modeswitch::status_name(outcome.exit_code) << " (report: " << dir << "/report.txt)\n";
    for (const auto& f : outcome.failures) std::cerr << "failed: " << f << "\n";
    return outcome.exit_code;
  } catch (const modeswitch::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return modeswitch::kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return modeswitch::kExitError;
  }
}
