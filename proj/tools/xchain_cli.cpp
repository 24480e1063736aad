#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "xchain/scenario.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Cross-chain contract simulator"};
  app.require_subcommand(0, 1);

  bool print_config_flag = false;
  app.add_flag("--print-config", print_config_flag, "Print every scenario parameter with defaults");

  std::string default_out = ".";
  if (const char* env = std::getenv(xchain::kOutDirEnv)) default_out = env;

  std::string run_scenario;
  std::string run_out = default_out;
  std::optional<std::uint64_t> run_seed;
  unsigned run_parallel = 1;
  auto* run = app.add_subcommand("run", "Run a scenario or sweep");
  run->add_option("scenario", run_scenario, "Scenario JSON file")->required();
  run->add_option("--out", run_out, "Output directory");
  run->add_option("--seed", run_seed, "Override the scenario seed");
  run->add_option("--parallel", run_parallel, "Sweep points run concurrently")
      ->check(CLI::PositiveNumber);

  std::string attack_scenario;
  std::string attack_out = default_out;
  auto* attack = app.add_subcommand("attack", "Run an adversarial scenario");
  attack->add_option("scenario", attack_scenario, "Scenario JSON file")->required();
  attack->add_option("--out", attack_out, "Output directory");

  std::string pc_scenario;
  auto* print_config = app.add_subcommand("print-config", "Print the resolved scenario");
  print_config->add_option("scenario", pc_scenario, "Scenario JSON file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : xchain::kExitConfig;
  }

  if (*run) {
    return xchain::cmd_run(run_scenario, run_out, run_seed, run_parallel, std::cout, std::cerr);
  }
  if (*attack) return xchain::cmd_attack(attack_scenario, attack_out, std::cout, std::cerr);
  if (*print_config || print_config_flag) {
    std::optional<std::filesystem::path> path;
    if (!pc_scenario.empty()) path = pc_scenario;
    return xchain::cmd_print_config(path, std::cout, std::cerr);
  }
  std::cout << app.help();
  return xchain::kExitConfig;
}
