#include <iostream>

#include <CLI11.hpp>

#include "unravel/harness.hpp"
#include "unravel/version.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Quantum measurement unraveling: trajectories, ensembles, master equation, cavity probes"};
  app.set_version_flag("--version", std::string(unravel::kVersion));
  app.require_subcommand(1, 1);

  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> out_dir;

  for (const char* name : {"trajectory", "ensemble", "lindblad", "cavity", "verify"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config,-c", config, "JSON experiment configuration");
    sub->add_option("--seed,-s", seed, "master seed (overrides the config)");
    sub->add_option("--workers,-w", workers, "worker threads (overrides config and UNRAVEL_WORKERS)");
    sub->add_option("--out,-o", out_dir, "output directory (overrides the config)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const auto mode = unravel::mode_from_string(app.get_subcommands().front()->get_name());
  if (mode != unravel::Mode::Verify && !config) {
    std::cerr << "error: --config is required for " << unravel::to_string(mode) << std::endl;
    return 2;
  }

  unravel::Overrides overrides;
  overrides.master_seed = seed;
  overrides.workers = workers;
  if (out_dir) overrides.output_dir = *out_dir;

  unravel::ExperimentConfig cfg;
  try {
    cfg = unravel::load_config(mode, config ? std::optional<std::filesystem::path>(*config) : std::nullopt,
                               overrides);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << std::endl;
    return 2;
  }
  return unravel::run(cfg, std::cout, std::cerr);
}
