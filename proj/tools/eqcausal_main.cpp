#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "eqcausal/eqcausal.h"

int main(int argc, char** argv) {
  CLI::App app{"Equilibrium causal models: solve, differentiate and intervene"};
  app.set_version_flag("--version", std::string(eqc_version()));

  std::string command;
  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  app.add_option("command", command, "Pipeline to run")
      ->required()
      ->check(CLI::IsMember(
          {"solve", "grad-check", "optimize", "pareto", "invariant", "compartment", "bench"}));
  app.add_option("--config", config, "Experiment config (JSON)")->required();
  app.add_option("--out", out, "Output directory, overrides the config");
  app.add_option("--seed", seed, "Seed, overrides the config");
  app.footer("Exit codes: 0 success, 1 stage failure, 2 config or parse error.\n"
             "EQCAUSAL_THREADS caps the worker threads (default 1).");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  int exit_code = 2;
  const eqc_status st = eqc_run_config(config.c_str(), command.c_str(),
                                       out ? out->c_str() : nullptr, seed ? &*seed : nullptr,
                                       &exit_code);
  if (st != EQC_OK || exit_code != 0) {
    std::fprintf(stderr, "eqcausal: %s\n", eqc_last_error());
  }
  return exit_code;
}
