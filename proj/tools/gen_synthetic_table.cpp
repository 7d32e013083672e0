// Writes a synthetic input-output table as A.csv, R.csv and y.csv.
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>

#include <CLI11.hpp>

#include "csv_io.hpp"
#include "error.hpp"
#include "modelzoo.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Synthetic input-output table generator"};
  int dim = 10;
  double radius = 0.9;
  std::uint64_t seed = 2024;
  std::string out;
  app.add_option("--dim", dim, "Number of sectors")->check(CLI::PositiveNumber);
  app.add_option("--radius", radius, "Spectral radius of A")->check(CLI::Range(0.0, 1.0));
  app.add_option("--seed", seed, "Generator seed");
  app.add_option("--out", out, "Output directory")->required();
  CLI11_PARSE(app, argc, argv);
  try {
    std::filesystem::create_directories(out);
    eqcausal::save_iotable_csv(eqcausal::synthetic_iotable(dim, radius, seed),
                               eqcausal::IoTablePaths::in_directory(out));
  } catch (const std::exception& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 1;
  }
  return 0;
}
