#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "csv_io.hpp"
#include "optimize.hpp"

namespace eqcausal {

enum class Command { Solve, GradCheck, Optimize, Pareto, Invariant, Compartment, Bench };

std::string_view to_string(Command c);
/// Throws SchemaError.
Command command_from_string(std::string_view name);

/// Zoo id or the three CSV files of an input-output table.
struct ModelSource {
  std::string zoo;  // empty when csv is set
  std::optional<IoTablePaths> csv;

  /// Dimension of "leontief-synthetic-N", else 0.
  int synthetic_dim() const;
  bool has_table() const { return csv.has_value() || synthetic_dim() > 0; }
};

struct InterventionDecl {
  LieGroup group = LieGroup::Multiplicative;
  std::vector<int> targets;  // empty: every node
  std::vector<double> lo;    // one value broadcasts; empty: 0.5 (mult) or unbounded
  std::vector<double> hi;
  std::vector<double> initial;  // empty: identity
};

struct LossDecl {
  std::string objective = "ghg";
  std::string regularizer = "employment";
  double lambda = 0.0;
  std::vector<double> lambdas;  // pareto only
};

struct GradCheckSettings {
  double step = 1e-4;
  double tolerance = 1e-3;
};

struct InvariantSettings {
  std::vector<int> hidden = {20, 10};
  double target_elasticity = 2.0;
  int eval_samples = 200;
  double tolerance = 0.02;
  std::vector<double> elasticities = {0.0, 0.5, 1.0, 2.0, 3.0};
  std::vector<double> u_grid = {0.6, 0.7, 0.8, 0.9};
};

struct CompartmentSettings {
  std::vector<int> hidden = {20, 10};
  std::vector<double> grid = {0.5, 0.75, 1.0, 1.5, 2.0};
  int theta_samples = 5;
  double tolerance = 0.02;
  double min_own_variation = 0.1;
};

struct BenchMethod {
  std::string label;
  SolverConfig solver;
};

struct BenchSettings {
  std::vector<int> dims = {2, 10, 50, 100, 200};
  int seeds = 20;
  double radius = 0.9;
  std::vector<BenchMethod> methods;  // empty: forward, anderson beta 1, anderson beta 2
};

struct ExperimentConfig {
  Command command = Command::Solve;
  ModelSource model;
  SolverConfig solver;
  AdamConfig adam;
  SamplingConfig sampling;
  bool u_range_given = false;  // otherwise the model's default range
  InterventionDecl intervention;
  LossDecl loss;
  GradCheckSettings grad_check;
  InvariantSettings invariant;
  CompartmentSettings compartment;
  BenchSettings bench;
  std::filesystem::path output = "out";
  std::uint64_t seed = 0;
};

/// Parses and fully defaults a config document. Relative paths resolve
/// against `base_dir`. Throws SchemaError naming the JSON pointer of the
/// offending value; unknown fields are rejected.
ExperimentConfig parse_config(const nlohmann::json& doc,
                              const std::filesystem::path& base_dir = {});
/// Throws IoError, ParseError (invalid JSON) or SchemaError.
ExperimentConfig load_config(const std::filesystem::path& path);

/// The fully defaulted config in the input format. The output directory is
/// left out so the document identifies the computation, not where it lands.
nlohmann::json config_to_json(const ExperimentConfig& cfg);

}  // namespace eqcausal
