#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "config.hpp"

namespace eqcausal {

inline constexpr const char* kLibraryVersion = "0.1.0";

/// Hex SHA-256 digest.
std::string sha256_hex(const std::string& data);
/// Throws IoError.
std::string sha256_file(const std::filesystem::path& path);

/// Layer shapes and row-major weights of a policy network.
nlohmann::json mlp_to_json(const MlpSpec& spec, const Vector& weights);
/// Throws ParseError or DimensionMismatch.
std::pair<MlpSpec, Vector> mlp_from_json(const nlohmann::json& doc);

struct StageReport {
  std::string name;
  bool ok = true;
  std::string message;
  double seconds = 0.0;
  nlohmann::json metrics = nlohmann::json::object();
};

struct OutputFile {
  std::string name;  // relative to the output directory
  std::string sha256;
  std::uintmax_t bytes = 0;
};

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::string library_version = kLibraryVersion;
  std::uint64_t seed = 0;
  std::string started_at;  // UTC, ISO 8601
  double wall_clock_seconds = 0.0;
  std::vector<StageReport> stages;
  std::vector<OutputFile> outputs;
  std::vector<OutputFile> inputs;
  std::vector<std::string> warnings;

  bool ok() const;
  int exit_code() const { return ok() ? 0 : 1; }
  nlohmann::json to_json() const;
};

/// Runs the configured pipeline, writing every result and manifest.json into
/// cfg.output. Stage failures are recorded, not thrown; later stages are
/// skipped. Throws IoError only when the output directory is unusable.
RunManifest run_experiment(const ExperimentConfig& cfg);

/// Worker count from EQCAUSAL_THREADS (default 1).
int thread_budget();

}  // namespace eqcausal
