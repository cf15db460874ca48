#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nhtl/lattice.hpp"

namespace nhtl {

enum class ExperimentKind {
  spectrum_vs_intensity,
  tzm_profile,
  design_profile,
  localizer_scan,
  pump_evolve,
  steady_sweep,
  noise_ensemble,
  disorder_ensemble,
  lattice2d_modes,
  long_range_compare,
};

std::string to_string(ExperimentKind kind);

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::spectrum_vs_intensity;
  nlohmann::json raw;  // resolved and validated configuration document
};

struct ValidationError {
  std::string path;     // JSON pointer style, e.g. /spec/n_sites
  std::string message;
};

struct ValidatedConfig {
  bool ok = false;
  ExperimentConfig config;
  std::vector<ValidationError> errors;
};

/// Full structural and semantic validation. Unknown fields are errors, not
/// warnings; every violation carries its JSON path.
ValidatedConfig validate_config(const nlohmann::json& raw);

/// Named presets reproducing the library's reference experiments. Throws on
/// an unknown name.
nlohmann::json recipe_preset(const std::string& name);
std::vector<std::string> recipe_names();

/// Recursive merge: override keys win, objects merge, everything else is
/// replaced.
nlohmann::json merge_config(nlohmann::json base, const nlohmann::json& overrides);

/// Hash of the resolved config with execution-only fields (output_dir,
/// threads) stripped; stamped into every CSV the run emits.
std::uint64_t config_hash(const nlohmann::json& resolved);

struct RunOptions {
  std::filesystem::path output_dir;  // empty: taken from config, default "out"
  std::optional<std::uint64_t> seed_override;
  int threads = 0;  // 0: hardware concurrency
};

struct OutputFile {
  std::string name;
  std::uint64_t bytes = 0;
  std::uint64_t hash = 0;
};

struct ExperimentOutcome {
  int exit_code = 0;  // 0 ok, 3 numerical non-convergence (partial outputs kept)
  std::filesystem::path output_dir;
  std::vector<OutputFile> files;
  nlohmann::json summary;
};

/// Dispatches to the module operations, writes the data CSVs, a manifest of
/// (hash, size, name) for every data file, and summary.json. Re-running the
/// same config and seed reproduces the CSVs byte for byte.
ExperimentOutcome run_experiment(const ExperimentConfig& config, const RunOptions& options);

}  // namespace nhtl
