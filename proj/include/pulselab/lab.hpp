#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pulselab/evolve.hpp"
#include "pulselab/pulse.hpp"
#include "pulselab/surface.hpp"

namespace pulselab {

using nlohmann::json;

enum class ExperimentKind { Pulse, Spectrum, Stability, WarpedPersistence, SemigroupPerturbation };

std::string to_string(ExperimentKind k);
ExperimentKind experiment_kind_from_string(const std::string& s);

struct PerturbationSpec {
  double amplitude = 1e-3;
  std::vector<double> sweep;  // non-empty: one member run per amplitude
  bool q_projected = true;
  std::string shape = "smooth";  // "smooth" (random Gaussian bumps) or "band" (band-limited noise)
};

struct RunControls {
  double T = 4000.0;
  double dt = 0.05;
  Scheme scheme = Scheme::EtdRk2;
  int output_stride = 40;     // steps between recorded samples
  double dense_until = 10.0;  // sample every step before this time
  std::string output_dir = "pulse-lab-out";
};

struct SemigroupSpec {
  int N_z = 256;
  double L_z = 8.0 * 3.14159265358979323846;
  int n_max = 2;
  double t_min = 1e-3;
  double t_max = 10.0;
  int probes = 4;
  int norm_trials = 100;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::Pulse;
  Params params;
  // Unset L_z/N_z select the grid sized for the pulse tails.
  std::optional<double> L_z;
  std::optional<int> N_z;
  int N_theta = 1;
  RadiusFamily radius;
  std::vector<double> deltas;  // warp sweep; each delta sets the sine-bump amplitude
  PerturbationSpec perturbation;
  RunControls run;
  SemigroupSpec semigroup;
  unsigned long long seed = 1;

  // Fully expanded configuration (defaults included).
  json to_json() const;
};

// Defaults per kind before any file or flag is applied.
ExperimentConfig default_config(ExperimentKind kind);

// Parses and validates a config. Syntax errors, unknown keys and bad values
// raise InvalidConfig with "source:line:column: message".
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);
// Merges `overrides` (a key tree) into the text's tree before validation.
ExperimentConfig parse_config(const std::string& text, const json& overrides,
                              const std::string& source);
ExperimentConfig config_from_json(const json& tree, ExperimentKind fallback_kind);

struct Check {
  std::string name;
  double value = 0.0;
  std::string relation;  // "<=", ">=", "in"
  double lo = 0.0, hi = 0.0;
  bool pass = false;
  bool informational = false;  // reported but not part of the verdict
};

struct ManifestEntry {
  std::string file;  // relative to the run directory
  std::string sha256;
  std::uintmax_t bytes = 0;
};

struct Report {
  ExperimentKind kind = ExperimentKind::Pulse;
  json config;
  json derived = json::object();  // name -> {"value", "source"}
  std::vector<Check> checks;
  std::vector<ManifestEntry> manifest;
  std::vector<std::string> warnings;
  unsigned long long seed = 0;
  bool failed = false;  // an error stopped the run
  std::string error;
  double seconds = 0.0;

  // No error and every non-informational check passes.
  bool passed() const;
  json to_json() const;
};

// Runs one experiment and writes report.json plus its data files into
// config.run.output_dir. Sweeps (perturbation.sweep, several deltas) run their
// members concurrently in subdirectories and add a combined scaling report.
// Module errors mark the report failed instead of propagating.
Report run(const ExperimentConfig& config);

// Recomputes the hashes of a report's manifest; lists the files that differ.
std::vector<std::string> verify_manifest(const std::filesystem::path& run_dir);

// Worker count for sweeps: PULSE_LAB_THREADS when set and positive, else the
// hardware concurrency.
int thread_cap();

}  // namespace pulselab
