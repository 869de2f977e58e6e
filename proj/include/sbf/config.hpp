#pragma once

// Experiment configuration: JSON with unit-suffixed keys. Every field has a
// default; the defaults describe the 60x60 reference array of the lab setup.

#include <cstdint>
#include <string>
#include <vector>

#include "sbf/beamfocus.hpp"
#include "sbf/transfer.hpp"

namespace sbf {

enum class ExperimentKind {
  train_baseline,
  train_pp,
  blend,
  similarity_map,
  power_map,
  monte_carlo_blend,
  orthogonality_probe,
};

const char* experiment_kind_name(ExperimentKind kind);

struct ConvergenceConfig {
  double fraction = 0.9;
  int window = 500;
};

struct SimilarityConfig {
  int reference_subarray = -1;          // -1 selects the center subarray
  std::vector<double> theta_deg{0.0, 90.0};
  bool trained = false;                 // PDIs from training instead of the CSI oracle
};

struct PowerMapConfig {
  std::vector<double> eta{0.5, 0.7, 0.9};
  std::string pdi_path;                 // optional full-aperture phase CSV; oracle otherwise
};

struct MonteCarloConfig {
  int library_size = 10;                // N^lib
  int new_points = 10;
  double min_distance_m = 1.0;
  double max_distance_m = 2.0;
  std::vector<int> component_counts{1, 3};
  long library_budget = 20000;
};

struct OrthogonalityConfig {
  std::vector<int> sizes{4, 8, 16};     // square apertures of size x size
  int trials = 50;
  double separation_m = 0.1;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::train_baseline;
  std::uint64_t master_seed = 1;
  std::string output_dir = "runs/default";
  Scene scene;
  AgentConfig agent;
  PropagationConfig propagation;
  BlendingConfig blending;
  long train_budget = 20000;            // baseline and scratch training
  std::vector<int> subarrays;           // baseline subset; empty = all
  bool scratch_baseline = true;         // train-pp: also train transferred students from scratch
  bool fine_tune_baseline = false;      // train-pp: also fine-tune them with the other rule (needs scratch_baseline)
  std::string library_path;             // blend: library to read (and extend)
  ConvergenceConfig convergence;
  ReferencePlane plane;
  SimilarityConfig similarity;
  PowerMapConfig power_map;
  MonteCarloConfig monte_carlo;
  OrthogonalityConfig orthogonality;

  void validate() const;
};

// Parses JSON text; unknown keys and malformed values are ConfigErrors.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
// Canonical JSON with every field, suitable for re-running.
std::string dump_config(const ExperimentConfig& config);

}  // namespace sbf
