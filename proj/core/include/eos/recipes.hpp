#pragma once

#include <string>
#include <vector>

#include "eos/config.hpp"
#include "eos/mlp.hpp"

namespace eos {

inline constexpr const char* kCodeVersion = "0.1.0";

struct RunManifest {
  std::string config_hash;
  std::string code_version = kCodeVersion;
  std::string started;
  std::string finished;

  struct Run {
    std::string id;
    std::string status;  ///< completed | diverged | incomplete | error
    std::string detail;
    std::vector<std::string> artifacts;
  };
  std::vector<Run> runs;

  bool any_error() const;
  void write(const std::string& path) const;
};

/// Loaded, normalized training/eval batches plus provenance metadata.
struct PreparedData {
  Batch train_batch;
  Batch eval_batch;
  std::string source;  ///< "idx" or "synthetic"
  std::vector<std::string> metadata;
  std::vector<std::string> warnings;
};

/// Resolves the dataset section: loads the IDX files when present, otherwise
/// (with synthetic_fallback) generates the deterministic synthetic corpus in
/// <dir>/synthetic and loads that through the same IDX path.
PreparedData prepare_data(const DatasetConfig& config);

/// Measured stability limit: trains at eta_probe tracking top-1 sharpness
/// until the early plateau (or the run's own 2/eta ceiling); the limit is
/// 2 / plateau sharpness.
struct StabilityMeasurement {
  double s_plateau = 0.0;
  double eta_limit = 0.0;
  int epochs_used = 0;
};

StabilityMeasurement measure_stability_limit(const MlpSpec& spec,
                                             const Eigen::VectorXd& init,
                                             const Batch& batch, double eta_probe,
                                             const ProbeConfig& probes,
                                             int max_epochs);

void recipe_dln_phase_map(const ExperimentConfig& config, RunManifest& manifest);
void recipe_rotation_tracking(const ExperimentConfig& config, RunManifest& manifest);
void recipe_landscape_movie(const ExperimentConfig& config, RunManifest& manifest);
void recipe_progressive_flattening(const ExperimentConfig& config,
                                   RunManifest& manifest, int workers);
void recipe_lr_sweep(const ExperimentConfig& config, RunManifest& manifest,
                     int workers);
void recipe_driver_interventions(const ExperimentConfig& config,
                                 RunManifest& manifest);

/// Dispatches the configured recipe and writes <output_dir>/manifest.txt.
RunManifest run_experiment(const ExperimentConfig& config, int workers = 1);

}  // namespace eos
