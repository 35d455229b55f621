#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "eos/data_io.hpp"
#include "eos/mlp.hpp"
#include "eos/trainer.hpp"

namespace eos {

/// Dataset section: where the IDX files live and how to carve the subsets.
struct DatasetConfig {
  std::string dir = "data/fmnist";
  int train_count = 1000;
  int eval_count = 200;
  SubsetSelection selection = SubsetSelection::kFirstN;
  std::uint64_t seed = 0;
  bool eval_from_test = true;  ///< eval from the official test file
  bool synthetic_fallback = true;
  int synthetic_train_pool = 2000;
  int synthetic_test_pool = 400;
};

struct SweepConfig {
  std::vector<double> etas;  ///< explicit list; overrides start/factor
  double start = 0.01;
  double factor = 1.1;
  int max_steps = 60;
  bool center_on_measured_limit = false;
  int count = 10;  ///< grid size when centered on the measured limit
};

struct DlnRecipeConfig {
  double theta1 = -0.1;
  double theta2 = 10.0;
  std::vector<double> coeffs = {1.0};
  std::vector<double> etas = {0.001, 0.0095, 0.011, 0.013};
  int steps = 10000;
  int curve_points = 400;
};

struct RotationConfig {
  int max_windows = 3;
  int min_window_epochs = 6;
  std::vector<int> reduction_offsets = {3};
  double reduction_factor = 0.2;
  std::vector<int> periods = {1, 2};
  int smoothing = 3;
  int margin_epochs = 4;
};

struct FlatteningConfig {
  std::vector<double> eta0_grid;
  std::vector<int> reduction_epochs;
  double eta_small = 0.01;
  double plateau_rel_change = 0.01;
  int plateau_window = 50;
  int max_epochs_after = 2000;
  bool include_control_row = false;
  double control_eta0 = 0.0;  ///< 0: use eta_small
};

struct InterventionConfig {
  int k = 8;
  int window_epochs = 40;
  int warm_epochs = 0;  ///< 0: auto (run until past the first EoS crossing)
  double effective_stability_fraction = 0.9;
  double flow_eta_factor = 0.1;
  int smoothing = 3;
};

struct LandscapeConfig {
  double max_offset = 0.0;  ///< 0: auto-scale from the last step length
  int offsets_per_side = 12;
  int stride_epochs = 2;
  bool with_sharpness = true;
};

struct ExperimentConfig {
  std::string recipe;
  std::string output_dir = "out";
  std::vector<std::uint64_t> seeds = {1};

  MlpSpec model;
  DatasetConfig dataset;
  Schedule schedule = Schedule::constant(0.01);
  ProbeConfig probes;
  int max_epochs = 1000;
  bool run_to_completion = false;

  SweepConfig sweep;
  DlnRecipeConfig dln;
  RotationConfig rotation;
  FlatteningConfig flattening;
  InterventionConfig interventions;
  LandscapeConfig landscape;

  /// Lowercase-hex SHA-256 of the raw config file (set by load).
  std::string config_hash;
  std::string source_path;
};

extern const char* const kKnownRecipes[6];

/// Parses and validates a JSON config file. Throws ConfigInvalid with
/// field/position diagnostics.
ExperimentConfig load_config(const std::string& path);

/// Validation only (also called by load_config).
void validate_config(const ExperimentConfig& config);

}  // namespace eos
