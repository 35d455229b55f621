#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "eos/mlp.hpp"
#include "eos/objective.hpp"
#include "eos/spectral.hpp"

namespace eos {

enum class ScheduleKind {
  kConstant,
  kWarmupThenConstant,
  kReduceAtEpoch,
  kReduceAtTrainAcc,
};

/// Learning-rate schedule. Warmup ramps linearly to eta0 over warmup_epochs;
/// the reduce_* kinds switch instantaneously (and permanently) to eta_small
/// when the trigger fires.
struct Schedule {
  ScheduleKind kind = ScheduleKind::kConstant;
  double eta0 = 0.0;
  double eta_small = 0.0;
  int trigger_epoch = 0;
  double trigger_acc = 1.0;
  int warmup_epochs = 0;

  static Schedule constant(double eta);
  static Schedule reduce_at_epoch(double eta0, double eta_small, int epoch);
  static Schedule reduce_at_train_acc(double eta0, double eta_small, double acc);

  void validate() const;
};

/// Directional learning-rate intervention over the span of the top-k
/// eigenvectors. `suppress` applies eta_base off-span and eta_unstable
/// on-span; `restrict_to` moves along the span only.
struct DirectionalEta {
  enum class Mode { kSuppress, kRestrictTo };
  double eta_base = 0.0;
  double eta_unstable = 0.0;
  int k = 1;
  Mode mode = Mode::kSuppress;
  /// When > 0, eta_unstable follows min(eta_base, fraction * 2/S) at every
  /// probe (the "effective stability" intervention).
  double track_stability_fraction = 0.0;
};

struct StepRecord {
  int epoch = 0;
  double loss = 0.0;
  std::optional<double> train_acc;
  std::optional<double> sharpness;
  double grad_norm = 0.0;
  std::optional<double> osc_dist;
  std::optional<double> alpha;
  std::vector<double> eigsim;  ///< per-vector similarity to the baseline
  std::optional<double> subspace_sim;
  double eta_used = 0.0;
};

struct PhaseSegment {
  int start_epoch = 0;
  int end_epoch = 0;
  bool unstable = false;
  double peak_osc = 0.0;
};

struct TrajectoryLog {
  std::vector<StepRecord> records;
  int top_k = 0;  ///< width of the eigsim columns
  bool diverged = false;
  bool completed = false;  ///< reached the >= 99.99% train-accuracy gate

  /// Header: epoch,loss,train_acc,sharpness,grad_norm,osc_dist,alpha,
  /// eigsim_1..k,subspace_sim,eta_used. Missing probes are empty fields.
  void write_csv(const std::string& path) const;
};

void write_segments_csv(const std::string& path,
                        const std::vector<PhaseSegment>& segments);

/// Probe configuration for train(). Spectra are the dominant cost; cadence,
/// k and warm starts are the knobs.
struct ProbeConfig {
  int cadence = 1;
  bool with_sharpness = true;
  int top_k = 0;  ///< 0: sharpness only; >0: track a k-spectrum + similarity
  int subspace_k = 3;
  bool with_alpha = false;
  AlphaMethod alpha_method = AlphaMethod::kNestedHvp;
  double alpha_step = 1e-4;
  double lanczos_tol = 1e-6;
  int lanczos_max_iter = 300;
  std::uint64_t seed = 0;
  bool warm_start = true;
  std::vector<int> baseline_epochs;  ///< snapshot starts for similarity
  int osc_window = 4;
};

struct TrainOptions {
  Schedule schedule;
  int max_epochs = 0;
  bool run_to_completion = false;
  ProbeConfig probes;
  std::optional<DirectionalEta> intervention;
  std::vector<int> checkpoint_epochs;
  int start_epoch = 0;
  /// Observes every probed spectrum (e.g. to log top-k eigenvalue traces).
  std::function<void(int, const Spectrum&)> spectrum_callback;
};

struct TrainResult {
  TrajectoryLog log;
  Eigen::VectorXd final_params;
  std::map<int, Eigen::VectorXd> checkpoints;
  /// Last probed spectrum (empty if spectra were never probed).
  Spectrum last_spectrum;
};

/// Exact update theta - eta * grad. Throws NonFinite if the result contains
/// a non-finite entry.
Eigen::VectorXd gd_step(const Eigen::VectorXd& params,
                        const Eigen::VectorXd& grad, double eta);

/// Splits g = g_sharp + g_perp against the top cfg.k eigenvectors and applies
/// the mode. Computed as theta - eta_base*g + (eta_base - eta_unstable)*
/// g_sharp in suppress mode, so eta_unstable == eta_base reproduces gd_step
/// bit-for-bit.
Eigen::VectorXd directional_gd_step(const Eigen::VectorXd& params,
                                    const Eigen::VectorXd& grad,
                                    const Spectrum& spectrum,
                                    const DirectionalEta& cfg);

/// Full-batch gradient descent under a schedule with probing. Deterministic:
/// identical inputs give a bit-identical log. Terminates at max_epochs,
/// divergence (non-finite loss or ||theta|| > 1e8), or train accuracy
/// >= 0.9999 when run_to_completion is set.
TrainResult train(const Objective& obj, Eigen::VectorXd init,
                  const TrainOptions& options);

/// Convenience overload for MLP specs.
TrainResult train(const MlpSpec& spec, const Eigen::VectorXd& init,
                  const Batch& batch, const TrainOptions& options);

/// theta* = mean of the window (which includes the current parameters as its
/// last entry); returns ||theta_current - theta*||.
double oscillation_distance(const std::vector<Eigen::VectorXd>& window);

/// Segments the logged osc_dist series at the turning points of its centered
/// moving average (width = smoothing). Rising runs are unstable, falling or
/// flat runs stable; adjacent same-label runs merge, so labels alternate.
/// Throws TooShort with fewer than 3 probed points.
std::vector<PhaseSegment> segment_phases(const TrajectoryLog& log, int smoothing);

struct SlicePoint {
  double offset = 0.0;
  double loss = 0.0;
  std::optional<double> sharpness;
};

struct SliceTable {
  std::vector<SlicePoint> points;
  void write_csv(const std::string& path) const;  ///< offset,loss,sharpness
};

/// Evaluates L(theta + s * dhat) (and optionally the top eigenvalue) for each
/// offset s, with dhat the unit direction.
SliceTable landscape_slice(const Objective& obj, const Eigen::VectorXd& params,
                           const Eigen::VectorXd& direction,
                           const std::vector<double>& offsets,
                           bool with_sharpness, const ProbeConfig& probes = {});

}  // namespace eos
