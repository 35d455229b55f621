#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

namespace eos {

enum class Activation { kIdentity, kRelu };
enum class LossKind { kMse, kCrossEntropy };

/// Fully-connected network description: layer widths h0..hd, one activation
/// per hidden layer (the output layer is affine), loss kind, and the
/// initialization seed.
struct MlpSpec {
  std::vector<int> layer_widths;
  std::vector<Activation> activations;  ///< size depth()-1
  LossKind loss_kind = LossKind::kMse;
  std::uint64_t seed = 0;

  int depth() const { return static_cast<int>(layer_widths.size()) - 1; }
  int input_dim() const { return layer_widths.front(); }
  int output_dim() const { return layer_widths.back(); }
  int param_count() const;

  /// 4 hidden layers of width 32, ReLU, cross-entropy.
  static MlpSpec mlp4x32(int input_dim, int classes, std::uint64_t seed);

  void validate() const;
};

/// A full batch: inputs are samples x h0. Classification batches carry
/// integer labels, regression batches a targets matrix (samples x hd).
struct Batch {
  Eigen::MatrixXd inputs;
  Eigen::VectorXi labels;
  Eigen::MatrixXd targets;

  Eigen::Index size() const { return inputs.rows(); }
  bool classification() const { return labels.size() > 0; }
};

/// Flat parameter layout: all weight matrices (row-major), layer by layer,
/// followed by all bias vectors.
struct ParamLayout {
  std::vector<int> w_offset;
  std::vector<int> b_offset;
  int total = 0;

  explicit ParamLayout(const MlpSpec& spec);
};

/// Deterministic initialization: He-uniform before ReLU, Glorot-uniform
/// before identity (and for the output layer); biases zero. The same seed
/// yields a bit-identical vector on any platform.
Eigen::VectorXd init_params(const MlpSpec& spec);

struct ForwardResult {
  Eigen::MatrixXd outputs;
  double loss = 0.0;
};

ForwardResult forward(const MlpSpec& spec, const Eigen::VectorXd& params,
                      const Batch& batch);

/// Reverse-mode gradient of the batch-mean loss. Optionally reports the loss
/// value of the same pass.
Eigen::VectorXd gradient(const MlpSpec& spec, const Eigen::VectorXd& params,
                         const Batch& batch, double* loss_out = nullptr);

/// H(params) * v by forward-over-reverse directional differentiation; never
/// forms the Hessian. ReLU curvature at kinks is taken as zero.
Eigen::VectorXd hvp(const MlpSpec& spec, const Eigen::VectorXd& params,
                    const Batch& batch, const Eigen::VectorXd& v);

/// Fraction of samples whose argmax output matches the label.
double train_accuracy(const MlpSpec& spec, const Eigen::VectorXd& params,
                      const Batch& batch);

/// Explicit Hessian of an identity-activation, single-output, MSE network,
/// assembled through the summation-over-multiplications path expansion
/// (every weight/bias path enumerated). Serves as an independent oracle for
/// hvp columns. Throws Unsupported for ReLU activations, multi-output nets,
/// cross-entropy loss, or more than 2048 parameters.
Eigen::MatrixXd som_linear_hessian(const MlpSpec& spec,
                                   const Eigen::VectorXd& params,
                                   const Batch& batch);

/// Per-hidden-layer 0/1 activation patterns (samples x h_l); identity layers
/// report all-ones.
std::vector<Eigen::MatrixXi> relu_masks(const MlpSpec& spec,
                                        const Eigen::VectorXd& params,
                                        const Batch& batch);

}  // namespace eos
