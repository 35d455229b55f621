#include "eos/mlp.hpp"

#include <cmath>
#include <stdexcept>

#include "eos/errors.hpp"
#include "eos/rng.hpp"

namespace eos {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

Eigen::Map<const MatrixXd> weight(const VectorXd& p, const ParamLayout& lay,
                                  const MlpSpec& spec, int l) {
  // Stored row-major (h_l x h_{l-1}); mapped as the column-major transpose
  // (h_{l-1} x h_l) so that Z = A * Wmap needs no copies.
  return {p.data() + lay.w_offset[static_cast<std::size_t>(l)],
          spec.layer_widths[static_cast<std::size_t>(l)],
          spec.layer_widths[static_cast<std::size_t>(l + 1)]};
}

Eigen::Map<const VectorXd> bias(const VectorXd& p, const ParamLayout& lay,
                                const MlpSpec& spec, int l) {
  return {p.data() + lay.b_offset[static_cast<std::size_t>(l)],
          spec.layer_widths[static_cast<std::size_t>(l + 1)]};
}

Eigen::Map<MatrixXd> weight_mut(VectorXd& p, const ParamLayout& lay,
                                const MlpSpec& spec, int l) {
  return {p.data() + lay.w_offset[static_cast<std::size_t>(l)],
          spec.layer_widths[static_cast<std::size_t>(l)],
          spec.layer_widths[static_cast<std::size_t>(l + 1)]};
}

Eigen::Map<VectorXd> bias_mut(VectorXd& p, const ParamLayout& lay,
                              const MlpSpec& spec, int l) {
  return {p.data() + lay.b_offset[static_cast<std::size_t>(l)],
          spec.layer_widths[static_cast<std::size_t>(l + 1)]};
}

void check_shapes(const MlpSpec& spec, const VectorXd& params, const Batch& batch) {
  spec.validate();
  if (params.size() != spec.param_count())
    throw ShapeMismatch("parameter vector length does not match the spec");
  if (batch.inputs.cols() != spec.input_dim())
    throw ShapeMismatch("batch input width does not match h0");
  if (batch.size() == 0) throw ShapeMismatch("empty batch");
  if (spec.loss_kind == LossKind::kCrossEntropy) {
    if (!batch.classification())
      throw ShapeMismatch("cross-entropy batch needs labels");
    if (batch.labels.size() != batch.size())
      throw ShapeMismatch("label count does not match batch size");
    for (Index i = 0; i < batch.labels.size(); ++i)
      if (batch.labels[i] < 0 || batch.labels[i] >= spec.output_dim())
        throw ShapeMismatch("label out of range");
  } else {
    if (batch.targets.rows() != batch.size() ||
        batch.targets.cols() != spec.output_dim())
      throw ShapeMismatch("target matrix shape does not match the batch");
  }
}

struct ForwardPass {
  std::vector<MatrixXd> pre;   // Z_1..Z_d
  std::vector<MatrixXd> act;   // A_0..A_d
};

Activation layer_activation(const MlpSpec& spec, int l) {
  // Layer l produces A_l; hidden layers 1..d-1 apply their activation.
  if (l < spec.depth())
    return spec.activations[static_cast<std::size_t>(l - 1)];
  return Activation::kIdentity;
}

void run_forward(const MlpSpec& spec, const VectorXd& params,
                 const ParamLayout& lay, const Batch& batch, ForwardPass& fp) {
  const int d = spec.depth();
  fp.pre.resize(static_cast<std::size_t>(d));
  fp.act.resize(static_cast<std::size_t>(d) + 1);
  fp.act[0] = batch.inputs;
  for (int l = 1; l <= d; ++l) {
    MatrixXd& z = fp.pre[static_cast<std::size_t>(l - 1)];
    z.noalias() = fp.act[static_cast<std::size_t>(l - 1)] * weight(params, lay, spec, l - 1);
    z.rowwise() += bias(params, lay, spec, l - 1).transpose();
    if (layer_activation(spec, l) == Activation::kRelu)
      fp.act[static_cast<std::size_t>(l)] = z.cwiseMax(0.0);
    else
      fp.act[static_cast<std::size_t>(l)] = z;
  }
}

/// Row-wise stabilized log-sum-exp and softmax.
void softmax_rows(const MatrixXd& z, MatrixXd& probs, VectorXd& lse) {
  const VectorXd rowmax = z.rowwise().maxCoeff();
  probs = (z.colwise() - rowmax).array().exp();
  const VectorXd sums = probs.rowwise().sum();
  lse = rowmax.array() + sums.array().log();
  probs.array().colwise() /= sums.array();
}

double loss_value(const MlpSpec& spec, const Batch& batch, const MatrixXd& out) {
  const double n = static_cast<double>(batch.size());
  if (spec.loss_kind == LossKind::kMse) {
    const double denom = n * static_cast<double>(spec.output_dim());
    return (out - batch.targets).squaredNorm() / denom;
  }
  MatrixXd probs;
  VectorXd lse;
  softmax_rows(out, probs, lse);
  double acc = 0.0;
  for (Index i = 0; i < batch.size(); ++i)
    acc += lse[i] - out(i, batch.labels[i]);
  return acc / n;
}

/// dL/d(output pre-activations), plus softmax probabilities for CE.
MatrixXd loss_output_grad(const MlpSpec& spec, const Batch& batch,
                          const MatrixXd& out, MatrixXd* probs_out) {
  const double n = static_cast<double>(batch.size());
  if (spec.loss_kind == LossKind::kMse) {
    const double denom = n * static_cast<double>(spec.output_dim());
    return 2.0 * (out - batch.targets) / denom;
  }
  MatrixXd probs;
  VectorXd lse;
  softmax_rows(out, probs, lse);
  MatrixXd g = probs;
  for (Index i = 0; i < batch.size(); ++i) g(i, batch.labels[i]) -= 1.0;
  g /= n;
  if (probs_out) *probs_out = std::move(probs);
  return g;
}

}  // namespace

int MlpSpec::param_count() const {
  int n = 0;
  for (int l = 1; l <= depth(); ++l) {
    n += layer_widths[static_cast<std::size_t>(l)] *
         layer_widths[static_cast<std::size_t>(l - 1)];
    n += layer_widths[static_cast<std::size_t>(l)];
  }
  return n;
}

MlpSpec MlpSpec::mlp4x32(int input_dim, int classes, std::uint64_t seed) {
  MlpSpec s;
  s.layer_widths = {input_dim, 32, 32, 32, 32, classes};
  s.activations.assign(4, Activation::kRelu);
  s.loss_kind = LossKind::kCrossEntropy;
  s.seed = seed;
  return s;
}

void MlpSpec::validate() const {
  if (layer_widths.size() < 2)
    throw ShapeMismatch("MlpSpec: need at least one layer");
  for (int w : layer_widths)
    if (w <= 0) throw ShapeMismatch("MlpSpec: nonpositive layer width");
  if (activations.size() != static_cast<std::size_t>(depth() - 1))
    throw ShapeMismatch("MlpSpec: one activation per hidden layer required");
}

ParamLayout::ParamLayout(const MlpSpec& spec) {
  const int d = spec.depth();
  w_offset.resize(static_cast<std::size_t>(d));
  b_offset.resize(static_cast<std::size_t>(d));
  int off = 0;
  for (int l = 0; l < d; ++l) {
    w_offset[static_cast<std::size_t>(l)] = off;
    off += spec.layer_widths[static_cast<std::size_t>(l)] *
           spec.layer_widths[static_cast<std::size_t>(l + 1)];
  }
  for (int l = 0; l < d; ++l) {
    b_offset[static_cast<std::size_t>(l)] = off;
    off += spec.layer_widths[static_cast<std::size_t>(l + 1)];
  }
  total = off;
}

Eigen::VectorXd init_params(const MlpSpec& spec) {
  spec.validate();
  const ParamLayout lay(spec);
  VectorXd p = VectorXd::Zero(lay.total);
  for (int l = 0; l < spec.depth(); ++l) {
    const int fan_in = spec.layer_widths[static_cast<std::size_t>(l)];
    const int fan_out = spec.layer_widths[static_cast<std::size_t>(l + 1)];
    const bool relu_next = l + 1 < spec.depth() &&
        spec.activations[static_cast<std::size_t>(l)] == Activation::kRelu;
    const double bound = relu_next ? std::sqrt(6.0 / fan_in)
                                   : std::sqrt(6.0 / (fan_in + fan_out));
    CounterRng rng(spec.seed, static_cast<std::uint64_t>(l));
    auto w = weight_mut(p, lay, spec, l);
    // Draw in row-major storage order.
    for (int r = 0; r < fan_out; ++r)
      for (int c = 0; c < fan_in; ++c) w(c, r) = rng.uniform(-bound, bound);
  }
  return p;
}

ForwardResult forward(const MlpSpec& spec, const VectorXd& params,
                      const Batch& batch) {
  check_shapes(spec, params, batch);
  const ParamLayout lay(spec);
  ForwardPass fp;
  run_forward(spec, params, lay, batch, fp);
  ForwardResult res;
  res.outputs = fp.act.back();
  res.loss = loss_value(spec, batch, res.outputs);
  return res;
}

Eigen::VectorXd gradient(const MlpSpec& spec, const VectorXd& params,
                         const Batch& batch, double* loss_out) {
  check_shapes(spec, params, batch);
  const ParamLayout lay(spec);
  const int d = spec.depth();

  ForwardPass fp;
  run_forward(spec, params, lay, batch, fp);
  if (loss_out) *loss_out = loss_value(spec, batch, fp.act.back());

  VectorXd grad = VectorXd::Zero(lay.total);
  MatrixXd g = loss_output_grad(spec, batch, fp.act.back(), nullptr);
  for (int l = d; l >= 1; --l) {
    weight_mut(grad, lay, spec, l - 1).noalias() =
        fp.act[static_cast<std::size_t>(l - 1)].transpose() * g;
    bias_mut(grad, lay, spec, l - 1) = g.colwise().sum().transpose();
    if (l == 1) break;
    MatrixXd gprev;
    gprev.noalias() = g * weight(params, lay, spec, l - 1).transpose();
    if (layer_activation(spec, l - 1) == Activation::kRelu)
      gprev.array() *=
          (fp.pre[static_cast<std::size_t>(l - 2)].array() > 0.0).cast<double>();
    g = std::move(gprev);
  }
  return grad;
}

Eigen::VectorXd hvp(const MlpSpec& spec, const VectorXd& params,
                    const Batch& batch, const VectorXd& v) {
  check_shapes(spec, params, batch);
  if (v.size() != params.size())
    throw ShapeMismatch("hvp: direction length does not match parameters");
  const ParamLayout lay(spec);
  const int d = spec.depth();
  const double n = static_cast<double>(batch.size());

  ForwardPass fp;
  run_forward(spec, params, lay, batch, fp);

  // Forward tangents R(Z_l), R(A_l) along v.
  std::vector<MatrixXd> rpre(static_cast<std::size_t>(d));
  MatrixXd ra = MatrixXd::Zero(batch.size(), spec.input_dim());
  for (int l = 1; l <= d; ++l) {
    MatrixXd& rz = rpre[static_cast<std::size_t>(l - 1)];
    rz.noalias() = fp.act[static_cast<std::size_t>(l - 1)] * weight(v, lay, spec, l - 1);
    if (l > 1) rz.noalias() += ra * weight(params, lay, spec, l - 1);
    rz.rowwise() += bias(v, lay, spec, l - 1).transpose();
    if (l == d) break;
    if (layer_activation(spec, l) == Activation::kRelu)
      ra = rz.cwiseProduct(
          (fp.pre[static_cast<std::size_t>(l - 1)].array() > 0.0).cast<double>().matrix());
    else
      ra = rz;
  }

  // Loss layer: G and R(G) at the output pre-activations.
  MatrixXd probs;
  MatrixXd g = loss_output_grad(spec, batch, fp.act.back(), &probs);
  MatrixXd rg;
  if (spec.loss_kind == LossKind::kMse) {
    const double denom = n * static_cast<double>(spec.output_dim());
    rg = 2.0 * rpre[static_cast<std::size_t>(d - 1)] / denom;
  } else {
    const MatrixXd& rz = rpre[static_cast<std::size_t>(d - 1)];
    const VectorXd dot = (probs.array() * rz.array()).rowwise().sum();
    rg = (probs.array() * (rz.colwise() - dot).array()) / n;
  }

  // Reverse sweep carrying (G_l, R(G_l)); accumulate R(grad).
  VectorXd out = VectorXd::Zero(lay.total);
  std::vector<MatrixXd> racts(static_cast<std::size_t>(d) + 1);
  racts[0] = MatrixXd::Zero(batch.size(), spec.input_dim());
  for (int l = 1; l < d; ++l) {
    if (layer_activation(spec, l) == Activation::kRelu)
      racts[static_cast<std::size_t>(l)] = rpre[static_cast<std::size_t>(l - 1)].cwiseProduct(
          (fp.pre[static_cast<std::size_t>(l - 1)].array() > 0.0).cast<double>().matrix());
    else
      racts[static_cast<std::size_t>(l)] = rpre[static_cast<std::size_t>(l - 1)];
  }

  for (int l = d; l >= 1; --l) {
    weight_mut(out, lay, spec, l - 1).noalias() =
        fp.act[static_cast<std::size_t>(l - 1)].transpose() * rg +
        racts[static_cast<std::size_t>(l - 1)].transpose() * g;
    bias_mut(out, lay, spec, l - 1) = rg.colwise().sum().transpose();
    if (l == 1) break;
    MatrixXd gprev, rgprev;
    gprev.noalias() = g * weight(params, lay, spec, l - 1).transpose();
    rgprev.noalias() = rg * weight(params, lay, spec, l - 1).transpose();
    rgprev.noalias() += g * weight(v, lay, spec, l - 1).transpose();
    if (layer_activation(spec, l - 1) == Activation::kRelu) {
      const auto mask =
          (fp.pre[static_cast<std::size_t>(l - 2)].array() > 0.0).cast<double>();
      gprev.array() *= mask;
      rgprev.array() *= mask;
    }
    g = std::move(gprev);
    rg = std::move(rgprev);
  }
  return out;
}

double train_accuracy(const MlpSpec& spec, const VectorXd& params,
                      const Batch& batch) {
  if (!batch.classification())
    throw ShapeMismatch("train_accuracy: labelled batch required");
  const ForwardResult res = forward(spec, params, batch);
  Index hits = 0;
  for (Index i = 0; i < batch.size(); ++i) {
    Index argmax = 0;
    res.outputs.row(i).maxCoeff(&argmax);
    if (argmax == batch.labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(batch.size());
}

namespace {

struct PathTerm {
  std::vector<int> param_ids;  // flat indices of the factors on this path
  int input_index = -1;        // multiplies x_i; -1 for bias paths
};

void enumerate_paths(const MlpSpec& spec, const ParamLayout& lay,
                     std::vector<PathTerm>& terms) {
  const int d = spec.depth();
  const auto w_id = [&](int l, int row, int col) {
    return lay.w_offset[static_cast<std::size_t>(l)] +
           row * spec.layer_widths[static_cast<std::size_t>(l)] + col;
  };
  const auto b_id = [&](int l, int row) {
    return lay.b_offset[static_cast<std::size_t>(l)] + row;
  };

  // Walk weight chains from layer `start_l` unit `unit` up to the single
  // output, appending the collected factor ids.
  const auto walk = [&](auto&& self, int l, int unit, PathTerm cur) -> void {
    if (l == d) {
      terms.push_back(std::move(cur));
      return;
    }
    for (int row = 0; row < spec.layer_widths[static_cast<std::size_t>(l + 1)]; ++row) {
      PathTerm next = cur;
      next.param_ids.push_back(w_id(l, row, unit));
      self(self, l + 1, row, std::move(next));
    }
  };

  for (int i = 0; i < spec.input_dim(); ++i) {
    PathTerm t;
    t.input_index = i;
    walk(walk, 0, i, std::move(t));
  }
  for (int l = 0; l < d; ++l) {
    for (int k = 0; k < spec.layer_widths[static_cast<std::size_t>(l + 1)]; ++k) {
      PathTerm t;
      t.param_ids.push_back(b_id(l, k));
      walk(walk, l + 1, k, std::move(t));
    }
  }
}

}  // namespace

Eigen::MatrixXd som_linear_hessian(const MlpSpec& spec, const VectorXd& params,
                                   const Batch& batch) {
  check_shapes(spec, params, batch);
  for (Activation a : spec.activations)
    if (a != Activation::kIdentity)
      throw Unsupported("som_linear_hessian: identity activations only");
  if (spec.output_dim() != 1)
    throw Unsupported("som_linear_hessian: single-output networks only");
  if (spec.loss_kind != LossKind::kMse)
    throw Unsupported("som_linear_hessian: MSE loss only");
  if (spec.param_count() > 2048)
    throw Unsupported("som_linear_hessian: parameter count capped at 2048");

  const ParamLayout lay(spec);
  std::vector<PathTerm> terms;
  enumerate_paths(spec, lay, terms);

  const Index nsamp = batch.size();
  const int np = lay.total;
  const double n = static_cast<double>(nsamp);

  MatrixXd hess = MatrixXd::Zero(np, np);
  VectorXd jac(np);
  std::vector<double> prefix, suffix;

  for (Index s = 0; s < nsamp; ++s) {
    jac.setZero();
    MatrixXd fhess = MatrixXd::Zero(np, np);
    double f = 0.0;
    for (const PathTerm& t : terms) {
      const double c = t.input_index >= 0 ? batch.inputs(s, t.input_index) : 1.0;
      const std::size_t m = t.param_ids.size();
      prefix.assign(m + 1, 1.0);
      suffix.assign(m + 1, 1.0);
      for (std::size_t a = 0; a < m; ++a)
        prefix[a + 1] = prefix[a] * params[t.param_ids[a]];
      for (std::size_t a = m; a-- > 0;)
        suffix[a] = suffix[a + 1] * params[t.param_ids[a]];
      f += c * prefix[m];
      for (std::size_t a = 0; a < m; ++a)
        jac[t.param_ids[a]] += c * prefix[a] * suffix[a + 1];
      for (std::size_t a = 0; a < m; ++a) {
        double mid = 1.0;
        for (std::size_t b = a + 1; b < m; ++b) {
          // product of factors excluding positions a and b
          const double excl = prefix[a] * mid * suffix[b + 1];
          fhess(t.param_ids[a], t.param_ids[b]) += c * excl;
          fhess(t.param_ids[b], t.param_ids[a]) += c * excl;
          mid *= params[t.param_ids[b]];
        }
      }
    }
    const double resid = f - batch.targets(s, 0);
    hess.noalias() += (2.0 / n) * (jac * jac.transpose());
    hess.noalias() += (2.0 / n) * resid * fhess;
  }
  return hess;
}

std::vector<Eigen::MatrixXi> relu_masks(const MlpSpec& spec,
                                        const VectorXd& params,
                                        const Batch& batch) {
  check_shapes(spec, params, batch);
  const ParamLayout lay(spec);
  ForwardPass fp;
  run_forward(spec, params, lay, batch, fp);

  std::vector<Eigen::MatrixXi> masks;
  for (int l = 1; l < spec.depth(); ++l) {
    if (layer_activation(spec, l) == Activation::kRelu)
      masks.push_back(
          (fp.pre[static_cast<std::size_t>(l - 1)].array() > 0.0).cast<int>());
    else
      masks.push_back(Eigen::MatrixXi::Ones(batch.size(),
          spec.layer_widths[static_cast<std::size_t>(l)]));
  }
  return masks;
}

}  // namespace eos
