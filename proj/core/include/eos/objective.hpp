#pragma once

#include <Eigen/Core>
#include <memory>
#include <optional>

#include "eos/dln2.hpp"
#include "eos/mlp.hpp"
#include "eos/poly_loss.hpp"

namespace eos {

/// A twice-differentiable training objective. The trainer, the eigensolver
/// and the sharpening-factor estimators all operate against this surface, so
/// the same machinery drives MLPs, DLNs and synthetic test losses.
class Objective {
 public:
  virtual ~Objective() = default;

  virtual Eigen::Index dim() const = 0;
  virtual double value(const Eigen::VectorXd& x) const = 0;
  virtual Eigen::VectorXd gradient(const Eigen::VectorXd& x,
                                   double* value_out = nullptr) const = 0;
  virtual Eigen::VectorXd hvp(const Eigen::VectorXd& x,
                              const Eigen::VectorXd& v) const = 0;

  /// Classification accuracy in [0, 1]; nullopt when not applicable.
  virtual std::optional<double> accuracy(const Eigen::VectorXd&) const {
    return std::nullopt;
  }
};

/// MLP loss over a fixed full batch.
class MlpObjective final : public Objective {
 public:
  MlpObjective(MlpSpec spec, const Batch& batch)
      : spec_(std::move(spec)), batch_(&batch) {}

  Eigen::Index dim() const override { return spec_.param_count(); }
  double value(const Eigen::VectorXd& x) const override {
    return forward(spec_, x, *batch_).loss;
  }
  Eigen::VectorXd gradient(const Eigen::VectorXd& x,
                           double* value_out = nullptr) const override {
    return eos::gradient(spec_, x, *batch_, value_out);
  }
  Eigen::VectorXd hvp(const Eigen::VectorXd& x,
                      const Eigen::VectorXd& v) const override {
    return eos::hvp(spec_, x, *batch_, v);
  }
  std::optional<double> accuracy(const Eigen::VectorXd& x) const override {
    if (!batch_->classification()) return std::nullopt;
    return train_accuracy(spec_, x, *batch_);
  }

  const MlpSpec& spec() const { return spec_; }
  const Batch& batch() const { return *batch_; }

 private:
  MlpSpec spec_;
  const Batch* batch_;
};

/// The 2-parameter DLN as a trainer objective (x = [theta1, theta2]).
class Dln2Objective final : public Objective {
 public:
  explicit Dln2Objective(PolyLoss loss) : loss_(std::move(loss)) {}

  Eigen::Index dim() const override { return 2; }
  double value(const Eigen::VectorXd& x) const override {
    return loss_.value(x[0] * x[1]);
  }
  Eigen::VectorXd gradient(const Eigen::VectorXd& x,
                           double* value_out = nullptr) const override {
    const double t = x[0] * x[1];
    if (value_out) *value_out = loss_.value(t);
    const double zp = loss_.d1(t);
    return Eigen::Vector2d(zp * x[1], zp * x[0]);
  }
  Eigen::VectorXd hvp(const Eigen::VectorXd& x,
                      const Eigen::VectorXd& v) const override {
    const Eigen::Matrix2d h = dln2_hessian({x[0], x[1]}, loss_);
    return h * v;
  }

 private:
  PolyLoss loss_;
};

}  // namespace eos
