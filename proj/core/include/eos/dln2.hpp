#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "eos/poly_loss.hpp"

namespace eos {

/// Two-parameter DLN state. The model output is the product T = theta1*theta2
/// and the loss is z(T) for a PolyLoss z.
struct Dln2State {
  double theta1 = 0.0;
  double theta2 = 0.0;

  double product() const { return theta1 * theta2; }
};

/// Eigen-structure of the 2x2 loss Hessian together with the alignment
/// measures beta and R2 = beta + sqrt(beta^2 + 1).
///
/// v1/v2 are unit eigenvectors in the original (theta1, theta2) coordinate
/// order, sign-fixed so the largest-magnitude component is positive.
/// R2 equals |u_{1,sharper} / u_{1,flatter}| where "sharper" is the
/// smaller-magnitude coordinate.
struct Dln2Eigen {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  Eigen::Vector2d v1{0.0, 0.0};
  Eigen::Vector2d v2{0.0, 0.0};
  double beta = 0.0;
  double r2 = 1.0;
};

/// Learning-rate thresholds of the gamma_beta phase analysis, computed after
/// relabeling so that theta2 is the larger-magnitude coordinate.
///
/// eta_eos here is the stability limit of the local quadratic approximation
/// along the sharper coordinate, |2*theta1/(theta2*z')|; for quadratic z this
/// equals 2/(z''*theta2^2) and satisfies eta_gamma1 == eta_eos*(1 - xi)
/// identically. (The top-eigenvalue threshold 2/lambda1 agrees with it to
/// O(xi) in the ill-conditioned regime.)
struct PhaseThresholds {
  double eta_eos = 0.0;
  double eta_half = 0.0;    ///< left asymptote |theta1/(theta2*z')|
  double eta_gamma1 = 0.0;  ///< where gamma_beta crosses 1
  double xi = 0.0;          ///< theta1^2 / (theta1^2 + theta2^2)
};

/// Loss Hessian [[z''*t2^2, z''*t1*t2 + z'], [z''*t1*t2 + z', z''*t1^2]]
/// evaluated at T = t1*t2. Valid at any state.
Eigen::Matrix2d dln2_hessian(const Dln2State& state, const PolyLoss& loss);

/// Closed-form eigenpairs, beta and R2.
/// Throws DegenerateState when z' + z''*T == 0 (beta undefined; for an
/// admissible PolyLoss this happens exactly at T = 0).
Dln2Eigen dln2_eigen(const Dln2State& state, const PolyLoss& loss);

/// Ratio of coordinates g(r1, r2) = (r1 + sqrt(r1^2 + r2^2)) / r2 with
/// r1 = theta2^2 - theta1^2 and r2 = 2*(z' + z''*T)/z''. Exposed for the
/// mirrored-product identity g(r1,r2)*g(-r1,r2) = 1.
double dln2_coordinate_ratio(double r1, double r2);

/// Closed-form one-step ratio of beta:
/// |1 - eta^2 z'^2| / |1 - s*eta*z' + eta^2 z'^2|, s = t1/t2 + t2/t1.
/// s is computed from signed values; s*z' >= 0 holds for any sign mix.
/// Throws DegenerateState on T == 0, AsymptoteHit when the denominator
/// magnitude falls below 1e-14.
double dln2_gamma_beta(const Dln2State& state, const PolyLoss& loss, double eta);

/// Signed variant of dln2_gamma_beta (debugging aid; the phase contract is
/// the absolute value).
double dln2_gamma_beta_signed(const Dln2State& state, const PolyLoss& loss, double eta);

/// Validation oracle: performs one true gradient step
/// theta1 -= eta*z'*theta2, theta2 -= eta*z'*theta1 and returns
/// beta_after / beta_before. Throws DegenerateState if beta is undefined at
/// either endpoint.
double dln2_gamma_beta_exact(const Dln2State& state, const PolyLoss& loss, double eta);

/// Phase thresholds; throws DegenerateState on theta1*theta2 == 0.
PhaseThresholds dln2_thresholds(const Dln2State& state, const PolyLoss& loss);

struct Dln2TrajectoryPoint {
  int step = 0;
  Dln2State state;
  double loss = 0.0;
  double lambda1 = 0.0;
  /// Unset at points where beta/R2 are undefined (T == 0).
  std::optional<Dln2Eigen> eigen;
};

struct Dln2Trajectory {
  std::vector<Dln2TrajectoryPoint> points;
  bool diverged = false;

  /// Columns: step,theta1,theta2,product,loss,lambda1,beta,R2.
  /// beta/R2 cells are empty at degenerate points.
  void write_csv(const std::string& path) const;
};

/// Iterates theta <- theta - eta * grad(z(T)) for `steps` updates, recording
/// the state, eigen data and loss after every update (index 0 is the initial
/// state). Halts early, with `diverged` set, when |theta_i| exceeds 1e150.
Dln2Trajectory dln2_trajectory(const Dln2State& init, const PolyLoss& loss,
                               double eta, int steps);

}  // namespace eos
