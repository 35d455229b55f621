#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace eos {

class Objective;

/// Symmetric operator given as v -> A v.
using LinearOperator = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Top-k eigenpairs sorted by descending eigenvalue. Vectors are unit length,
/// mutually orthonormal, and sign-fixed so the largest-magnitude component is
/// positive. residuals[i] = ||A v_i - lambda_i v_i|| measured explicitly.
struct Spectrum {
  std::vector<double> lambdas;
  std::vector<Eigen::VectorXd> vectors;
  std::vector<double> residuals;
  int iterations = 0;
  bool converged = false;  ///< false marks a best-effort (NotConverged) result

  int size() const { return static_cast<int>(lambdas.size()); }
  double top() const { return lambdas.at(0); }

  /// Columns: index, lambda, residual.
  void write_csv(const std::string& path) const;
};

struct LanczosStats {
  int iterations = 0;
  int restarts = 0;
  /// max |V'V - I| over the final Krylov basis
  double max_orthogonality_error = 0.0;
};

/// Lanczos iteration with full re-orthogonalization governed by the modified
/// Parlett-Kahan acceptance test: a pass must retain at least kappa = 1/sqrt(2)
/// of the vector norm; one repeat is allowed, after which the iteration
/// declares breakdown and restarts with a fresh random direction (at most 3
/// restarts, then BreakdownLoop).
///
/// Operator symmetry is pre-checked on 3 random pairs; asymmetry beyond 1e-6
/// aborts with OperatorNotSymmetric. Converged pairs satisfy
/// residual <= tol * max(1, |lambda|); if max_iter is exhausted first the
/// best-effort spectrum is returned with `converged == false`.
///
/// The start vector comes from a counter-based generator keyed by (seed,
/// stream); `warm_start`, when given, overrides it.
Spectrum top_k_eigen(const LinearOperator& op, Eigen::Index dim, int k,
                     double tol, int max_iter, std::uint64_t seed,
                     const Eigen::VectorXd* warm_start = nullptr,
                     LanczosStats* stats = nullptr);

/// Similarity between two spectra over the same space.
struct SubspaceSimilarity {
  std::vector<double> per_vector;     ///< |v_a_i . v_b_i| for i < k
  std::vector<double> principal_cosines;
  double subspace = 0.0;              ///< mean of principal-angle cosines

  /// Chordal Grassmann distance derived from the cosines: mean(sin^2).
  double squared_sine_distance() const;
};

/// per_vector[i] = |a.v_i . b.v_i|; `subspace` compares span(a_1..a_k) with
/// span(b_1..b_k) through the singular values of the k x k cross-Gram matrix.
SubspaceSimilarity eigvec_similarity(const Spectrum& a, const Spectrum& b, int k);

enum class AlphaMethod { kFiniteDifference, kNestedHvp };

/// alpha = -grad L . grad S.
struct SharpeningFactor {
  double alpha = 0.0;
  AlphaMethod method = AlphaMethod::kFiniteDifference;
  double step = 0.0;
};

/// Estimates alpha at x.
///  - finite_difference: -||g|| (S(x+h u) - S(x-h u)) / (2h) with u = g/||g||,
///    S recomputed by a top-1 eigensolve warm-started at spectrum's v1.
///  - nested_hvp: same directional derivative applied to the fixed-v1
///    surrogate phi(y) = v1' H(y) v1 evaluated through hvp.
/// Throws ZeroGradient when ||g|| < 1e-12. `spectrum` must hold a converged
/// top pair.
SharpeningFactor sharpening_factor(const Objective& obj, const Eigen::VectorXd& x,
                                   const Spectrum& spectrum, AlphaMethod method,
                                   double step);

}  // namespace eos
