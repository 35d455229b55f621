#include "eos/spectral.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "eos/csv.hpp"
#include "eos/errors.hpp"
#include "eos/objective.hpp"
#include "eos/rng.hpp"

namespace eos {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kKappa = 0.70710678118654752;  // 1/sqrt(2)
constexpr int kMaxRestarts = 3;

void canonical_sign(VectorXd& v) {
  Index i = 0;
  v.cwiseAbs().maxCoeff(&i);
  if (v[i] < 0.0) v = -v;
}

void check_symmetry(const LinearOperator& op, Index dim, std::uint64_t seed) {
  VectorXd u[3], au[3];
  for (int i = 0; i < 3; ++i) {
    u[i] = CounterRng(seed, 1000 + static_cast<std::uint64_t>(i)).unit_vector(dim);
    au[i] = op(u[i]);
  }
  for (int i = 0; i < 3; ++i) {
    const int j = (i + 1) % 3;
    const double a = u[i].dot(au[j]);
    const double b = u[j].dot(au[i]);
    if (std::abs(a - b) > 1e-6 * std::max({1.0, std::abs(a), std::abs(b)}))
      throw OperatorNotSymmetric(
          "operator failed the u'(Hv)=v'(Hu) probe: |" + fmt_g17(a) + " - " +
          fmt_g17(b) + "| > 1e-6");
  }
}

/// One full Gram-Schmidt pass of w against the first `count` columns of V.
void orth_pass(const MatrixXd& basis, Index count, VectorXd& w) {
  if (count == 0) return;
  const auto v = basis.leftCols(count);
  w.noalias() -= v * (v.transpose() * w);
}

}  // namespace

void Spectrum::write_csv(const std::string& path) const {
  CsvWriter w(path, {"index", "lambda", "residual"});
  for (int i = 0; i < size(); ++i)
    w.row({static_cast<double>(i), lambdas[static_cast<std::size_t>(i)],
           residuals[static_cast<std::size_t>(i)]});
}

Spectrum top_k_eigen(const LinearOperator& op, Index dim, int k, double tol,
                     int max_iter, std::uint64_t seed,
                     const Eigen::VectorXd* warm_start, LanczosStats* stats) {
  if (k < 1 || k > 32 || static_cast<Index>(k) > dim)
    throw std::invalid_argument("top_k_eigen: require 1 <= k <= 32 and k <= dim");
  if (!(tol > 0.0)) throw std::invalid_argument("top_k_eigen: tol must be > 0");

  check_symmetry(op, dim, seed);

  const Index m_max = std::min<Index>(std::max(max_iter, k), dim);
  MatrixXd basis(dim, m_max + 1);
  std::vector<double> alpha, beta;  // beta[j] couples v_j and v_{j+1}
  int restarts = 0;

  {
    VectorXd v0;
    if (warm_start && warm_start->size() == dim && warm_start->norm() > 0.0)
      v0 = *warm_start / warm_start->norm();
    else
      v0 = CounterRng(seed, 0).unit_vector(dim);
    basis.col(0) = v0;
  }

  Eigen::SelfAdjointEigenSolver<MatrixXd> small;
  Index j = 0;  // count of completed alpha entries
  int applied = 0;
  bool t_converged = false;

  while (j < m_max) {
    VectorXd w = op(basis.col(j));
    ++applied;
    const double a = basis.col(j).dot(w);
    alpha.push_back(a);

    w.noalias() -= a * basis.col(j);
    if (j > 0) w.noalias() -= beta[static_cast<std::size_t>(j - 1)] * basis.col(j - 1);
    ++j;
    if (j >= m_max) break;  // T is complete (budget or dimension exhausted)

    // Full re-orthogonalization with the Parlett-Kahan acceptance rule.
    const double pre = w.norm();
    orth_pass(basis, j, w);
    double post = w.norm();
    bool broke_down = false;
    if (post < kKappa * pre) {
      const double before_second = post;
      orth_pass(basis, j, w);
      post = w.norm();
      if (post < kKappa * before_second) broke_down = true;
    }

    if (broke_down || post == 0.0) {
      if (++restarts > kMaxRestarts)
        throw BreakdownLoop("Lanczos breakdown persisted after 3 restarts");
      VectorXd fresh =
          CounterRng(seed, 10 + static_cast<std::uint64_t>(restarts)).unit_vector(dim);
      orth_pass(basis, j, fresh);
      orth_pass(basis, j, fresh);
      const double n = fresh.norm();
      if (n == 0.0) throw BreakdownLoop("no direction left for a Lanczos restart");
      beta.push_back(0.0);
      basis.col(j) = fresh / n;
      continue;
    }

    beta.push_back(post);
    basis.col(j) = w / post;

    if (j >= static_cast<Index>(k)) {
      // Ritz values of the current tridiagonal block; estimated residual of
      // pair i is |beta_j * s_{j,i}|.
      MatrixXd t = MatrixXd::Zero(j, j);
      for (Index r = 0; r < j; ++r) {
        t(r, r) = alpha[static_cast<std::size_t>(r)];
        if (r + 1 < j)
          t(r, r + 1) = t(r + 1, r) = beta[static_cast<std::size_t>(r)];
      }
      small.compute(t);
      bool all_ok = true;
      const double b_last = beta[static_cast<std::size_t>(j - 1)];
      for (int i = 0; i < k; ++i) {
        const Index col = j - 1 - i;
        const double lam = small.eigenvalues()[col];
        const double est = std::abs(b_last * small.eigenvectors()(j - 1, col));
        if (est > tol * std::max(1.0, std::abs(lam))) {
          all_ok = false;
          break;
        }
      }
      if (all_ok) {
        t_converged = true;
        break;
      }
    }
  }

  // Assemble Ritz pairs from the final block.
  const Index m = j;
  MatrixXd t = MatrixXd::Zero(m, m);
  for (Index r = 0; r < m; ++r) {
    t(r, r) = alpha[static_cast<std::size_t>(r)];
    if (r + 1 < m) t(r, r + 1) = t(r + 1, r) = beta[static_cast<std::size_t>(r)];
  }
  small.compute(t);
  if (small.info() != Eigen::Success)
    throw EigensolveFailed("tridiagonal eigensolve failed");

  Spectrum spec;
  spec.iterations = applied;
  spec.converged = true;
  for (int i = 0; i < k; ++i) {
    const Index col = m - 1 - i;
    VectorXd y = basis.leftCols(m) * small.eigenvectors().col(col);
    y.normalize();
    canonical_sign(y);
    const double lam = small.eigenvalues()[col];
    const double resid = (op(y) - lam * y).norm();
    spec.lambdas.push_back(lam);
    spec.vectors.push_back(std::move(y));
    spec.residuals.push_back(resid);
    if (resid > tol * std::max(1.0, std::abs(lam))) spec.converged = false;
  }
  if (!t_converged && m == m_max && m < dim) spec.converged = false;

  if (stats) {
    stats->iterations = applied;
    stats->restarts = restarts;
    const MatrixXd gram =
        basis.leftCols(m).transpose() * basis.leftCols(m) -
        MatrixXd::Identity(m, m);
    stats->max_orthogonality_error = gram.cwiseAbs().maxCoeff();
  }
  return spec;
}

double SubspaceSimilarity::squared_sine_distance() const {
  if (principal_cosines.empty()) return 0.0;
  double acc = 0.0;
  for (double c : principal_cosines) acc += 1.0 - c * c;
  return acc / static_cast<double>(principal_cosines.size());
}

SubspaceSimilarity eigvec_similarity(const Spectrum& a, const Spectrum& b, int k) {
  if (a.size() < k || b.size() < k)
    throw DimensionMismatch("eigvec_similarity: fewer than k pairs");
  if (k < 1) throw std::invalid_argument("eigvec_similarity: k >= 1");
  const Index dim = a.vectors.front().size();
  if (b.vectors.front().size() != dim)
    throw DimensionMismatch("eigvec_similarity: spectra over different spaces");

  SubspaceSimilarity sim;
  for (int i = 0; i < k; ++i)
    sim.per_vector.push_back(std::min(
        1.0, std::abs(a.vectors[static_cast<std::size_t>(i)]
                          .dot(b.vectors[static_cast<std::size_t>(i)]))));

  MatrixXd ma(dim, k), mb(dim, k);
  for (int i = 0; i < k; ++i) {
    ma.col(i) = a.vectors[static_cast<std::size_t>(i)];
    mb.col(i) = b.vectors[static_cast<std::size_t>(i)];
  }
  const MatrixXd gram = ma.transpose() * mb;
  Eigen::JacobiSVD<MatrixXd> svd(gram);
  double acc = 0.0;
  for (int i = 0; i < k; ++i) {
    const double c = std::min(1.0, svd.singularValues()[i]);
    sim.principal_cosines.push_back(c);
    acc += c;
  }
  sim.subspace = acc / static_cast<double>(k);
  return sim;
}

SharpeningFactor sharpening_factor(const Objective& obj, const VectorXd& x,
                                   const Spectrum& spectrum, AlphaMethod method,
                                   double step) {
  if (spectrum.size() < 1)
    throw std::invalid_argument("sharpening_factor: spectrum has no pairs");
  if (!(step > 0.0)) throw std::invalid_argument("sharpening_factor: step > 0");

  const VectorXd g = obj.gradient(x);
  const double gn = g.norm();
  if (gn < 1e-12) throw ZeroGradient("sharpening_factor: ||grad L|| < 1e-12");
  const VectorXd u = g / gn;
  const VectorXd& v1 = spectrum.vectors.front();

  double s_plus = 0.0, s_minus = 0.0;
  if (method == AlphaMethod::kFiniteDifference) {
    const auto sharpness_at = [&](const VectorXd& y) {
      const LinearOperator op = [&](const VectorXd& v) { return obj.hvp(y, v); };
      return top_k_eigen(op, obj.dim(), 1, 1e-7, 400, /*seed=*/17, &v1).top();
    };
    s_plus = sharpness_at(x + step * u);
    s_minus = sharpness_at(x - step * u);
  } else {
    const auto phi = [&](const VectorXd& y) { return v1.dot(obj.hvp(y, v1)); };
    s_plus = phi(x + step * u);
    s_minus = phi(x - step * u);
  }

  SharpeningFactor out;
  out.method = method;
  out.step = step;
  out.alpha = -gn * (s_plus - s_minus) / (2.0 * step);
  return out;
}

}  // namespace eos
