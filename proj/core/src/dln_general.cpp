#include "eos/dln_general.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "eos/csv.hpp"
#include "eos/errors.hpp"

namespace eos {

namespace {

constexpr int kDenseCap = 2048;
constexpr double kBoundTol = 1e-9;

void require_valid(const DlnNState& s) {
  if (s.size() < 2)
    throw std::invalid_argument("DlnNState: n >= 2 required");
  for (int j = 0; j < s.size(); ++j)
    if (s.thetas[j] == 0.0)
      throw DegenerateState("DlnNState: theta_j == 0");
}

int argmax_abs(const Eigen::VectorXd& v) {
  int idx = 0;
  v.cwiseAbs().maxCoeff(&idx);
  return idx;
}

int argmin_abs(const Eigen::VectorXd& v) {
  int idx = 0;
  v.cwiseAbs().minCoeff(&idx);
  return idx;
}

Eigen::VectorXd dense_top_eigenvector(const Eigen::MatrixXd& h, double* lambda1) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(h);
  if (solver.info() != Eigen::Success)
    throw EigensolveFailed("dense symmetric eigensolve did not converge");
  const Eigen::Index last = h.rows() - 1;
  if (lambda1) *lambda1 = solver.eigenvalues()[last];
  return solver.eigenvectors().col(last);
}

}  // namespace

int AdditiveDlnSpec::total_params() const {
  int n = 0;
  for (const auto& g : groups) n += g.size();
  return n;
}

double AdditiveDlnSpec::output_sum() const {
  double t = 0.0;
  for (const auto& g : groups) t += g.product();
  return t;
}

Eigen::MatrixXd dlnn_hessian(const DlnNState& state, const PolyLoss& loss) {
  require_valid(state);
  const double t = state.product();
  const double zp = loss.d1(t);
  const double zpp = loss.d2(t);
  const double big_d = zpp * t * t + zp * t;

  const Eigen::VectorXd inv = state.thetas.cwiseInverse();
  Eigen::MatrixXd h = big_d * (inv * inv.transpose());
  h.diagonal() -= zp * t * inv.cwiseAbs2();
  return h;
}

ApproxTopEigen dlnn_approx_top(const DlnNState& state, const PolyLoss& loss) {
  require_valid(state);
  const double t = state.product();
  const double zp = loss.d1(t);
  const double zpp = loss.d2(t);
  const double big_d = zpp * t * t + zp * t;

  const Eigen::VectorXd inv = state.thetas.cwiseInverse();
  const double s2 = inv.squaredNorm();    // sum theta^-2
  const double s4 = inv.cwiseAbs2().squaredNorm();  // sum theta^-4

  ApproxTopEigen out;
  out.psi = 1.0 / std::sqrt(s2);
  out.u_star = out.psi * inv;
  // u*' H u* = D*s2 - z'T * s4/s2, without forming H.
  out.rayleigh = big_d * s2 - zp * t * s4 / s2;
  out.lambda_hat = out.rayleigh;
  return out;
}

DeviationReport dlnn_deviation(const DlnNState& state, const PolyLoss& loss) {
  require_valid(state);
  if (state.size() > kDenseCap)
    throw Unsupported("dlnn_deviation: dense eigensolves capped at n = 2048");

  const ApproxTopEigen approx = dlnn_approx_top(state, loss);
  const Eigen::MatrixXd h = dlnn_hessian(state, loss);
  Eigen::VectorXd u = dense_top_eigenvector(h, nullptr);
  if (u.dot(approx.u_star) < 0.0) u = -u;

  DeviationReport rep;
  rep.epsilons = (u.cwiseQuotient(approx.u_star)).array() - 1.0;
  rep.a_sum = approx.u_star.cwiseAbs2().dot(rep.epsilons);
  rep.max_theta_index = argmax_abs(state.thetas);

  const double t = state.product();
  rep.epsilon_bound = loss.d1(t) * t / (loss.d2(t) * t * t);

  bool ok = rep.a_sum <= kBoundTol && rep.a_sum >= -2.0 - kBoundTol;
  const double cond = state.thetas.cwiseAbs2().maxCoeff() /
                      state.thetas.cwiseAbs2().minCoeff();
  if (cond >= 100.0) {
    const double eps_m = rep.epsilons[rep.max_theta_index];
    ok = ok && eps_m > 0.0 && eps_m <= rep.epsilon_bound + kBoundTol;
  }
  rep.bound_ok = ok;
  return rep;
}

double dlnn_ratio(const DlnNState& state, const PolyLoss& loss, int k) {
  require_valid(state);
  if (k < 0 || k >= state.size())
    throw std::invalid_argument("dlnn_ratio: k out of range");
  const int ref = argmin_abs(state.thetas);
  if (k == ref)
    throw std::invalid_argument(
        "dlnn_ratio: k must differ from the smallest-|theta| coordinate");

  const double t = state.product();
  const double zpt = loss.d1(t) * t;
  const double lam = dlnn_approx_top(state, loss).lambda_hat;
  const auto f = [&](double th) { return std::abs(th) * (lam + zpt / (th * th)); };
  return f(state.thetas[k]) / f(state.thetas[ref]);
}

Eigen::MatrixXd additive_hessian(const AdditiveDlnSpec& spec) {
  if (spec.groups.empty())
    throw std::invalid_argument("additive_hessian: no groups");
  for (const auto& g : spec.groups) require_valid(g);

  const int n = spec.total_params();
  const double t_sum = spec.output_sum();
  const double zp = spec.loss.d1(t_sum);
  const double zpp = spec.loss.d2(t_sum);

  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
  int row0 = 0;
  for (std::size_t a = 0; a < spec.groups.size(); ++a) {
    const auto& ga = spec.groups[a];
    const Eigen::VectorXd inv_a = ga.thetas.cwiseInverse();
    const double ta = ga.product();
    const int na = ga.size();

    const double big_d = zpp * ta * ta + zp * ta;
    h.block(row0, row0, na, na) = big_d * (inv_a * inv_a.transpose());
    h.block(row0, row0, na, na).diagonal() -= zp * ta * inv_a.cwiseAbs2();

    int col0 = row0 + na;
    for (std::size_t b = a + 1; b < spec.groups.size(); ++b) {
      const auto& gb = spec.groups[b];
      const Eigen::VectorXd inv_b = gb.thetas.cwiseInverse();
      const double cross = zpp * ta * gb.product();
      h.block(row0, col0, na, gb.size()) = cross * (inv_a * inv_b.transpose());
      h.block(col0, row0, gb.size(), na) =
          h.block(row0, col0, na, gb.size()).transpose();
      col0 += gb.size();
    }
    row0 += na;
  }
  return h;
}

void MonotonicityResult::write_csv(const std::string& path) const {
  CsvWriter w(path, {"r", "ratio", "lambda1"});
  for (std::size_t i = 0; i < r.size(); ++i)
    w.row({r[i], ratio[i], lambda1[i]});
}

MonotonicityResult additive_ratio_monotonicity_check(
    const AdditiveDlnSpec& spec, int i, int j,
    const std::vector<double>& r_grid) {
  const int n = spec.total_params();
  if (i < 0 || j < 0 || i >= n || j >= n || i == j)
    throw std::invalid_argument("monotonicity check: bad index pair");
  if (n > kDenseCap)
    throw Unsupported("monotonicity check: dense eigensolves capped at n = 2048");
  if (r_grid.size() < 2)
    throw std::invalid_argument("monotonicity check: grid needs >= 2 points");
  for (std::size_t g = 0; g + 1 < r_grid.size(); ++g)
    if (!(r_grid[g + 1] > r_grid[g]))
      throw std::invalid_argument("monotonicity check: grid not increasing");
  if (r_grid.front() < 1.0)
    throw std::invalid_argument("monotonicity check: grid values must be >= 1");

  // Locate (group, offset) for a flattened index.
  const auto locate = [&](int flat) {
    int g = 0;
    while (flat >= spec.groups[static_cast<std::size_t>(g)].size()) {
      flat -= spec.groups[static_cast<std::size_t>(g)].size();
      ++g;
    }
    return std::pair<int, int>(g, flat);
  };
  const auto [gi, oi] = locate(i);
  const auto [gj, oj] = locate(j);
  const double theta_i = spec.groups[static_cast<std::size_t>(gi)].thetas[oi];

  MonotonicityResult res;
  AdditiveDlnSpec work = spec;
  for (double r : r_grid) {
    work.groups[static_cast<std::size_t>(gj)].thetas[oj] = r * theta_i;
    const Eigen::MatrixXd h = additive_hessian(work);
    double lam = 0.0;
    Eigen::VectorXd u = dense_top_eigenvector(h, &lam);
    if (u[argmax_abs(u)] < 0.0) u = -u;
    res.r.push_back(r);
    res.ratio.push_back(std::abs(u[i] / u[j]));
    res.lambda1.push_back(lam);

    // Approximate cross-regime ratio from the constrained-optimization
    // solution: u* = psi / theta over all coordinates.
    Eigen::VectorXd inv_all(n);
    int off = 0;
    for (const auto& g : work.groups) {
      inv_all.segment(off, g.size()) = g.thetas.cwiseInverse();
      off += g.size();
    }
    const Eigen::VectorXd u_star = inv_all / inv_all.norm();
    const double lam_hat = u_star.dot(h * u_star);
    const double zp = work.loss.d1(work.output_sum());
    const auto f_of = [&](int group, double th) {
      const double tg = work.groups[static_cast<std::size_t>(group)].product();
      return std::abs(th) * lam_hat + zp * tg / std::abs(th);
    };
    const double th_j = work.groups[static_cast<std::size_t>(gj)].thetas[oj];
    res.f_ratio.push_back(f_of(gj, th_j) / f_of(gi, theta_i));
  }

  res.pass = true;
  res.f_pass = true;
  for (std::size_t g = 0; g + 1 < res.ratio.size(); ++g) {
    if (!(res.ratio[g + 1] > res.ratio[g])) res.pass = false;
    if (!(res.f_ratio[g + 1] > res.f_ratio[g])) res.f_pass = false;
  }
  return res;
}

}  // namespace eos
