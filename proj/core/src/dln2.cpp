#include "eos/dln2.hpp"

#include <algorithm>
#include <cmath>

#include "eos/csv.hpp"
#include "eos/errors.hpp"

namespace eos {

namespace {

constexpr double kDivergenceBound = 1e150;
constexpr double kAsymptoteEps = 1e-14;

struct Derivs {
  double t;    // T = theta1*theta2
  double zp;   // z'(T)
  double zpp;  // z''(T)
  double c;    // z' + z''*T, the off-diagonal Hessian entry
};

Derivs derivs_at(const Dln2State& s, const PolyLoss& loss) {
  Derivs d;
  d.t = s.product();
  d.zp = loss.d1(d.t);
  d.zpp = loss.d2(d.t);
  d.c = d.zp + d.zpp * d.t;
  return d;
}

double beta_at(const Derivs& d, const Dln2State& s) {
  if (d.c == 0.0) throw DegenerateState("beta undefined: z' + z''*T == 0");
  const double hi = std::max(s.theta1 * s.theta1, s.theta2 * s.theta2);
  const double lo = std::min(s.theta1 * s.theta1, s.theta2 * s.theta2);
  return std::abs(d.zpp * (hi - lo)) / (2.0 * std::abs(d.c));
}

void canonicalize_sign(Eigen::Vector2d& v) {
  const int i = std::abs(v[0]) >= std::abs(v[1]) ? 0 : 1;
  if (v[i] < 0.0) v = -v;
}

}  // namespace

Eigen::Matrix2d dln2_hessian(const Dln2State& state, const PolyLoss& loss) {
  const Derivs d = derivs_at(state, loss);
  Eigen::Matrix2d h;
  h(0, 0) = d.zpp * state.theta2 * state.theta2;
  h(0, 1) = d.c;
  h(1, 0) = d.c;
  h(1, 1) = d.zpp * state.theta1 * state.theta1;
  return h;
}

Dln2Eigen dln2_eigen(const Dln2State& state, const PolyLoss& loss) {
  const Derivs d = derivs_at(state, loss);
  if (d.c == 0.0)
    throw DegenerateState("dln2_eigen: beta undefined at z' + z''*T == 0");

  const double t1sq = state.theta1 * state.theta1;
  const double t2sq = state.theta2 * state.theta2;
  const double tr = d.zpp * (t1sq + t2sq);
  const double disc = std::hypot(d.zpp * (t1sq - t2sq), 2.0 * d.c);

  Dln2Eigen e;
  e.lambda1 = 0.5 * (tr + disc);
  // det(H) = -z'*(2 z'' T + z') in exact arithmetic; the factored form avoids
  // the cancellation of z''^2 T^2 - (z''T + z')^2.
  const double det = -d.zp * (2.0 * d.zpp * d.t + d.zp);
  e.lambda2 = e.lambda1 != 0.0 ? det / e.lambda1 : 0.5 * (tr - disc);

  // Eigenvector from the better-conditioned row of (H - lambda1*I).
  const double a = d.zpp * t2sq;   // H(0,0)
  const double dd = d.zpp * t1sq;  // H(1,1)
  if (std::abs(e.lambda1 - a) >= std::abs(e.lambda1 - dd))
    e.v1 = Eigen::Vector2d(d.c, e.lambda1 - a);
  else
    e.v1 = Eigen::Vector2d(e.lambda1 - dd, d.c);
  e.v1.normalize();
  canonicalize_sign(e.v1);
  e.v2 = Eigen::Vector2d(-e.v1[1], e.v1[0]);
  canonicalize_sign(e.v2);

  e.beta = beta_at(d, state);
  e.r2 = e.beta + std::hypot(e.beta, 1.0);
  return e;
}

double dln2_coordinate_ratio(double r1, double r2) {
  return (r1 + std::hypot(r1, r2)) / r2;
}

namespace {

double gamma_beta_impl(const Dln2State& state, const PolyLoss& loss, double eta,
                       bool absolute) {
  if (state.product() == 0.0)
    throw DegenerateState("gamma_beta: T == 0");
  const double zp = loss.d1(state.product());
  const double s = state.theta1 / state.theta2 + state.theta2 / state.theta1;
  const double ez = eta * zp;
  const double num = 1.0 - ez * ez;
  const double den = 1.0 - s * ez + ez * ez;
  if (std::abs(den) < kAsymptoteEps)
    throw AsymptoteHit("gamma_beta: gamma_Theta ~ 0 at this eta");
  const double g = num / den;
  return absolute ? std::abs(g) : g;
}

}  // namespace

double dln2_gamma_beta(const Dln2State& state, const PolyLoss& loss, double eta) {
  return gamma_beta_impl(state, loss, eta, /*absolute=*/true);
}

double dln2_gamma_beta_signed(const Dln2State& state, const PolyLoss& loss,
                              double eta) {
  return gamma_beta_impl(state, loss, eta, /*absolute=*/false);
}

double dln2_gamma_beta_exact(const Dln2State& state, const PolyLoss& loss,
                             double eta) {
  const Derivs before = derivs_at(state, loss);
  if (before.t == 0.0)
    throw DegenerateState("gamma_beta_exact: T == 0 before the update");
  const double beta0 = beta_at(before, state);
  if (beta0 == 0.0)
    throw DegenerateState("gamma_beta_exact: beta == 0 before the update");

  Dln2State next;
  next.theta1 = state.theta1 - eta * before.zp * state.theta2;
  next.theta2 = state.theta2 - eta * before.zp * state.theta1;
  const Derivs after = derivs_at(next, loss);
  if (after.t == 0.0)
    throw DegenerateState("gamma_beta_exact: T == 0 after the update");
  return beta_at(after, next) / beta0;
}

PhaseThresholds dln2_thresholds(const Dln2State& state, const PolyLoss& loss) {
  if (state.product() == 0.0)
    throw DegenerateState("dln2_thresholds: theta1*theta2 == 0");

  // Relabel so |b| >= |a|; all quantities below are invariant to signs and to
  // swapping, which keeps the formulas unconditional.
  double a = state.theta1, b = state.theta2;
  if (a * a > b * b) std::swap(a, b);

  const double t = state.product();
  const double zp = loss.d1(t);
  const double zpp = loss.d2(t);

  PhaseThresholds th;
  th.xi = (a * a) / (a * a + b * b);
  th.eta_half = std::abs(a / (b * zp));
  th.eta_eos = 2.0 / (zpp * b * b);
  th.eta_gamma1 = 2.0 * std::abs(t) / (std::abs(zp) * (a * a + b * b));
  return th;
}

void Dln2Trajectory::write_csv(const std::string& path) const {
  CsvWriter w(path, {"step", "theta1", "theta2", "product", "loss", "lambda1",
                     "beta", "R2"});
  for (const auto& p : points) {
    std::vector<std::optional<double>> row{
        static_cast<double>(p.step), p.state.theta1,  p.state.theta2,
        p.state.product(),           p.loss,          p.lambda1,
        std::nullopt,                std::nullopt};
    if (p.eigen) {
      row[6] = p.eigen->beta;
      row[7] = p.eigen->r2;
    }
    w.row(row);
  }
}

Dln2Trajectory dln2_trajectory(const Dln2State& init, const PolyLoss& loss,
                               double eta, int steps) {
  if (steps < 1) throw std::invalid_argument("dln2_trajectory: steps < 1");

  Dln2Trajectory traj;
  traj.points.reserve(static_cast<std::size_t>(steps) + 1);

  Dln2State s = init;
  for (int k = 0; k <= steps; ++k) {
    if (std::abs(s.theta1) > kDivergenceBound ||
        std::abs(s.theta2) > kDivergenceBound) {
      traj.diverged = true;
      break;
    }
    Dln2TrajectoryPoint p;
    p.step = k;
    p.state = s;
    p.loss = loss.value(s.product());

    const Derivs d = derivs_at(s, loss);
    const double t1sq = s.theta1 * s.theta1;
    const double t2sq = s.theta2 * s.theta2;
    p.lambda1 = 0.5 * (d.zpp * (t1sq + t2sq) +
                       std::hypot(d.zpp * (t1sq - t2sq), 2.0 * d.c));
    if (d.c != 0.0) p.eigen = dln2_eigen(s, loss);
    traj.points.push_back(std::move(p));

    if (k == steps) break;
    // grouped as eta * (z' * theta) to match the generic gd_step arithmetic
    const double g1 = d.zp * s.theta2;
    const double g2 = d.zp * s.theta1;
    s.theta1 -= eta * g1;
    s.theta2 -= eta * g2;
  }
  return traj;
}

}  // namespace eos
