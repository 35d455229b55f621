#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "eos/dln2.hpp"
#include "eos/errors.hpp"
#include "eos/objective.hpp"
#include "eos/rng.hpp"
#include "eos/trainer.hpp"

using eos::Schedule;
using eos::Spectrum;
using eos::TrainOptions;

namespace {

Spectrum axes_spectrum(int dim, int k) {
  Spectrum s;
  for (int i = 0; i < k; ++i) {
    s.lambdas.push_back(static_cast<double>(k - i));
    s.vectors.push_back(Eigen::VectorXd::Unit(dim, i));
    s.residuals.push_back(0.0);
  }
  s.converged = true;
  return s;
}

struct EvenQuartic final : eos::Objective {
  // L = sum x_i^4: even in every coordinate
  Eigen::Index n;
  explicit EvenQuartic(Eigen::Index d) : n(d) {}
  Eigen::Index dim() const override { return n; }
  double value(const Eigen::VectorXd& x) const override {
    return x.array().square().square().sum();
  }
  Eigen::VectorXd gradient(const Eigen::VectorXd& x, double* v) const override {
    if (v) *v = value(x);
    return 4.0 * x.array().cube().matrix();
  }
  Eigen::VectorXd hvp(const Eigen::VectorXd& x, const Eigen::VectorXd& v) const override {
    return (12.0 * x.array().square() * v.array()).matrix();
  }
};

}  // namespace

TEST_CASE("gd_step on a 1-D quadratic: contraction, flip, expansion") {
  const double lambda = 4.0;
  const auto grad = [&](double theta) { return lambda * theta; };

  double theta = 1.0;
  // eta = 2/lambda: sign flips, magnitude constant
  Eigen::VectorXd p(1), g(1);
  p[0] = theta;
  g[0] = grad(theta);
  Eigen::VectorXd next = eos::gd_step(p, g, 2.0 / lambda);
  CHECK(next[0] == doctest::Approx(-1.0));

  // eta < 2/lambda: strict contraction
  next = p;
  for (int i = 0; i < 5; ++i) {
    g[0] = grad(next[0]);
    const double before = std::abs(next[0]);
    next = eos::gd_step(next, g, 0.3);
    CHECK(std::abs(next[0]) < before);
  }

  // eta > 2/lambda: strict expansion
  next = p;
  for (int i = 0; i < 5; ++i) {
    g[0] = grad(next[0]);
    const double before = std::abs(next[0]);
    next = eos::gd_step(next, g, 0.8);
    CHECK(std::abs(next[0]) > before);
  }
}

TEST_CASE("gd_step rejects non-finite updates") {
  Eigen::VectorXd p = Eigen::VectorXd::Ones(2);
  Eigen::VectorXd g(2);
  g << 1e308, 0.0;
  CHECK_THROWS_AS(eos::gd_step(p, g, 1e10), eos::NonFinite);
}

TEST_CASE("directional step: eta_u = eta_base is bit-identical to gd_step") {
  eos::CounterRng rng(71);
  const int dim = 12;
  const Spectrum spec = axes_spectrum(dim, 3);
  const Eigen::VectorXd p = rng.normal_vector(dim);
  const Eigen::VectorXd g = rng.normal_vector(dim);

  eos::DirectionalEta cfg;
  cfg.eta_base = 0.05;
  cfg.eta_unstable = 0.05;
  cfg.k = 3;
  cfg.mode = eos::DirectionalEta::Mode::kSuppress;
  const Eigen::VectorXd a = eos::directional_gd_step(p, g, spec, cfg);
  const Eigen::VectorXd b = eos::gd_step(p, g, 0.05);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("directional step: suppress with eta_u = 0 moves orthogonally") {
  eos::CounterRng rng(73);
  const int dim = 10;
  const Spectrum spec = axes_spectrum(dim, 2);
  const Eigen::VectorXd p = rng.normal_vector(dim);
  const Eigen::VectorXd g = rng.normal_vector(dim);

  eos::DirectionalEta cfg;
  cfg.eta_base = 0.1;
  cfg.eta_unstable = 0.0;
  cfg.k = 2;
  const Eigen::VectorXd next = eos::directional_gd_step(p, g, spec, cfg);
  const Eigen::VectorXd update = next - p;
  for (int i = 0; i < 2; ++i)
    CHECK(std::abs(update.dot(spec.vectors[static_cast<std::size_t>(i)])) <= 1e-10);
}

TEST_CASE("directional step: restrict_to with eta_u = 0 is a no-op") {
  eos::CounterRng rng(75);
  const int dim = 8;
  const Spectrum spec = axes_spectrum(dim, 2);
  const Eigen::VectorXd p = rng.normal_vector(dim);
  const Eigen::VectorXd g = rng.normal_vector(dim);
  eos::DirectionalEta cfg;
  cfg.eta_base = 0.1;
  cfg.eta_unstable = 0.0;
  cfg.k = 2;
  cfg.mode = eos::DirectionalEta::Mode::kRestrictTo;
  const Eigen::VectorXd next = eos::directional_gd_step(p, g, spec, cfg);
  CHECK((next - p).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("oscillation distance: constant, period-2, converging") {
  Eigen::VectorXd a = Eigen::VectorXd::Ones(3);
  CHECK(eos::oscillation_distance({a, a, a}) == doctest::Approx(0.0));

  Eigen::VectorXd b = -a;
  CHECK(eos::oscillation_distance({b, a}) == doctest::Approx(a.norm()));

  double prev = 1e9;
  for (int n = 2; n <= 6; ++n) {
    std::vector<Eigen::VectorXd> window;
    for (int i = 0; i < 4; ++i)
      window.push_back(a * std::pow(0.5, n + i));
    const double d = eos::oscillation_distance(window);
    CHECK(d < prev);
    prev = d;
  }
}

TEST_CASE("segment_phases: monotone, triangle, constant") {
  const auto make_log = [](const std::vector<double>& osc) {
    eos::TrajectoryLog log;
    for (std::size_t i = 0; i < osc.size(); ++i) {
      eos::StepRecord r;
      r.epoch = static_cast<int>(i);
      r.loss = 1.0;
      r.osc_dist = osc[i];
      log.records.push_back(r);
    }
    return log;
  };

  // monotone decreasing: one stable segment
  auto segs = eos::segment_phases(make_log({5, 4, 3, 2, 1}), 1);
  REQUIRE(segs.size() == 1);
  CHECK_FALSE(segs[0].unstable);
  CHECK(segs[0].start_epoch == 0);
  CHECK(segs[0].end_epoch == 4);
  CHECK(segs[0].peak_osc == doctest::Approx(5.0));

  // triangle wave: alternating labels with peaks at apexes
  segs = eos::segment_phases(make_log({0, 1, 2, 3, 2, 1, 0, 1, 2, 1, 0}), 1);
  REQUIRE(segs.size() >= 3);
  for (std::size_t i = 0; i + 1 < segs.size(); ++i)
    CHECK(segs[i].unstable != segs[i + 1].unstable);
  CHECK(segs[0].unstable);
  CHECK(segs[0].peak_osc == doctest::Approx(3.0));

  // constant: single stable segment (ties toward stable)
  segs = eos::segment_phases(make_log({2, 2, 2, 2}), 1);
  REQUIRE(segs.size() == 1);
  CHECK_FALSE(segs[0].unstable);

  CHECK_THROWS_AS(eos::segment_phases(make_log({1, 2}), 1), eos::TooShort);
}

TEST_CASE("landscape slice: offset 0 reproduces the current point exactly") {
  const EvenQuartic obj(5);
  eos::CounterRng rng(81);
  const Eigen::VectorXd x = rng.normal_vector(5);
  const Eigen::VectorXd dir = rng.normal_vector(5);
  const auto t = eos::landscape_slice(obj, x, dir, {0.0}, false);
  REQUIRE(t.points.size() == 1);
  CHECK(t.points[0].loss == obj.value(x));
}

TEST_CASE("landscape slice: quadratic loss gives an exact parabola") {
  struct Quad final : eos::Objective {
    Eigen::Index dim() const override { return 4; }
    double value(const Eigen::VectorXd& x) const override {
      return x.squaredNorm() + 0.5 * x[0] * x[1];
    }
    Eigen::VectorXd gradient(const Eigen::VectorXd& x, double* v) const override {
      if (v) *v = value(x);
      Eigen::VectorXd g = 2.0 * x;
      g[0] += 0.5 * x[1];
      g[1] += 0.5 * x[0];
      return g;
    }
    Eigen::VectorXd hvp(const Eigen::VectorXd&, const Eigen::VectorXd& v) const override {
      Eigen::VectorXd out = 2.0 * v;
      out[0] += 0.5 * v[1];
      out[1] += 0.5 * v[0];
      return out;
    }
  } obj;

  eos::CounterRng rng(83);
  const Eigen::VectorXd x = rng.normal_vector(4);
  const Eigen::VectorXd dir = rng.normal_vector(4);
  std::vector<double> offsets;
  for (int i = -6; i <= 6; ++i) offsets.push_back(0.25 * i);
  const auto t = eos::landscape_slice(obj, x, dir, offsets, false);

  // constant second differences on a uniform grid
  std::vector<double> ys;
  for (const auto& p : t.points) ys.push_back(p.loss);
  const double d2 = ys[2] - 2 * ys[1] + ys[0];
  for (std::size_t i = 2; i < ys.size(); ++i)
    CHECK(std::abs(ys[i] - 2 * ys[i - 1] + ys[i - 2] - d2) <= 1e-10);
}

TEST_CASE("landscape slice: even loss is symmetric around the origin") {
  const EvenQuartic obj(3);
  const Eigen::VectorXd x = Eigen::VectorXd::Zero(3);
  Eigen::VectorXd dir(3);
  dir << 1.0, -2.0, 0.5;
  std::vector<double> offsets{-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5};
  const auto t = eos::landscape_slice(obj, x, dir, offsets, false);
  for (int i = 0; i < 3; ++i)
    CHECK(t.points[static_cast<std::size_t>(i)].loss ==
          doctest::Approx(t.points[static_cast<std::size_t>(6 - i)].loss));
  CHECK_THROWS_AS(
      eos::landscape_slice(obj, x, Eigen::VectorXd::Zero(3), offsets, false),
      std::invalid_argument);
}

TEST_CASE("train on the 2-parameter DLN reproduces dln2_trajectory exactly") {
  const eos::PolyLoss z = eos::PolyLoss::quadratic();
  const eos::Dln2Objective obj(z);
  const double eta = 0.0095;
  const int steps = 400;

  const auto traj = eos::dln2_trajectory({-0.1, 10.0}, z, eta, steps);

  TrainOptions opt;
  opt.schedule = Schedule::constant(eta);
  opt.max_epochs = steps;
  opt.probes.with_sharpness = false;
  opt.probes.cadence = 1 << 30;
  Eigen::VectorXd init(2);
  init << -0.1, 10.0;
  const auto res = eos::train(obj, init, opt);

  REQUIRE(res.log.records.size() == static_cast<std::size_t>(steps));
  for (int k = 0; k < steps; ++k) {
    CHECK(res.log.records[static_cast<std::size_t>(k)].loss ==
          traj.points[static_cast<std::size_t>(k)].loss);
  }
  CHECK(res.final_params[0] == traj.points.back().state.theta1);
  CHECK(res.final_params[1] == traj.points.back().state.theta2);
}

TEST_CASE("train is deterministic: identical inputs, bit-identical logs") {
  const eos::PolyLoss z = eos::PolyLoss::quartic(0.2, 0.3);
  const eos::Dln2Objective obj(z);
  TrainOptions opt;
  opt.schedule = Schedule::constant(0.001);
  opt.max_epochs = 50;
  opt.probes.cadence = 5;
  opt.probes.lanczos_tol = 1e-8;
  Eigen::VectorXd init(2);
  init << 0.4, 3.0;

  const auto a = eos::train(obj, init, opt);
  const auto b = eos::train(obj, init, opt);
  REQUIRE(a.log.records.size() == b.log.records.size());
  for (std::size_t i = 0; i < a.log.records.size(); ++i) {
    CHECK(a.log.records[i].loss == b.log.records[i].loss);
    CHECK(a.log.records[i].grad_norm == b.log.records[i].grad_norm);
    CHECK(a.log.records[i].sharpness.has_value() ==
          b.log.records[i].sharpness.has_value());
    if (a.log.records[i].sharpness)
      CHECK(*a.log.records[i].sharpness == *b.log.records[i].sharpness);
  }
}

TEST_CASE("schedules switch eta_used exactly at the trigger") {
  const eos::PolyLoss z = eos::PolyLoss::quadratic();
  const eos::Dln2Objective obj(z);
  Eigen::VectorXd init(2);
  init << 0.1, 2.0;

  TrainOptions opt;
  opt.schedule = Schedule::reduce_at_epoch(0.01, 0.002, 7);
  opt.max_epochs = 12;
  opt.probes.with_sharpness = false;
  const auto res = eos::train(obj, init, opt);
  for (const auto& r : res.log.records)
    CHECK(r.eta_used == (r.epoch >= 7 ? 0.002 : 0.01));

  TrainOptions warm;
  warm.schedule.kind = eos::ScheduleKind::kWarmupThenConstant;
  warm.schedule.eta0 = 0.01;
  warm.schedule.warmup_epochs = 4;
  warm.max_epochs = 8;
  warm.probes.with_sharpness = false;
  const auto wres = eos::train(obj, init, warm);
  CHECK(wres.log.records[0].eta_used == doctest::Approx(0.0025));
  CHECK(wres.log.records[3].eta_used == doctest::Approx(0.01));
  CHECK(wres.log.records[7].eta_used == doctest::Approx(0.01));
}

TEST_CASE("divergence is recorded and the log retained") {
  const eos::PolyLoss z = eos::PolyLoss::quadratic();
  const eos::Dln2Objective obj(z);
  TrainOptions opt;
  opt.schedule = Schedule::constant(10.0);
  opt.max_epochs = 500;
  opt.probes.with_sharpness = false;
  Eigen::VectorXd init(2);
  init << 1.0, 1.5;
  const auto res = eos::train(obj, init, opt);
  CHECK(res.log.diverged);
  CHECK(res.log.records.size() >= 1);
  CHECK(res.log.records.size() < 500);
}

TEST_CASE("trajectory CSV has the pinned header and empty missing fields") {
  const eos::PolyLoss z = eos::PolyLoss::quadratic();
  const eos::Dln2Objective obj(z);
  TrainOptions opt;
  opt.schedule = Schedule::constant(0.001);
  opt.max_epochs = 6;
  opt.probes.cadence = 3;  // sharpness probed every 3rd epoch only
  Eigen::VectorXd init(2);
  init << 0.2, 2.0;
  auto res = eos::train(obj, init, opt);
  res.log.top_k = 0;
  const std::string path = "test_trainer_log.csv";
  res.log.write_csv(path);

  std::ifstream in(path);
  std::string header, row0, row1;
  std::getline(in, header);
  std::getline(in, row0);
  std::getline(in, row1);
  CHECK(header ==
        "epoch,loss,train_acc,sharpness,grad_norm,osc_dist,alpha,subspace_sim,eta_used");
  // epoch 1 is unprobed: sharpness column empty
  CHECK(row1.find(",,") != std::string::npos);
  std::remove(path.c_str());
}

TEST_CASE("checkpoints are captured at requested epochs and resumable") {
  const eos::PolyLoss z = eos::PolyLoss::quadratic();
  const eos::Dln2Objective obj(z);
  TrainOptions opt;
  opt.schedule = Schedule::constant(0.003);
  opt.max_epochs = 20;
  opt.probes.with_sharpness = false;
  opt.checkpoint_epochs = {5, 10};
  Eigen::VectorXd init(2);
  init << -0.1, 4.0;
  const auto res = eos::train(obj, init, opt);
  REQUIRE(res.checkpoints.count(5) == 1);
  REQUIRE(res.checkpoints.count(10) == 1);

  // resuming from the epoch-10 checkpoint reproduces the tail bit-exactly
  TrainOptions tail;
  tail.schedule = Schedule::constant(0.003);
  tail.max_epochs = 10;
  tail.start_epoch = 10;
  tail.probes.with_sharpness = false;
  const auto resumed = eos::train(obj, res.checkpoints.at(10), tail);
  CHECK(resumed.final_params[0] == res.final_params[0]);
  CHECK(resumed.final_params[1] == res.final_params[1]);
}
