#include "eos/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "eos/csv.hpp"
#include "eos/errors.hpp"

namespace eos {

namespace {

using Eigen::VectorXd;

constexpr double kCompletionAcc = 0.9999;
constexpr double kDivergenceNorm = 1e8;

VectorXd sharp_component(const VectorXd& grad, const Spectrum& spectrum, int k) {
  VectorXd g_sharp = VectorXd::Zero(grad.size());
  const int kk = std::min<int>(k, spectrum.size());
  for (int i = 0; i < kk; ++i) {
    const VectorXd& v = spectrum.vectors[static_cast<std::size_t>(i)];
    g_sharp.noalias() += grad.dot(v) * v;
  }
  return g_sharp;
}

}  // namespace

Schedule Schedule::constant(double eta) {
  Schedule s;
  s.kind = ScheduleKind::kConstant;
  s.eta0 = eta;
  return s;
}

Schedule Schedule::reduce_at_epoch(double eta0, double eta_small, int epoch) {
  Schedule s;
  s.kind = ScheduleKind::kReduceAtEpoch;
  s.eta0 = eta0;
  s.eta_small = eta_small;
  s.trigger_epoch = epoch;
  return s;
}

Schedule Schedule::reduce_at_train_acc(double eta0, double eta_small, double acc) {
  Schedule s;
  s.kind = ScheduleKind::kReduceAtTrainAcc;
  s.eta0 = eta0;
  s.eta_small = eta_small;
  s.trigger_acc = acc;
  return s;
}

void Schedule::validate() const {
  if (!(eta0 > 0.0)) throw ConfigInvalid("schedule: eta0 must be > 0");
  if (kind == ScheduleKind::kReduceAtEpoch || kind == ScheduleKind::kReduceAtTrainAcc) {
    if (!(eta_small > 0.0)) throw ConfigInvalid("schedule: eta_small must be > 0");
  }
  if (kind == ScheduleKind::kWarmupThenConstant && warmup_epochs < 0)
    throw ConfigInvalid("schedule: warmup_epochs must be >= 0");
  if (kind == ScheduleKind::kReduceAtEpoch && trigger_epoch < 0)
    throw ConfigInvalid("schedule: trigger epoch must be >= 0");
  if (kind == ScheduleKind::kReduceAtTrainAcc &&
      (trigger_acc <= 0.0 || trigger_acc > 1.0))
    throw ConfigInvalid("schedule: trigger accuracy must be in (0, 1]");
}

VectorXd gd_step(const VectorXd& params, const VectorXd& grad, double eta) {
  VectorXd next = params - eta * grad;
  if (!next.allFinite()) throw NonFinite("gd_step produced non-finite parameters");
  return next;
}

VectorXd directional_gd_step(const VectorXd& params, const VectorXd& grad,
                             const Spectrum& spectrum, const DirectionalEta& cfg) {
  const VectorXd g_sharp = sharp_component(grad, spectrum, cfg.k);
  VectorXd next;
  if (cfg.mode == DirectionalEta::Mode::kRestrictTo)
    next = params - cfg.eta_unstable * g_sharp;
  else
    next = params - cfg.eta_base * grad +
           (cfg.eta_base - cfg.eta_unstable) * g_sharp;
  if (!next.allFinite())
    throw NonFinite("directional_gd_step produced non-finite parameters");
  return next;
}

void TrajectoryLog::write_csv(const std::string& path) const {
  std::vector<std::string> header{"epoch",     "loss",    "train_acc",
                                  "sharpness", "grad_norm", "osc_dist",
                                  "alpha"};
  for (int i = 1; i <= top_k; ++i) header.push_back("eigsim_" + std::to_string(i));
  header.push_back("subspace_sim");
  header.push_back("eta_used");

  CsvWriter w(path, header);
  for (const auto& r : records) {
    std::vector<std::optional<double>> row;
    row.push_back(static_cast<double>(r.epoch));
    row.push_back(r.loss);
    row.push_back(r.train_acc ? std::optional<double>(*r.train_acc) : std::nullopt);
    row.push_back(r.sharpness ? std::optional<double>(*r.sharpness) : std::nullopt);
    row.push_back(r.grad_norm);
    row.push_back(r.osc_dist ? std::optional<double>(*r.osc_dist) : std::nullopt);
    row.push_back(r.alpha ? std::optional<double>(*r.alpha) : std::nullopt);
    for (int i = 0; i < top_k; ++i) {
      if (static_cast<std::size_t>(i) < r.eigsim.size())
        row.push_back(r.eigsim[static_cast<std::size_t>(i)]);
      else
        row.push_back(std::nullopt);
    }
    row.push_back(r.subspace_sim ? std::optional<double>(*r.subspace_sim)
                                 : std::nullopt);
    row.push_back(r.eta_used);
    w.row(row);
  }
}

void write_segments_csv(const std::string& path,
                        const std::vector<PhaseSegment>& segments) {
  CsvWriter w(path, {"start", "end", "label", "peak_osc"});
  for (const auto& s : segments)
    w.raw_row({std::to_string(s.start_epoch), std::to_string(s.end_epoch),
               s.unstable ? "unstable" : "stable", fmt_g17(s.peak_osc)});
}

double oscillation_distance(const std::vector<VectorXd>& window) {
  if (window.size() < 2)
    throw std::invalid_argument("oscillation_distance: window length >= 2");
  VectorXd mean = VectorXd::Zero(window.front().size());
  for (const auto& p : window) mean += p;
  mean /= static_cast<double>(window.size());
  return (window.back() - mean).norm();
}

TrainResult train(const Objective& obj, VectorXd init, const TrainOptions& options) {
  options.schedule.validate();
  if (options.max_epochs <= 0)
    throw std::invalid_argument("train: max_epochs must be > 0");
  if (options.probes.cadence < 1)
    throw std::invalid_argument("train: probe cadence >= 1 epoch");

  const ProbeConfig& probes = options.probes;
  TrainResult result;
  result.log.top_k = probes.top_k;

  VectorXd params = std::move(init);
  std::deque<VectorXd> window;

  bool reduced = false;  // latch for the reduce_* schedules
  Spectrum baseline;
  VectorXd warm_v1;

  const auto eta_at = [&](int epoch) {
    const Schedule& s = options.schedule;
    switch (s.kind) {
      case ScheduleKind::kConstant:
        return s.eta0;
      case ScheduleKind::kWarmupThenConstant:
        if (s.warmup_epochs > 0 && epoch < s.warmup_epochs)
          return s.eta0 * static_cast<double>(epoch + 1) /
                 static_cast<double>(s.warmup_epochs);
        return s.eta0;
      case ScheduleKind::kReduceAtEpoch:
        return epoch >= s.trigger_epoch ? s.eta_small : s.eta0;
      case ScheduleKind::kReduceAtTrainAcc:
        return reduced ? s.eta_small : s.eta0;
    }
    return s.eta0;
  };

  const LinearOperator hvp_op = [&](const VectorXd& v) {
    return obj.hvp(params, v);
  };

  for (int epoch = options.start_epoch;
       epoch < options.start_epoch + options.max_epochs; ++epoch) {
    if (!params.allFinite() || params.norm() > kDivergenceNorm) {
      result.log.diverged = true;
      break;
    }

    if (std::find(options.checkpoint_epochs.begin(), options.checkpoint_epochs.end(),
                  epoch) != options.checkpoint_epochs.end())
      result.checkpoints.emplace(epoch, params);

    double loss = 0.0;
    const VectorXd grad = obj.gradient(params, &loss);
    if (!std::isfinite(loss) || !grad.allFinite()) {
      result.log.diverged = true;
      break;
    }

    StepRecord rec;
    rec.epoch = epoch;
    rec.loss = loss;
    rec.grad_norm = grad.norm();
    rec.train_acc = obj.accuracy(params);

    if (rec.train_acc && options.schedule.kind == ScheduleKind::kReduceAtTrainAcc &&
        !reduced && *rec.train_acc >= options.schedule.trigger_acc)
      reduced = true;
    rec.eta_used = eta_at(epoch);

    window.push_back(params);
    while (static_cast<int>(window.size()) > probes.osc_window) window.pop_front();
    if (window.size() >= 2)
      rec.osc_dist = oscillation_distance({window.begin(), window.end()});

    const bool probe_epoch =
        (epoch - options.start_epoch) % probes.cadence == 0 ||
        std::find(probes.baseline_epochs.begin(), probes.baseline_epochs.end(),
                  epoch) != probes.baseline_epochs.end();
    const bool need_spectrum_for_step = options.intervention.has_value();

    if ((probe_epoch && (probes.with_sharpness || probes.top_k > 0)) ||
        need_spectrum_for_step) {
      const int k = std::max(probes.top_k,
                             options.intervention ? options.intervention->k : 0);
      const VectorXd* warm =
          probes.warm_start && warm_v1.size() == params.size() ? &warm_v1 : nullptr;
      Spectrum spec = top_k_eigen(hvp_op, params.size(), std::max(1, k),
                                  probes.lanczos_tol, probes.lanczos_max_iter,
                                  probes.seed, warm);
      warm_v1 = spec.vectors.front();
      if (probe_epoch && probes.with_sharpness) rec.sharpness = spec.top();

      if (probe_epoch && probes.with_alpha && rec.grad_norm >= 1e-12)
        rec.alpha = sharpening_factor(obj, params, spec, probes.alpha_method,
                                      probes.alpha_step)
                        .alpha;

      if (probes.top_k > 0) {
        if (std::find(probes.baseline_epochs.begin(), probes.baseline_epochs.end(),
                      epoch) != probes.baseline_epochs.end())
          baseline = spec;
        if (probe_epoch && baseline.size() >= probes.top_k) {
          const auto sim = eigvec_similarity(baseline, spec, probes.top_k);
          rec.eigsim = sim.per_vector;
          rec.subspace_sim =
              eigvec_similarity(baseline, spec,
                                std::min(probes.subspace_k, probes.top_k))
                  .subspace;
        }
      }
      if (options.spectrum_callback) options.spectrum_callback(epoch, spec);
      result.last_spectrum = std::move(spec);
    }

    result.log.records.push_back(rec);

    if (options.run_to_completion && rec.train_acc &&
        *rec.train_acc >= kCompletionAcc) {
      result.log.completed = true;
      break;
    }

    try {
      if (options.intervention) {
        DirectionalEta cfg = *options.intervention;
        cfg.eta_base = rec.eta_used;
        if (cfg.track_stability_fraction > 0.0 && result.last_spectrum.size() > 0)
          cfg.eta_unstable =
              std::min(cfg.eta_base, cfg.track_stability_fraction * 2.0 /
                                         result.last_spectrum.top());
        params = directional_gd_step(params, grad, result.last_spectrum, cfg);
      } else {
        params = gd_step(params, grad, rec.eta_used);
      }
    } catch (const NonFinite&) {
      result.log.diverged = true;
      break;
    }
  }

  result.final_params = std::move(params);
  return result;
}

TrainResult train(const MlpSpec& spec, const VectorXd& init, const Batch& batch,
                  const TrainOptions& options) {
  MlpObjective obj(spec, batch);
  return train(obj, init, options);
}

std::vector<PhaseSegment> segment_phases(const TrajectoryLog& log, int smoothing) {
  std::vector<int> epochs;
  std::vector<double> osc;
  for (const auto& r : log.records) {
    if (r.osc_dist) {
      epochs.push_back(r.epoch);
      osc.push_back(*r.osc_dist);
    }
  }
  const int n = static_cast<int>(osc.size());
  if (n < 3) throw TooShort("segment_phases: fewer than 3 probed points");

  // Centered moving average, window truncated at the ends.
  const int radius = std::max(0, smoothing / 2);
  std::vector<double> smooth(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - radius);
    const int hi = std::min(n - 1, i + radius);
    double acc = 0.0;
    for (int j = lo; j <= hi; ++j) acc += osc[static_cast<std::size_t>(j)];
    smooth[static_cast<std::size_t>(i)] = acc / static_cast<double>(hi - lo + 1);
  }

  // Rising diffs are unstable; ties resolve to stable.
  std::vector<bool> rising(static_cast<std::size_t>(n - 1));
  for (int i = 0; i + 1 < n; ++i)
    rising[static_cast<std::size_t>(i)] =
        smooth[static_cast<std::size_t>(i + 1)] > smooth[static_cast<std::size_t>(i)];

  std::vector<PhaseSegment> segs;
  int run_start = 0;
  for (int i = 1; i <= n - 1; ++i) {
    if (i == n - 1 || rising[static_cast<std::size_t>(i)] !=
                          rising[static_cast<std::size_t>(run_start)]) {
      PhaseSegment s;
      s.start_epoch = epochs[static_cast<std::size_t>(run_start)];
      s.end_epoch = epochs[static_cast<std::size_t>(i)];
      s.unstable = rising[static_cast<std::size_t>(run_start)];
      double peak = 0.0;
      for (int j = run_start; j <= i; ++j)
        peak = std::max(peak, osc[static_cast<std::size_t>(j)]);
      s.peak_osc = peak;
      if (!segs.empty() && segs.back().unstable == s.unstable) {
        segs.back().end_epoch = s.end_epoch;
        segs.back().peak_osc = std::max(segs.back().peak_osc, s.peak_osc);
      } else {
        segs.push_back(s);
      }
      run_start = i;
    }
  }
  return segs;
}

void SliceTable::write_csv(const std::string& path) const {
  CsvWriter w(path, {"offset", "loss", "sharpness"});
  for (const auto& p : points)
    w.row({p.offset, p.loss,
           p.sharpness ? std::optional<double>(*p.sharpness) : std::nullopt});
}

SliceTable landscape_slice(const Objective& obj, const VectorXd& params,
                           const VectorXd& direction,
                           const std::vector<double>& offsets,
                           bool with_sharpness, const ProbeConfig& probes) {
  const double dn = direction.norm();
  if (dn == 0.0)
    throw std::invalid_argument("landscape_slice: direction must be nonzero");
  const VectorXd dhat = direction / dn;

  SliceTable table;
  VectorXd warm;
  for (double s : offsets) {
    if (!std::isfinite(s))
      throw std::invalid_argument("landscape_slice: offsets must be finite");
    const VectorXd x = params + s * dhat;
    SlicePoint p;
    p.offset = s;
    p.loss = obj.value(x);
    if (with_sharpness) {
      const LinearOperator op = [&](const VectorXd& v) { return obj.hvp(x, v); };
      const VectorXd* w = warm.size() == x.size() ? &warm : nullptr;
      Spectrum spec = top_k_eigen(op, x.size(), 1, probes.lanczos_tol,
                                  probes.lanczos_max_iter, probes.seed, w);
      p.sharpness = spec.top();
      warm = spec.vectors.front();
    }
    table.points.push_back(std::move(p));
  }
  return table;
}

}  // namespace eos
