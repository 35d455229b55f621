#include "eos/recipes.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <deque>
#include <filesystem>
#include <fstream>
#include <thread>

#include "eos/csv.hpp"
#include "eos/checkpoint.hpp"
#include "eos/data_io.hpp"
#include "eos/dln2.hpp"
#include "eos/errors.hpp"
#include "eos/objective.hpp"
#include "eos/svg_plot.hpp"
#include "eos/synth_data.hpp"
#include "eos/trainer.hpp"

namespace eos {

namespace fs = std::filesystem;

namespace {

const char* kSeriesColors[] = {"#d62728", "#ff7f0e", "#1f77b4", "#9467bd",
                               "#2ca02c", "#8c564b", "#e377c2", "#7f7f7f"};

std::string now_iso() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::tm tm_utc;
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

std::string joined(const fs::path& dir, const std::string& name) {
  return (dir / name).string();
}

void run_cells(int n, int workers, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  for (auto& t : pool) t.join();
}

bool file_exists_either(const fs::path& dir, const std::string& base,
                        std::string& found) {
  for (const char* suffix : {"", ".gz"}) {
    const fs::path p = dir / (base + suffix);
    if (fs::exists(p)) {
      found = p.string();
      return true;
    }
  }
  return false;
}

Batch make_batch(const Dataset& ds) {
  Batch b;
  b.inputs = ds.images;
  b.labels = ds.labels;
  return b;
}

double eval_accuracy(const MlpSpec& spec, const Eigen::VectorXd& params,
                     const Batch& eval_batch) {
  return train_accuracy(spec, params, eval_batch);
}

std::vector<double> downsample(const std::vector<double>& v, std::size_t max_n) {
  if (v.size() <= max_n) return v;
  std::vector<double> out;
  const double stride = static_cast<double>(v.size()) / static_cast<double>(max_n);
  for (std::size_t i = 0; i < max_n; ++i)
    out.push_back(v[static_cast<std::size_t>(i * stride)]);
  return out;
}

/// Extracts (x=epoch, y=column) pairs from a trajectory CSV, skipping blanks.
PlotSeries series_from_csv(const std::string& csv_path, const std::string& col,
                           const std::string& color, const std::string& label) {
  const CsvTable t = read_csv(csv_path);
  const int ce = t.column("epoch");
  const int cy = t.column(col);
  PlotSeries s;
  s.color = color;
  s.label = label;
  if (ce < 0 || cy < 0) return s;
  for (std::size_t r = 0; r < t.cells.size(); ++r) {
    if (t.empty_cell(r, cy)) continue;
    s.x.push_back(t.num(r, ce));
    s.y.push_back(t.num(r, cy));
  }
  return s;
}

}  // namespace

bool RunManifest::any_error() const {
  return std::any_of(runs.begin(), runs.end(), [](const Run& r) {
    return r.status == "error" || r.status == "incomplete";
  });
}

void RunManifest::write(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest: " + path);
  out << "config_hash=" << config_hash << '\n';
  out << "code_version=" << code_version << '\n';
  out << "started=" << started << '\n';
  out << "finished=" << finished << '\n';
  for (const auto& r : runs) {
    out << "run id=" << r.id << " status=" << r.status;
    if (!r.detail.empty()) out << " detail=\"" << r.detail << "\"";
    out << " artifacts=";
    for (std::size_t i = 0; i < r.artifacts.size(); ++i) {
      if (i) out << ';';
      out << r.artifacts[i];
    }
    out << '\n';
  }
}

PreparedData prepare_data(const DatasetConfig& config) {
  PreparedData out;
  fs::path dir(config.dir);

  std::string train_images, train_labels, test_images, test_labels;
  const bool have_real =
      file_exists_either(dir, "train-images-idx3-ubyte", train_images) &&
      file_exists_either(dir, "train-labels-idx1-ubyte", train_labels) &&
      (!config.eval_from_test ||
       (file_exists_either(dir, "t10k-images-idx3-ubyte", test_images) &&
        file_exists_either(dir, "t10k-labels-idx1-ubyte", test_labels)));

  if (have_real) {
    out.source = "idx";
  } else {
    if (!config.synthetic_fallback)
      throw InsufficientData("dataset files missing under " + config.dir +
                             " and synthetic_fallback is disabled");
    const fs::path synth_dir = dir / "synthetic";
    std::string probe;
    if (!file_exists_either(synth_dir, "train-images-idx3-ubyte", probe)) {
      generate_synth_idx(synth_dir.string(), config.synthetic_train_pool,
                         config.synthetic_test_pool, /*seed=*/7);
    }
    dir = synth_dir;
    file_exists_either(dir, "train-images-idx3-ubyte", train_images);
    file_exists_either(dir, "train-labels-idx1-ubyte", train_labels);
    file_exists_either(dir, "t10k-images-idx3-ubyte", test_images);
    file_exists_either(dir, "t10k-labels-idx1-ubyte", test_labels);
    out.source = "synthetic";
  }

  const fs::path manifest = dir / "manifest.txt";
  if (fs::exists(manifest))
    out.warnings = verify_against_manifest(manifest.string(), dir.string());

  const Dataset train_raw = load_idx(train_images, train_labels);

  SubsetSpec train_spec;
  train_spec.train_count = config.train_count;
  train_spec.eval_count = config.eval_from_test ? 0 : config.eval_count;
  train_spec.selection = config.selection;
  train_spec.seed = config.seed;
  auto [train_ds, heldout] = subset(train_raw, train_spec);

  Dataset eval_ds;
  if (config.eval_from_test) {
    const Dataset test_raw = load_idx(test_images, test_labels);
    SubsetSpec eval_spec;
    eval_spec.train_count = config.eval_count;
    eval_spec.eval_count = 0;
    eval_spec.selection = config.selection;
    eval_spec.seed = config.seed;
    eval_ds = subset(test_raw, eval_spec).first;
  } else {
    eval_ds = heldout;
  }

  const Dataset train_norm = normalize(train_ds, train_ds);
  const Dataset eval_norm = normalize(eval_ds, train_ds);

  out.train_batch = make_batch(train_norm);
  out.eval_batch = make_batch(eval_norm);
  out.metadata = {
      "data_source=" + out.source,
      "data_dir=" + dir.string(),
      "train_count=" + std::to_string(config.train_count),
      "eval_count=" + std::to_string(config.eval_count),
      std::string("selection=") +
          (config.selection == SubsetSelection::kFirstN ? "first_n"
                                                        : "seeded_shuffle"),
      std::string("eval_from=") + (config.eval_from_test ? "test" : "train_split"),
      "normalization=scalar",
      "norm_mean=" + fmt_g17(train_norm.mean),
      "norm_std=" + fmt_g17(train_norm.std),
  };
  return out;
}

StabilityMeasurement measure_stability_limit(const MlpSpec& spec,
                                             const Eigen::VectorXd& init,
                                             const Batch& batch, double eta_probe,
                                             const ProbeConfig& probes,
                                             int max_epochs) {
  ProbeConfig p = probes;
  p.top_k = 0;
  p.with_sharpness = true;
  p.with_alpha = false;

  const double ceiling = 2.0 / eta_probe;
  std::vector<double> s_series;
  StabilityMeasurement m;

  Eigen::VectorXd params = init;
  int epoch = 0;
  const int chunk = std::max(10 * p.cadence, 20);
  const int window = 15;  // probes, not epochs
  while (epoch < max_epochs) {
    TrainOptions opt;
    opt.schedule = Schedule::constant(eta_probe);
    opt.max_epochs = std::min(chunk, max_epochs - epoch);
    opt.probes = p;
    opt.start_epoch = epoch;
    TrainResult res = train(MlpObjective(spec, batch), params, opt);
    for (const auto& r : res.log.records)
      if (r.sharpness) s_series.push_back(*r.sharpness);
    params = res.final_params;
    epoch += opt.max_epochs;
    if (res.log.diverged) break;

    if (!s_series.empty() && s_series.back() >= 0.95 * ceiling) break;
    if (static_cast<int>(s_series.size()) >= 2 * window) {
      const double recent = s_series.back();
      const double before = s_series[s_series.size() - window];
      if (std::abs(recent - before) < 0.02 * std::max(recent, before)) break;
    }
  }

  if (s_series.empty())
    throw TooShort("stability measurement produced no sharpness probes");
  // plateau level: median of the trailing window
  std::vector<double> tail(s_series.end() - std::min<std::size_t>(window, s_series.size()),
                           s_series.end());
  std::nth_element(tail.begin(), tail.begin() + tail.size() / 2, tail.end());
  m.s_plateau = tail[tail.size() / 2];
  m.eta_limit = 2.0 / m.s_plateau;
  m.epochs_used = epoch;
  return m;
}

// ---------------------------------------------------------------------------
// dln_phase_map
// ---------------------------------------------------------------------------

void recipe_dln_phase_map(const ExperimentConfig& cfg, RunManifest& manifest) {
  const fs::path out(cfg.output_dir);
  fs::create_directories(out);

  const PolyLoss loss(cfg.dln.coeffs);
  const Dln2State init{cfg.dln.theta1, cfg.dln.theta2};
  const PhaseThresholds th = dln2_thresholds(init, loss);

  {
    CsvWriter w(joined(out, "thresholds.csv"),
                {"eta_half", "eta_gamma1", "eta_eos", "xi"});
    w.row({th.eta_half, th.eta_gamma1, th.eta_eos, th.xi});
  }

  std::vector<std::string> traj_csvs;
  double span1 = std::abs(init.theta1), span2 = std::abs(init.theta2);
  for (std::size_t i = 0; i < cfg.dln.etas.size(); ++i) {
    const double eta = cfg.dln.etas[i];
    Dln2Trajectory traj = dln2_trajectory(init, loss, eta, cfg.dln.steps);
    const std::string csv = joined(out, "dln_traj_" + std::to_string(i) + ".csv");
    traj.write_csv(csv);
    traj_csvs.push_back(csv);
    for (const auto& p : traj.points) {
      span1 = std::max(span1, std::abs(p.state.theta1));
      span2 = std::max(span2, std::abs(p.state.theta2));
    }
    RunManifest::Run run;
    run.id = "dln_traj eta=" + fmt_g17(eta);
    run.status = traj.diverged ? "diverged" : "completed";
    run.artifacts = {csv};
    manifest.runs.push_back(run);
  }

  // gamma_beta vs eta at the initial state, closed form and one-step exact.
  {
    CsvWriter w(joined(out, "gamma_curve.csv"), {"eta", "gamma_beta", "gamma_exact"});
    const int n = std::max(16, cfg.dln.curve_points);
    const double hi = 1.25 * th.eta_eos;
    for (int i = 1; i <= n; ++i) {
      const double eta = hi * static_cast<double>(i) / n;
      std::optional<double> g, ge;
      try {
        g = dln2_gamma_beta(init, loss, eta);
      } catch (const Error&) {
      }
      try {
        ge = dln2_gamma_beta_exact(init, loss, eta);
      } catch (const Error&) {
      }
      w.row({eta, g ? std::optional<double>(*g) : std::nullopt,
             ge ? std::optional<double>(*ge) : std::nullopt});
    }
  }

  // Loss contours are hyperbolas theta1*theta2 = c.
  {
    CsvWriter w(joined(out, "contours.csv"), {"level", "theta1", "theta2"});
    const double t0 = std::abs(init.product());
    for (double frac : {0.1, 0.3, 0.6, 1.0, 1.5}) {
      const double c = t0 * frac;
      if (c == 0.0) continue;
      for (double sign : {1.0, -1.0}) {
        for (int i = 0; i < 160; ++i) {
          const double x = span1 * 1.1 * (0.02 + static_cast<double>(i) / 160.0);
          const double y = sign * c / x;
          if (std::abs(y) > span2 * 1.2) continue;
          w.row({loss.value(c), sign * x, y});
        }
      }
    }
  }

  // SVG renderings from the CSVs written above.
  {
    const CsvTable curve = read_csv(joined(out, "gamma_curve.csv"));
    PlotSeries approx, exact;
    approx.color = "#1f77b4";
    approx.label = "closed form";
    exact.color = "#d62728";
    exact.label = "one-step exact";
    exact.dashed = true;
    for (std::size_t r = 0; r < curve.cells.size(); ++r) {
      if (!curve.empty_cell(r, 1)) {
        approx.x.push_back(curve.num(r, 0));
        approx.y.push_back(std::min(curve.num(r, 1), 5.0));
      }
      if (!curve.empty_cell(r, 2)) {
        exact.x.push_back(curve.num(r, 0));
        exact.y.push_back(std::min(curve.num(r, 2), 5.0));
      }
    }
    PlotOptions opt;
    opt.title = "gamma_beta vs eta";
    opt.x_label = "eta";
    opt.y_label = "gamma_beta";
    opt.vlines = {th.eta_half, th.eta_gamma1, th.eta_eos};
    opt.vline_labels = {"eta_half", "eta_gamma1", "eta_eos"};
    write_svg_plot(joined(out, "gamma_curve.svg"), {approx, exact}, opt);
  }
  {
    std::vector<PlotSeries> series;
    const CsvTable contours = read_csv(joined(out, "contours.csv"));
    PlotSeries cs;
    double last_level = std::nan("");
    for (std::size_t r = 0; r < contours.cells.size(); ++r) {
      const double level = contours.num(r, 0);
      const double x = contours.num(r, 1);
      if (level != last_level || (!cs.x.empty() && x * cs.x.back() < 0)) {
        if (cs.x.size() > 1) series.push_back(cs);
        cs = PlotSeries{};
        cs.color = "#cccccc";
        cs.stroke_width = 0.8;
        last_level = level;
      }
      cs.x.push_back(x);
      cs.y.push_back(contours.num(r, 2));
    }
    if (cs.x.size() > 1) series.push_back(cs);

    for (std::size_t i = 0; i < traj_csvs.size(); ++i) {
      const CsvTable t = read_csv(traj_csvs[i]);
      PlotSeries s;
      s.color = kSeriesColors[i % 8];
      s.label = "eta=" + fmt_g17(cfg.dln.etas[i]);
      for (std::size_t r = 0; r < t.cells.size(); ++r) {
        s.x.push_back(t.num(r, 1));
        s.y.push_back(t.num(r, 2));
      }
      s.x = downsample(s.x, 1500);
      s.y = downsample(s.y, 1500);
      series.push_back(s);
    }
    PlotOptions opt;
    opt.title = "DLN trajectories over loss contours";
    opt.x_label = "theta1";
    opt.y_label = "theta2";
    write_svg_plot(joined(out, "trajectories.svg"), series, opt);
  }

  RunManifest::Run run;
  run.id = "dln_phase_map";
  run.status = "completed";
  run.artifacts = {joined(out, "thresholds.csv"), joined(out, "gamma_curve.csv"),
                   joined(out, "contours.csv"), joined(out, "gamma_curve.svg"),
                   joined(out, "trajectories.svg")};
  manifest.runs.push_back(run);
}

// ---------------------------------------------------------------------------
// rotation_tracking
// ---------------------------------------------------------------------------

namespace {

struct InstabilityWindow {
  int start = 0;
  int end = 0;  // inclusive, extended by the configured margin
};

std::vector<InstabilityWindow> find_windows(const TrajectoryLog& log,
                                            const RotationConfig& rc,
                                            int last_epoch) {
  std::vector<InstabilityWindow> windows;
  for (const auto& seg : segment_phases(log, rc.smoothing)) {
    if (!seg.unstable) continue;
    if (seg.end_epoch - seg.start_epoch < rc.min_window_epochs) continue;
    InstabilityWindow w;
    w.start = seg.start_epoch;
    w.end = std::min(last_epoch, seg.end_epoch + rc.margin_epochs);
    windows.push_back(w);
    if (static_cast<int>(windows.size()) >= rc.max_windows) break;
  }
  return windows;
}

}  // namespace

void recipe_rotation_tracking(const ExperimentConfig& cfg, RunManifest& manifest) {
  const fs::path out(cfg.output_dir);
  fs::create_directories(out);

  PreparedData data = prepare_data(cfg.dataset);
  MlpSpec spec = cfg.model;
  spec.seed = cfg.seeds.front();
  const Eigen::VectorXd init = init_params(spec);
  const MlpObjective obj(spec, data.train_batch);

  // Pass 1: cheap scan to locate instability windows.
  TrainOptions scan;
  scan.schedule = cfg.schedule;
  scan.max_epochs = cfg.max_epochs;
  scan.probes = cfg.probes;
  scan.probes.top_k = 0;
  scan.probes.with_alpha = false;
  scan.probes.cadence = 1;
  TrainResult pass1 = train(obj, init, scan);
  pass1.log.write_csv(joined(out, "scan.csv"));
  write_segments_csv(joined(out, "scan_segments.csv"),
                     segment_phases(pass1.log, cfg.rotation.smoothing));

  const int last_epoch = pass1.log.records.empty()
                             ? 0
                             : pass1.log.records.back().epoch;
  const auto windows = find_windows(pass1.log, cfg.rotation, last_epoch);
  if (windows.empty()) {
    RunManifest::Run run;
    run.id = "rotation_tracking";
    run.status = "error";
    run.detail = "no instability window detected in the scan";
    run.artifacts = {joined(out, "scan.csv")};
    manifest.runs.push_back(run);
    return;
  }

  // Pass 2: deterministic replay collecting checkpoints at window starts.
  TrainOptions replay;
  replay.schedule = cfg.schedule;
  replay.max_epochs = cfg.max_epochs;
  replay.probes.with_sharpness = false;
  replay.probes.cadence = 1 << 30;
  for (const auto& w : windows) replay.checkpoint_epochs.push_back(w.start);
  TrainResult pass2 = train(obj, init, replay);

  const int k = std::max(3, cfg.probes.top_k);
  for (std::size_t wi = 0; wi < windows.size(); ++wi) {
    const auto& w = windows[wi];
    const auto ck = pass2.checkpoints.find(w.start);
    if (ck == pass2.checkpoints.end()) {
      RunManifest::Run run;
      run.id = "rotation_window_" + std::to_string(wi);
      run.status = "error";
      run.detail = "missing checkpoint at window start";
      manifest.runs.push_back(run);
      continue;
    }

    const int span = w.end - w.start + 1;
    const int max_period =
        *std::max_element(cfg.rotation.periods.begin(), cfg.rotation.periods.end());

    // Tracked window: per-epoch spectra, baseline at the window start.
    std::deque<std::pair<int, Spectrum>> recent;
    std::vector<std::vector<std::optional<double>>> period_rows;
    TrainOptions tracked;
    tracked.schedule = cfg.schedule;
    tracked.max_epochs = span;
    tracked.start_epoch = w.start;
    tracked.probes = cfg.probes;
    tracked.probes.cadence = 1;
    tracked.probes.top_k = k;
    tracked.probes.subspace_k = 3;
    tracked.probes.baseline_epochs = {w.start};
    tracked.spectrum_callback = [&](int epoch, const Spectrum& s) {
      recent.emplace_back(epoch, s);
      while (static_cast<int>(recent.size()) > max_period + 1) recent.pop_front();
      std::vector<std::optional<double>> row{static_cast<double>(epoch)};
      for (int period : cfg.rotation.periods) {
        std::optional<double> sim;
        for (const auto& [e0, s0] : recent)
          if (e0 == epoch - period)
            sim = eigvec_similarity(s0, s, std::min(3, k)).subspace;
        row.push_back(sim);
      }
      period_rows.push_back(std::move(row));
    };
    TrainResult win = train(obj, ck->second, tracked);

    const std::string wcsv = joined(out, "rotation_window_" + std::to_string(wi) + ".csv");
    win.log.write_csv(wcsv);
    {
      std::vector<std::string> header{"epoch"};
      for (int period : cfg.rotation.periods)
        header.push_back("subspace_sim_T" + std::to_string(period));
      CsvWriter pw(joined(out, "rotation_window_" + std::to_string(wi) + "_periods.csv"),
                   header);
      for (const auto& row : period_rows) pw.row(row);
    }

    RunManifest::Run run;
    run.id = "rotation_window_" + std::to_string(wi);
    run.status = win.log.diverged ? "diverged" : "completed";
    run.artifacts = {wcsv};

    // Eta-reduction variants from the same checkpoint.
    for (int offset : cfg.rotation.reduction_offsets) {
      TrainOptions red = tracked;
      red.spectrum_callback = nullptr;
      red.schedule = Schedule::reduce_at_epoch(
          cfg.schedule.eta0, cfg.rotation.reduction_factor * cfg.schedule.eta0,
          w.start + offset);
      red.max_epochs = span + 30;
      TrainResult rr = train(obj, ck->second, red);
      const std::string rcsv = joined(
          out, "rotation_window_" + std::to_string(wi) + "_reduce_" +
                   std::to_string(offset) + ".csv");
      rr.log.write_csv(rcsv);
      run.artifacts.push_back(rcsv);
    }
    manifest.runs.push_back(run);

    // Similarity curves rendered from the CSVs.
    std::vector<PlotSeries> series;
    series.push_back(series_from_csv(wcsv, "subspace_sim", "#000000", "top-3 subspace"));
    for (int i = 1; i <= std::min(3, k); ++i)
      series.push_back(series_from_csv(wcsv, "eigsim_" + std::to_string(i),
                                       kSeriesColors[i % 8],
                                       "v" + std::to_string(i)));
    PlotOptions opt;
    opt.title = "eigenvector similarity, window " + std::to_string(wi);
    opt.x_label = "epoch";
    opt.y_label = "similarity";
    write_svg_plot(joined(out, "rotation_window_" + std::to_string(wi) + ".svg"),
                   series, opt);
  }

  std::ofstream meta(joined(out, "run_metadata.txt"));
  for (const auto& line : data.metadata) meta << line << '\n';
}

// ---------------------------------------------------------------------------
// landscape_movie
// ---------------------------------------------------------------------------

void recipe_landscape_movie(const ExperimentConfig& cfg, RunManifest& manifest) {
  const fs::path out(cfg.output_dir);
  fs::create_directories(out);

  PreparedData data = prepare_data(cfg.dataset);
  MlpSpec spec = cfg.model;
  spec.seed = cfg.seeds.front();
  const Eigen::VectorXd init = init_params(spec);
  const MlpObjective obj(spec, data.train_batch);

  TrainOptions scan;
  scan.schedule = cfg.schedule;
  scan.max_epochs = cfg.max_epochs;
  scan.probes = cfg.probes;
  scan.probes.top_k = 0;
  scan.probes.cadence = 1;
  TrainResult pass1 = train(obj, init, scan);
  pass1.log.write_csv(joined(out, "scan.csv"));

  const auto segments = segment_phases(pass1.log, cfg.rotation.smoothing);
  const PhaseSegment* unstable = nullptr;
  for (const auto& s : segments)
    if (s.unstable && s.end_epoch - s.start_epoch >= 2) {
      unstable = &s;
      break;
    }
  if (!unstable)
    throw MissingCheckpoints(
        "landscape_movie: no instability cycle found in the scan window");

  const int last_epoch = pass1.log.records.back().epoch;
  const int cycle_start = std::max(0, unstable->start_epoch - cfg.landscape.stride_epochs);
  const int cycle_end = std::min(last_epoch, unstable->end_epoch + cfg.landscape.stride_epochs);

  TrainOptions replay;
  replay.schedule = cfg.schedule;
  replay.max_epochs = cfg.max_epochs;
  replay.probes.with_sharpness = false;
  replay.probes.cadence = 1 << 30;
  for (int e = cycle_start; e <= cycle_end; e += cfg.landscape.stride_epochs) {
    if (e > 0) replay.checkpoint_epochs.push_back(e - 1);
    replay.checkpoint_epochs.push_back(e);
  }
  TrainResult pass2 = train(obj, init, replay);

  CsvWriter index(joined(out, "movie_index.csv"),
                  {"epoch", "prev_offset", "loss_at_0", "sharpness_at_0"});
  RunManifest::Run run;
  run.id = "landscape_movie";
  run.status = "completed";
  run.artifacts = {joined(out, "scan.csv"), joined(out, "movie_index.csv")};

  for (int e = cycle_start; e <= cycle_end; e += cfg.landscape.stride_epochs) {
    const auto ck = pass2.checkpoints.find(e);
    if (ck == pass2.checkpoints.end())
      throw MissingCheckpoints("landscape_movie: checkpoint missing at epoch " +
                               std::to_string(e));
    const Eigen::VectorXd& params = ck->second;
    const Eigen::VectorXd grad = obj.gradient(params);
    const double gn = grad.norm();
    const Eigen::VectorXd dhat = grad / gn;

    double prev_offset = 0.0;
    if (const auto pk = pass2.checkpoints.find(e - 1); pk != pass2.checkpoints.end())
      prev_offset = (pk->second - params).dot(dhat);

    double max_off = cfg.landscape.max_offset;
    if (max_off <= 0.0)
      max_off = std::max(4.0 * cfg.schedule.eta0 * gn, 2.0 * std::abs(prev_offset));

    std::vector<double> offsets;
    const int m = cfg.landscape.offsets_per_side;
    for (int i = -m; i <= m; ++i)
      offsets.push_back(max_off * static_cast<double>(i) / m);

    const SliceTable slice = landscape_slice(obj, params, dhat, offsets,
                                             cfg.landscape.with_sharpness,
                                             cfg.probes);
    const std::string scsv = joined(out, "slice_" + std::to_string(e) + ".csv");
    slice.write_csv(scsv);
    run.artifacts.push_back(scsv);

    double loss0 = 0.0, sharp0 = 0.0;
    for (const auto& p : slice.points)
      if (p.offset == 0.0) {
        loss0 = p.loss;
        sharp0 = p.sharpness.value_or(0.0);
      }
    index.row({static_cast<double>(e), prev_offset, loss0,
               cfg.landscape.with_sharpness ? std::optional<double>(sharp0)
                                            : std::nullopt});

    PlotSeries ls, ss;
    ls.label = "loss";
    ls.color = "#1f77b4";
    ss.label = "sharpness";
    ss.color = "#d62728";
    for (const auto& p : slice.points) {
      ls.x.push_back(p.offset);
      ls.y.push_back(p.loss);
      if (p.sharpness) {
        ss.x.push_back(p.offset);
        ss.y.push_back(*p.sharpness);
      }
    }
    PlotOptions opt;
    opt.title = "slice at epoch " + std::to_string(e);
    opt.x_label = "offset along gradient";
    opt.vlines = {prev_offset, 0.0};
    opt.vline_labels = {"prev", "current"};
    write_svg_plot(joined(out, "slice_" + std::to_string(e) + ".svg"),
                   cfg.landscape.with_sharpness
                       ? std::vector<PlotSeries>{ls, ss}
                       : std::vector<PlotSeries>{ls},
                   opt);
  }
  manifest.runs.push_back(run);
}

// ---------------------------------------------------------------------------
// progressive_flattening
// ---------------------------------------------------------------------------

namespace {

struct FlatteningCell {
  double eta0 = 0.0;
  int reduction_epoch = 0;
  double s_max = std::nan("");
  std::string status = "completed";
  int epochs = 0;
  std::string csv;
};

}  // namespace

void recipe_progressive_flattening(const ExperimentConfig& cfg,
                                   RunManifest& manifest, int workers) {
  const fs::path out(cfg.output_dir);
  fs::create_directories(out);

  PreparedData data = prepare_data(cfg.dataset);
  MlpSpec spec = cfg.model;
  spec.seed = cfg.seeds.front();
  const Eigen::VectorXd init = init_params(spec);
  const FlatteningConfig& fc = cfg.flattening;

  std::vector<double> eta0s = fc.eta0_grid;
  if (fc.include_control_row)
    eta0s.push_back(fc.control_eta0 > 0.0 ? fc.control_eta0 : fc.eta_small);

  std::vector<FlatteningCell> cells;
  for (double eta0 : eta0s)
    for (int red : fc.reduction_epochs)
      cells.push_back({eta0, red, std::nan(""), "completed", 0, ""});

  run_cells(static_cast<int>(cells.size()), workers, [&](int ci) {
    FlatteningCell& cell = cells[static_cast<std::size_t>(ci)];
    try {
      const MlpObjective obj(spec, data.train_batch);
      ProbeConfig probes = cfg.probes;
      probes.top_k = 0;
      probes.with_alpha = false;

      TrajectoryLog combined;
      Eigen::VectorXd params = init;
      int epoch = 0;

      if (cell.reduction_epoch > 0) {
        TrainOptions a;
        a.schedule = Schedule::constant(cell.eta0);
        a.max_epochs = cell.reduction_epoch;
        a.probes = probes;
        TrainResult ra = train(obj, params, a);
        combined.records = ra.log.records;
        params = ra.final_params;
        epoch = cell.reduction_epoch;
        if (ra.log.diverged) {
          cell.status = "diverged";
          cell.epochs = epoch;
        }
      }

      std::vector<std::pair<int, double>> s_series;  // (epoch, sharpness) after reduction
      if (cell.status == "completed") {
        const double ceiling = 2.0 / fc.eta_small;
        while (epoch < cell.reduction_epoch + fc.max_epochs_after) {
          TrainOptions b;
          b.schedule = Schedule::constant(fc.eta_small);
          b.max_epochs = std::min(fc.plateau_window,
                                  cell.reduction_epoch + fc.max_epochs_after - epoch);
          b.probes = probes;
          b.start_epoch = epoch;
          TrainResult rb = train(obj, params, b);
          for (const auto& r : rb.log.records) {
            combined.records.push_back(r);
            if (r.sharpness) s_series.emplace_back(r.epoch, *r.sharpness);
          }
          params = rb.final_params;
          epoch += b.max_epochs;
          if (rb.log.diverged) {
            cell.status = "diverged";
            break;
          }
          if (!s_series.empty() && s_series.back().second >= 0.98 * ceiling) break;
          // plateau: spread of sharpness over the trailing window below the
          // configured relative change
          const int w0 = s_series.empty() ? 0 : s_series.back().first - fc.plateau_window;
          double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
          int count = 0;
          for (const auto& [e, s] : s_series)
            if (e >= w0) {
              lo = std::min(lo, s);
              hi = std::max(hi, s);
              ++count;
            }
          if (count >= 3 && epoch - cell.reduction_epoch >= fc.plateau_window &&
              (hi - lo) <= fc.plateau_rel_change * hi)
            break;
        }
        cell.epochs = epoch;
        for (const auto& [e, s] : s_series) cell.s_max = std::isnan(cell.s_max)
                                                             ? s
                                                             : std::max(cell.s_max, s);
      }

      cell.csv = joined(out, "flatten_eta" + fmt_g17(cell.eta0) + "_red" +
                                 std::to_string(cell.reduction_epoch) + ".csv");
      combined.top_k = 0;
      combined.write_csv(cell.csv);
    } catch (const std::exception& e) {
      cell.status = "error";
      cell.csv = e.what();
    }
  });

  CsvWriter grid(joined(out, "smax_grid.csv"),
                 {"eta0", "reduction_epoch", "s_max", "epochs"});
  for (const auto& cell : cells) {
    grid.raw_row({fmt_g17(cell.eta0), std::to_string(cell.reduction_epoch),
                  std::isnan(cell.s_max) ? "" : fmt_g17(cell.s_max),
                  std::to_string(cell.epochs)});
    RunManifest::Run run;
    run.id = "flatten eta0=" + fmt_g17(cell.eta0) +
             " red=" + std::to_string(cell.reduction_epoch);
    run.status = cell.status;
    if (cell.status == "error")
      run.detail = cell.csv;
    else
      run.artifacts = {cell.csv};
    manifest.runs.push_back(run);
  }

  std::vector<std::vector<double>> values;
  std::vector<std::string> row_labels, col_labels;
  for (int red : fc.reduction_epochs) col_labels.push_back(std::to_string(red));
  std::size_t idx = 0;
  for (double eta0 : eta0s) {
    row_labels.push_back("eta0=" + fmt_g17(eta0));
    std::vector<double> row;
    for (std::size_t c = 0; c < fc.reduction_epochs.size(); ++c)
      row.push_back(cells[idx++].s_max);
    values.push_back(row);
  }
  write_svg_heatmap(joined(out, "smax_grid.svg"), values, row_labels, col_labels,
                    "plateau sharpness after eta reduction");

  RunManifest::Run run;
  run.id = "progressive_flattening";
  run.status = "completed";
  run.artifacts = {joined(out, "smax_grid.csv"), joined(out, "smax_grid.svg")};
  manifest.runs.push_back(run);
}

// ---------------------------------------------------------------------------
// lr_sweep
// ---------------------------------------------------------------------------

namespace {

struct SweepRun {
  double eta = 0.0;
  std::uint64_t seed = 0;
  std::string status = "completed";
  int epochs = 0;
  double train_acc = 0.0;
  double val_acc = std::nan("");
  std::string csv;
  std::string detail;
};

}  // namespace

void recipe_lr_sweep(const ExperimentConfig& cfg, RunManifest& manifest,
                     int workers) {
  const fs::path out(cfg.output_dir);
  fs::create_directories(out);

  PreparedData data = prepare_data(cfg.dataset);

  // Stability limit measured from the sharpness plateau at the probe eta.
  MlpSpec probe_spec = cfg.model;
  probe_spec.seed = cfg.seeds.front();
  const double eta_probe =
      cfg.sweep.etas.empty() ? cfg.sweep.start : cfg.sweep.etas.front();
  const StabilityMeasurement limit = measure_stability_limit(
      probe_spec, init_params(probe_spec), data.train_batch, eta_probe,
      cfg.probes, std::min(cfg.max_epochs, 500));
  {
    CsvWriter w(joined(out, "stability.csv"),
                {"eta_probe", "s_plateau", "eta_limit", "epochs_used"});
    w.row({eta_probe, limit.s_plateau, limit.eta_limit,
           static_cast<double>(limit.epochs_used)});
  }

  std::vector<double> etas = cfg.sweep.etas;
  if (etas.empty()) {
    if (cfg.sweep.center_on_measured_limit) {
      for (int i = 0; i < cfg.sweep.count; ++i) {
        const double expo = static_cast<double>(i) -
                            static_cast<double>(cfg.sweep.count) / 2.0 + 0.5;
        etas.push_back(limit.eta_limit * std::pow(cfg.sweep.factor, expo));
      }
    } else {
      double eta = cfg.sweep.start;
      for (int i = 0; i < cfg.sweep.max_steps; ++i) {
        etas.push_back(eta);
        eta *= cfg.sweep.factor;
      }
    }
  }

  std::vector<SweepRun> all_runs;
  bool stopped = false;
  for (double eta : etas) {
    if (stopped) break;
    std::vector<SweepRun> wave(cfg.seeds.size());
    run_cells(static_cast<int>(cfg.seeds.size()), workers, [&](int si) {
      SweepRun& sr = wave[static_cast<std::size_t>(si)];
      sr.eta = eta;
      sr.seed = cfg.seeds[static_cast<std::size_t>(si)];
      try {
        MlpSpec spec = cfg.model;
        spec.seed = sr.seed;
        TrainOptions opt;
        opt.schedule = Schedule::constant(eta);
        opt.max_epochs = cfg.max_epochs;
        opt.run_to_completion = true;
        opt.probes.with_sharpness = false;
        opt.probes.cadence = 1 << 30;
        const MlpObjective obj(spec, data.train_batch);
        TrainResult res = train(obj, init_params(spec), opt);

        sr.epochs = static_cast<int>(res.log.records.size());
        sr.train_acc = res.log.records.empty()
                           ? 0.0
                           : res.log.records.back().train_acc.value_or(0.0);
        if (res.log.diverged) {
          sr.status = "diverged";
        } else if (!res.log.completed) {
          sr.status = "incomplete";
          sr.detail = "did not reach 99.99% train accuracy within max_epochs";
        } else {
          sr.val_acc = eval_accuracy(spec, res.final_params, data.eval_batch);
        }
        sr.csv = joined(out, "run_eta" + fmt_g17(eta) + "_seed" +
                                 std::to_string(sr.seed) + ".csv");
        res.log.write_csv(sr.csv);
      } catch (const std::exception& e) {
        sr.status = "error";
        sr.detail = e.what();
      }
    });
    const bool all_diverged =
        std::all_of(wave.begin(), wave.end(),
                    [](const SweepRun& r) { return r.status == "diverged"; });
    for (auto& r : wave) all_runs.push_back(std::move(r));
    if (all_diverged) stopped = true;
  }

  {
    CsvWriter w(joined(out, "sweep_runs.csv"),
                {"eta", "seed", "status", "epochs", "train_acc", "val_acc"});
    for (const auto& r : all_runs)
      w.raw_row({fmt_g17(r.eta), std::to_string(r.seed), r.status,
                 std::to_string(r.epochs), fmt_g17(r.train_acc),
                 std::isnan(r.val_acc) ? "" : fmt_g17(r.val_acc)});
  }

  {
    CsvWriter w(joined(out, "sweep_summary.csv"),
                {"eta", "mean_val_acc", "std_val_acc", "completed", "diverged"});
    for (std::size_t i = 0; i < all_runs.size();) {
      const double eta = all_runs[i].eta;
      double sum = 0.0, sum2 = 0.0;
      int n = 0, div = 0;
      std::size_t j = i;
      for (; j < all_runs.size() && all_runs[j].eta == eta; ++j) {
        if (all_runs[j].status == "completed") {
          sum += all_runs[j].val_acc;
          sum2 += all_runs[j].val_acc * all_runs[j].val_acc;
          ++n;
        } else if (all_runs[j].status == "diverged") {
          ++div;
        }
      }
      std::vector<std::optional<double>> row{eta};
      if (n > 0) {
        const double mean = sum / n;
        row.push_back(mean);
        row.push_back(n > 1 ? std::sqrt(std::max(0.0, sum2 / n - mean * mean))
                            : 0.0);
      } else {
        row.push_back(std::nullopt);
        row.push_back(std::nullopt);
      }
      row.push_back(static_cast<double>(n));
      row.push_back(static_cast<double>(div));
      w.row(row);
      i = j;
    }
  }

  // Validation accuracy vs eta with the measured stability limit marked.
  {
    const CsvTable t = read_csv(joined(out, "sweep_summary.csv"));
    PlotSeries mean_s;
    mean_s.label = "mean val acc";
    for (std::size_t r = 0; r < t.cells.size(); ++r) {
      if (t.empty_cell(r, 1)) continue;
      mean_s.x.push_back(t.num(r, 0));
      mean_s.y.push_back(t.num(r, 1));
    }
    PlotOptions opt;
    opt.title = "validation accuracy vs learning rate";
    opt.x_label = "eta (log)";
    opt.y_label = "val acc";
    opt.log_x = true;
    opt.vlines = {limit.eta_limit};
    opt.vline_labels = {"measured stability limit"};
    write_svg_plot(joined(out, "sweep.svg"), {mean_s}, opt);
  }

  for (const auto& r : all_runs) {
    RunManifest::Run run;
    run.id = "sweep eta=" + fmt_g17(r.eta) + " seed=" + std::to_string(r.seed);
    run.status = r.status;
    run.detail = r.detail;
    if (!r.csv.empty()) run.artifacts = {r.csv};
    manifest.runs.push_back(run);
  }
  RunManifest::Run summary;
  summary.id = "lr_sweep";
  summary.status = "completed";
  summary.artifacts = {joined(out, "sweep_runs.csv"),
                       joined(out, "sweep_summary.csv"),
                       joined(out, "stability.csv"), joined(out, "sweep.svg")};
  manifest.runs.push_back(summary);
}

// ---------------------------------------------------------------------------
// driver_interventions
// ---------------------------------------------------------------------------

void recipe_driver_interventions(const ExperimentConfig& cfg, RunManifest& manifest) {
  const fs::path out(cfg.output_dir);
  fs::create_directories(out);

  PreparedData data = prepare_data(cfg.dataset);
  MlpSpec spec = cfg.model;
  spec.seed = cfg.seeds.front();
  const MlpObjective obj(spec, data.train_batch);
  const InterventionConfig& ic = cfg.interventions;
  const double eta = cfg.schedule.eta0;

  // Warm phase: advance until past the first EoS crossing (S >= 2/eta).
  Eigen::VectorXd params = init_params(spec);
  int warm_epochs = ic.warm_epochs;
  if (warm_epochs <= 0) {
    int epoch = 0;
    bool crossed = false;
    while (epoch < cfg.max_epochs) {
      TrainOptions w;
      w.schedule = Schedule::constant(eta);
      w.max_epochs = 10;
      w.start_epoch = epoch;
      w.probes = cfg.probes;
      w.probes.top_k = 0;
      w.probes.cadence = 1;
      TrainResult res = train(obj, params, w);
      params = res.final_params;
      epoch += 10;
      if (res.log.diverged)
        throw Error("driver_interventions: warm phase diverged");
      for (const auto& r : res.log.records)
        if (r.sharpness && *r.sharpness >= 2.0 / eta) crossed = true;
      if (crossed) break;
    }
    if (!crossed)
      throw Error("driver_interventions: no EoS crossing within max_epochs");
    warm_epochs = epoch + 4;  // a few epochs inside the oscillation
    TrainOptions extra;
    extra.schedule = Schedule::constant(eta);
    extra.max_epochs = 4;
    extra.start_epoch = epoch;
    extra.probes.with_sharpness = false;
    extra.probes.cadence = 1 << 30;
    params = train(obj, params, extra).final_params;
  } else {
    TrainOptions w;
    w.schedule = Schedule::constant(eta);
    w.max_epochs = warm_epochs;
    w.probes.with_sharpness = false;
    w.probes.cadence = 1 << 30;
    params = train(obj, params, w).final_params;
  }
  save_param_checkpoint(joined(out, "common_checkpoint.eosp"), params);

  struct Variant {
    std::string name;
    std::optional<DirectionalEta> intervention;
    double eta_override = 0.0;  // 0: use eta
  };
  std::vector<Variant> variants;
  variants.push_back({"baseline", std::nullopt, 0.0});
  {
    DirectionalEta d;
    d.k = ic.k;
    d.eta_unstable = 0.0;
    d.mode = DirectionalEta::Mode::kSuppress;
    variants.push_back({"suppress", d, 0.0});
  }
  {
    DirectionalEta d;
    d.k = ic.k;
    d.mode = DirectionalEta::Mode::kSuppress;
    d.track_stability_fraction = ic.effective_stability_fraction;
    variants.push_back({"effective_stability", d, 0.0});
  }
  {
    DirectionalEta d;
    d.k = ic.k;
    d.eta_unstable = eta;
    d.mode = DirectionalEta::Mode::kRestrictTo;
    variants.push_back({"restrict_to", d, 0.0});
  }
  {
    DirectionalEta d;
    d.k = ic.k;
    d.eta_unstable = eta;
    d.mode = DirectionalEta::Mode::kSuppress;
    variants.push_back({"identity_check", d, 0.0});
  }
  variants.push_back({"gradient_flow_reference", std::nullopt,
                      ic.flow_eta_factor * eta});

  for (const auto& variant : variants) {
    TrainOptions opt;
    opt.schedule = Schedule::constant(
        variant.eta_override > 0.0 ? variant.eta_override : eta);
    opt.max_epochs = ic.window_epochs;
    opt.start_epoch = warm_epochs;
    opt.probes = cfg.probes;
    opt.probes.cadence = 1;
    opt.probes.top_k = ic.k;
    opt.probes.baseline_epochs = {warm_epochs};
    opt.probes.with_alpha = true;
    opt.intervention = variant.intervention;

    std::vector<std::vector<std::optional<double>>> eig_rows;
    opt.spectrum_callback = [&](int epoch, const Spectrum& s) {
      std::vector<std::optional<double>> row{static_cast<double>(epoch)};
      for (int i = 0; i < s.size(); ++i)
        row.push_back(s.lambdas[static_cast<std::size_t>(i)]);
      eig_rows.push_back(std::move(row));
    };

    TrainResult res = train(obj, params, opt);
    const std::string vcsv = joined(out, variant.name + ".csv");
    res.log.write_csv(vcsv);
    {
      std::vector<std::string> header{"epoch"};
      for (int i = 1; i <= ic.k; ++i) header.push_back("lambda_" + std::to_string(i));
      CsvWriter ew(joined(out, variant.name + "_eigs.csv"), header);
      for (const auto& row : eig_rows) ew.row(row);
    }
    write_segments_csv(joined(out, variant.name + "_segments.csv"),
                       segment_phases(res.log, ic.smoothing));
    save_param_checkpoint(joined(out, variant.name + "_final.eosp"),
                          res.final_params);

    RunManifest::Run run;
    run.id = "intervention " + variant.name;
    run.status = res.log.diverged ? "diverged" : "completed";
    run.artifacts = {vcsv, joined(out, variant.name + "_eigs.csv"),
                     joined(out, variant.name + "_segments.csv"),
                     joined(out, variant.name + "_final.eosp")};
    manifest.runs.push_back(run);
  }

  std::vector<PlotSeries> series;
  int ci = 0;
  for (const auto& variant : variants) {
    PlotSeries s = series_from_csv(joined(out, variant.name + ".csv"), "sharpness",
                                   kSeriesColors[ci % 8], variant.name);
    if (variant.name == "gradient_flow_reference") s.dashed = true;
    series.push_back(s);
    ++ci;
  }
  PlotOptions opt;
  opt.title = "sharpness under directional interventions";
  opt.x_label = "epoch";
  opt.y_label = "S(theta)";
  write_svg_plot(joined(out, "interventions.svg"), series, opt);
}

RunManifest run_experiment(const ExperimentConfig& cfg, int workers) {
  RunManifest manifest;
  manifest.config_hash = cfg.config_hash;
  manifest.started = now_iso();
  fs::create_directories(cfg.output_dir);

  try {
    if (cfg.recipe == "dln_phase_map")
      recipe_dln_phase_map(cfg, manifest);
    else if (cfg.recipe == "rotation_tracking")
      recipe_rotation_tracking(cfg, manifest);
    else if (cfg.recipe == "landscape_movie")
      recipe_landscape_movie(cfg, manifest);
    else if (cfg.recipe == "progressive_flattening")
      recipe_progressive_flattening(cfg, manifest, workers);
    else if (cfg.recipe == "lr_sweep")
      recipe_lr_sweep(cfg, manifest, workers);
    else if (cfg.recipe == "driver_interventions")
      recipe_driver_interventions(cfg, manifest);
    else
      throw ConfigInvalid("unknown recipe: " + cfg.recipe);
  } catch (const ConfigInvalid&) {
    throw;
  } catch (const std::exception& e) {
    RunManifest::Run run;
    run.id = cfg.recipe;
    run.status = "error";
    run.detail = e.what();
    manifest.runs.push_back(run);
  }

  manifest.finished = now_iso();
  manifest.write((fs::path(cfg.output_dir) / "manifest.txt").string());
  return manifest;
}

}  // namespace eos
