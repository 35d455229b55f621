#include "eos/config.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "eos/data_io.hpp"
#include "eos/errors.hpp"

namespace eos {

using nlohmann::json;

const char* const kKnownRecipes[6] = {
    "dln_phase_map",      "rotation_tracking",   "landscape_movie",
    "progressive_flattening", "lr_sweep",        "driver_interventions",
};

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& why) {
  throw ConfigInvalid("config field '" + field + "': " + why);
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(key, e.what());
  }
}

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "identity") return Activation::kIdentity;
  fail("model.activation", "expected 'relu' or 'identity', got '" + s + "'");
}

ScheduleKind parse_schedule_kind(const std::string& s) {
  if (s == "constant") return ScheduleKind::kConstant;
  if (s == "warmup_then_constant") return ScheduleKind::kWarmupThenConstant;
  if (s == "reduce_at_epoch") return ScheduleKind::kReduceAtEpoch;
  if (s == "reduce_at_train_acc") return ScheduleKind::kReduceAtTrainAcc;
  fail("schedule.kind", "unknown kind '" + s + "'");
}

void parse_model(const json& j, MlpSpec& spec) {
  spec.layer_widths = get_or<std::vector<int>>(j, "layer_widths",
                                               {784, 32, 32, 32, 32, 10});
  const std::string act = get_or<std::string>(j, "activation", "relu");
  spec.activations.assign(static_cast<std::size_t>(
                              std::max<int>(0, spec.depth() - 1)),
                          parse_activation(act));
  const std::string loss = get_or<std::string>(j, "loss", "cross_entropy");
  if (loss == "cross_entropy")
    spec.loss_kind = LossKind::kCrossEntropy;
  else if (loss == "mse")
    spec.loss_kind = LossKind::kMse;
  else
    fail("model.loss", "expected 'cross_entropy' or 'mse'");
  spec.seed = get_or<std::uint64_t>(j, "seed", 0);
}

void parse_dataset(const json& j, DatasetConfig& d) {
  d.dir = get_or<std::string>(j, "dir", d.dir);
  d.train_count = get_or<int>(j, "train_count", d.train_count);
  d.eval_count = get_or<int>(j, "eval_count", d.eval_count);
  const std::string sel = get_or<std::string>(j, "selection", "first_n");
  if (sel == "first_n")
    d.selection = SubsetSelection::kFirstN;
  else if (sel == "seeded_shuffle")
    d.selection = SubsetSelection::kSeededShuffle;
  else
    fail("dataset.selection", "expected 'first_n' or 'seeded_shuffle'");
  d.seed = get_or<std::uint64_t>(j, "seed", d.seed);
  const std::string ev = get_or<std::string>(j, "eval_from", "test");
  if (ev == "test")
    d.eval_from_test = true;
  else if (ev == "train_split")
    d.eval_from_test = false;
  else
    fail("dataset.eval_from", "expected 'test' or 'train_split'");
  d.synthetic_fallback = get_or<bool>(j, "synthetic_fallback", d.synthetic_fallback);
  d.synthetic_train_pool = get_or<int>(j, "synthetic_train_pool", d.synthetic_train_pool);
  d.synthetic_test_pool = get_or<int>(j, "synthetic_test_pool", d.synthetic_test_pool);
}

void parse_schedule(const json& j, Schedule& s) {
  s.kind = parse_schedule_kind(get_or<std::string>(j, "kind", "constant"));
  s.eta0 = get_or<double>(j, "eta0", s.eta0);
  s.eta_small = get_or<double>(j, "eta_small", s.eta_small);
  s.trigger_epoch = get_or<int>(j, "trigger_epoch", s.trigger_epoch);
  s.trigger_acc = get_or<double>(j, "trigger_acc", s.trigger_acc);
  s.warmup_epochs = get_or<int>(j, "warmup_epochs", s.warmup_epochs);
}

void parse_probes(const json& j, ProbeConfig& p) {
  p.cadence = get_or<int>(j, "cadence", p.cadence);
  p.with_sharpness = get_or<bool>(j, "with_sharpness", p.with_sharpness);
  p.top_k = get_or<int>(j, "top_k", p.top_k);
  p.subspace_k = get_or<int>(j, "subspace_k", p.subspace_k);
  p.with_alpha = get_or<bool>(j, "with_alpha", p.with_alpha);
  const std::string m = get_or<std::string>(j, "alpha_method", "nested_hvp");
  if (m == "nested_hvp")
    p.alpha_method = AlphaMethod::kNestedHvp;
  else if (m == "finite_difference")
    p.alpha_method = AlphaMethod::kFiniteDifference;
  else
    fail("probes.alpha_method", "expected 'nested_hvp' or 'finite_difference'");
  p.alpha_step = get_or<double>(j, "alpha_step", p.alpha_step);
  p.lanczos_tol = get_or<double>(j, "lanczos_tol", p.lanczos_tol);
  p.lanczos_max_iter = get_or<int>(j, "lanczos_max_iter", p.lanczos_max_iter);
  p.seed = get_or<std::uint64_t>(j, "seed", p.seed);
  p.warm_start = get_or<bool>(j, "warm_start", p.warm_start);
}

}  // namespace

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigInvalid("cannot open config file: " + path);

  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigInvalid("config parse error in " + path + ": " + e.what());
  }

  ExperimentConfig cfg;
  cfg.source_path = path;
  cfg.config_hash = sha256_file(path);

  cfg.recipe = get_or<std::string>(j, "recipe", "");
  cfg.output_dir = get_or<std::string>(j, "output_dir", cfg.output_dir);
  cfg.seeds = get_or<std::vector<std::uint64_t>>(j, "seeds", cfg.seeds);

  if (j.contains("model")) parse_model(j.at("model"), cfg.model);
  else parse_model(json::object(), cfg.model);
  if (j.contains("dataset")) parse_dataset(j.at("dataset"), cfg.dataset);
  if (j.contains("schedule")) parse_schedule(j.at("schedule"), cfg.schedule);
  if (j.contains("probes")) parse_probes(j.at("probes"), cfg.probes);

  if (j.contains("train")) {
    const json& t = j.at("train");
    cfg.max_epochs = get_or<int>(t, "max_epochs", cfg.max_epochs);
    cfg.run_to_completion = get_or<bool>(t, "run_to_completion", cfg.run_to_completion);
  }

  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    cfg.sweep.etas = get_or<std::vector<double>>(s, "etas", {});
    cfg.sweep.start = get_or<double>(s, "start", cfg.sweep.start);
    cfg.sweep.factor = get_or<double>(s, "factor", cfg.sweep.factor);
    cfg.sweep.max_steps = get_or<int>(s, "max_steps", cfg.sweep.max_steps);
    cfg.sweep.center_on_measured_limit =
        get_or<bool>(s, "center_on_measured_limit", false);
    cfg.sweep.count = get_or<int>(s, "count", cfg.sweep.count);
  }

  if (j.contains("dln")) {
    const json& d = j.at("dln");
    cfg.dln.theta1 = get_or<double>(d, "theta1", cfg.dln.theta1);
    cfg.dln.theta2 = get_or<double>(d, "theta2", cfg.dln.theta2);
    cfg.dln.coeffs = get_or<std::vector<double>>(d, "coeffs", cfg.dln.coeffs);
    cfg.dln.etas = get_or<std::vector<double>>(d, "etas", cfg.dln.etas);
    cfg.dln.steps = get_or<int>(d, "steps", cfg.dln.steps);
    cfg.dln.curve_points = get_or<int>(d, "curve_points", cfg.dln.curve_points);
  }

  if (j.contains("rotation")) {
    const json& r = j.at("rotation");
    cfg.rotation.max_windows = get_or<int>(r, "max_windows", cfg.rotation.max_windows);
    cfg.rotation.min_window_epochs =
        get_or<int>(r, "min_window_epochs", cfg.rotation.min_window_epochs);
    cfg.rotation.reduction_offsets =
        get_or<std::vector<int>>(r, "reduction_offsets", cfg.rotation.reduction_offsets);
    cfg.rotation.reduction_factor =
        get_or<double>(r, "reduction_factor", cfg.rotation.reduction_factor);
    cfg.rotation.periods = get_or<std::vector<int>>(r, "periods", cfg.rotation.periods);
    cfg.rotation.smoothing = get_or<int>(r, "smoothing", cfg.rotation.smoothing);
    cfg.rotation.margin_epochs =
        get_or<int>(r, "margin_epochs", cfg.rotation.margin_epochs);
  }

  if (j.contains("flattening")) {
    const json& f = j.at("flattening");
    cfg.flattening.eta0_grid =
        get_or<std::vector<double>>(f, "eta0_grid", cfg.flattening.eta0_grid);
    cfg.flattening.reduction_epochs =
        get_or<std::vector<int>>(f, "reduction_epochs", cfg.flattening.reduction_epochs);
    cfg.flattening.eta_small = get_or<double>(f, "eta_small", cfg.flattening.eta_small);
    cfg.flattening.plateau_rel_change =
        get_or<double>(f, "plateau_rel_change", cfg.flattening.plateau_rel_change);
    cfg.flattening.plateau_window =
        get_or<int>(f, "plateau_window", cfg.flattening.plateau_window);
    cfg.flattening.max_epochs_after =
        get_or<int>(f, "max_epochs_after", cfg.flattening.max_epochs_after);
    cfg.flattening.include_control_row =
        get_or<bool>(f, "include_control_row", cfg.flattening.include_control_row);
    cfg.flattening.control_eta0 =
        get_or<double>(f, "control_eta0", cfg.flattening.control_eta0);
  }

  if (j.contains("interventions")) {
    const json& iv = j.at("interventions");
    cfg.interventions.k = get_or<int>(iv, "k", cfg.interventions.k);
    cfg.interventions.window_epochs =
        get_or<int>(iv, "window_epochs", cfg.interventions.window_epochs);
    cfg.interventions.warm_epochs =
        get_or<int>(iv, "warm_epochs", cfg.interventions.warm_epochs);
    cfg.interventions.effective_stability_fraction = get_or<double>(
        iv, "effective_stability_fraction",
        cfg.interventions.effective_stability_fraction);
    cfg.interventions.flow_eta_factor =
        get_or<double>(iv, "flow_eta_factor", cfg.interventions.flow_eta_factor);
    cfg.interventions.smoothing =
        get_or<int>(iv, "smoothing", cfg.interventions.smoothing);
  }

  if (j.contains("landscape")) {
    const json& l = j.at("landscape");
    cfg.landscape.max_offset = get_or<double>(l, "max_offset", cfg.landscape.max_offset);
    cfg.landscape.offsets_per_side =
        get_or<int>(l, "offsets_per_side", cfg.landscape.offsets_per_side);
    cfg.landscape.stride_epochs =
        get_or<int>(l, "stride_epochs", cfg.landscape.stride_epochs);
    cfg.landscape.with_sharpness =
        get_or<bool>(l, "with_sharpness", cfg.landscape.with_sharpness);
  }

  validate_config(cfg);
  return cfg;
}

void validate_config(const ExperimentConfig& cfg) {
  const bool known =
      std::any_of(std::begin(kKnownRecipes), std::end(kKnownRecipes),
                  [&](const char* r) { return cfg.recipe == r; });
  if (!known) fail("recipe", "unknown recipe '" + cfg.recipe + "'");
  if (cfg.output_dir.empty()) fail("output_dir", "must not be empty");
  if (cfg.seeds.empty()) fail("seeds", "need at least one seed");
  if (cfg.max_epochs <= 0) fail("train.max_epochs", "must be > 0");
  if (cfg.probes.cadence < 1) fail("probes.cadence", "must be >= 1");

  try {
    cfg.model.validate();
    cfg.schedule.validate();
  } catch (const std::exception& e) {
    throw ConfigInvalid(std::string("config: ") + e.what());
  }

  if (cfg.recipe == "dln_phase_map") {
    if (cfg.dln.etas.empty()) fail("dln.etas", "eta list must not be empty");
    for (double e : cfg.dln.etas)
      if (!(e >= 0.0)) fail("dln.etas", "etas must be >= 0");
    if (cfg.dln.steps < 1) fail("dln.steps", "must be >= 1");
  }
  if (cfg.recipe == "lr_sweep") {
    for (double e : cfg.sweep.etas)
      if (!(e > 0.0)) fail("sweep.etas", "etas must be > 0");
    if (cfg.sweep.etas.empty()) {
      if (!(cfg.sweep.start > 0.0)) fail("sweep.start", "must be > 0");
      if (!(cfg.sweep.factor > 1.0)) fail("sweep.factor", "must be > 1");
      if (cfg.sweep.max_steps < 1) fail("sweep.max_steps", "must be >= 1");
    }
  }
  if (cfg.recipe == "progressive_flattening") {
    if (cfg.flattening.eta0_grid.empty())
      fail("flattening.eta0_grid", "must not be empty");
    if (cfg.flattening.reduction_epochs.empty())
      fail("flattening.reduction_epochs", "must not be empty");
    if (!(cfg.flattening.eta_small > 0.0))
      fail("flattening.eta_small", "must be > 0");
  }
}

}  // namespace eos
