// eos-lab: experiment front end.
//
//   eos-lab run             --config cfg.json [--workers N] [--out DIR]
//   eos-lab <recipe-name>   --config cfg.json [--workers N] [--out DIR]
//   eos-lab validate-config --config cfg.json
//   eos-lab fetch-data      --url U [--sha256 H] --out DIR
//
// Exit codes: 0 success, 1 run error, 2 config error.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "eos/config.hpp"
#include "eos/data_io.hpp"
#include "eos/errors.hpp"
#include "eos/recipes.hpp"

// httplib must come after Eigen (pulled in by the eos headers); it leaks
// macros that corrupt Eigen's product kernels otherwise.
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <CLI11.hpp>
#include <httplib.h>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRunError = 1;
constexpr int kExitConfigError = 2;

int run_recipe(const std::string& config_path, const std::string& forced_recipe,
               const std::string& out_override, int workers) {
  eos::ExperimentConfig cfg;
  try {
    cfg = eos::load_config(config_path);
    if (!forced_recipe.empty()) cfg.recipe = forced_recipe;
    if (!out_override.empty()) cfg.output_dir = out_override;
    eos::validate_config(cfg);
  } catch (const eos::ConfigInvalid& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  }

  const eos::RunManifest manifest = eos::run_experiment(cfg, workers);
  int completed = 0, diverged = 0, errored = 0;
  for (const auto& r : manifest.runs) {
    if (r.status == "completed") ++completed;
    else if (r.status == "diverged") ++diverged;
    else ++errored;
  }
  std::cout << "recipe " << cfg.recipe << ": " << completed << " completed, "
            << diverged << " diverged, " << errored << " errored\n"
            << "manifest: " << cfg.output_dir << "/manifest.txt\n";
  return manifest.any_error() ? kExitRunError : kExitOk;
}

int fetch_data(const std::vector<std::string>& urls,
               const std::vector<std::string>& hashes, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<eos::ManifestEntry> entries;
  for (std::size_t i = 0; i < urls.size(); ++i) {
    const std::string& url = urls[i];
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
      std::cerr << "bad url: " << url << "\n";
      return kExitConfigError;
    }
    const auto host_start = scheme_end + 3;
    const auto path_start = url.find('/', host_start);
    const std::string origin = url.substr(0, path_start);
    const std::string path =
        path_start == std::string::npos ? "/" : url.substr(path_start);

    httplib::Client client(origin);
    client.set_follow_location(true);
    auto res = client.Get(path);
    if (!res || res->status != 200) {
      std::cerr << "fetch failed for " << url
                << (res ? " (status " + std::to_string(res->status) + ")" : "")
                << "\n";
      return kExitRunError;
    }
    const std::string name = path.substr(path.find_last_of('/') + 1);
    const std::string dest = (std::filesystem::path(out_dir) / name).string();
    std::ofstream f(dest, std::ios::binary);
    f.write(res->body.data(), static_cast<std::streamsize>(res->body.size()));
    f.close();

    eos::ManifestEntry entry;
    entry.file = name;
    entry.sha256 = eos::sha256_file(dest);
    entry.bytes = res->body.size();
    entries.push_back(entry);
    if (i < hashes.size() && !hashes[i].empty() && hashes[i] != entry.sha256)
      std::cerr << "warning: checksum mismatch for " << name << " (expected "
                << hashes[i] << ", got " << entry.sha256 << ")\n";
    std::cout << "fetched " << name << " (" << entry.bytes << " bytes)\n";
  }
  eos::write_data_manifest(
      (std::filesystem::path(out_dir) / "manifest.txt").string(), entries);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"edge-of-stability optimization laboratory"};
  app.require_subcommand(1);

  std::string config_path, out_override;
  int workers = 1;

  auto add_common = [&](CLI::App* sub, bool need_config) {
    auto* opt = sub->add_option("--config", config_path, "experiment config (JSON)");
    if (need_config) opt->required();
    sub->add_option("--workers", workers, "concurrent run limit");
    sub->add_option("--out", out_override, "override output_dir");
  };

  auto* run_cmd = app.add_subcommand("run", "run the recipe named in the config");
  add_common(run_cmd, true);

  std::vector<CLI::App*> recipe_cmds;
  for (const char* name : eos::kKnownRecipes) {
    auto* sub = app.add_subcommand(name, std::string("run the ") + name + " recipe");
    add_common(sub, true);
    recipe_cmds.push_back(sub);
  }

  auto* validate_cmd =
      app.add_subcommand("validate-config", "parse and validate a config");
  add_common(validate_cmd, true);

  std::vector<std::string> urls, hashes;
  std::string fetch_out = "data/fmnist";
  auto* fetch_cmd = app.add_subcommand("fetch-data", "download dataset files");
  fetch_cmd->add_option("--url", urls, "file URL (repeatable)")->required();
  fetch_cmd->add_option("--sha256", hashes, "expected checksum per url");
  fetch_cmd->add_option("--out", fetch_out, "destination directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) return run_recipe(config_path, "", out_override, workers);
    for (std::size_t i = 0; i < recipe_cmds.size(); ++i)
      if (recipe_cmds[i]->parsed())
        return run_recipe(config_path, eos::kKnownRecipes[i], out_override, workers);
    if (validate_cmd->parsed()) {
      try {
        eos::load_config(config_path);
        std::cout << "config ok\n";
        return kExitOk;
      } catch (const eos::ConfigInvalid& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
      }
    }
    if (fetch_cmd->parsed()) return fetch_data(urls, hashes, fetch_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRunError;
  }
  return kExitOk;
}
