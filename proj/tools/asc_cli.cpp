// Command-line front end: synth | features | tree | train | sweep | gradcheck | report.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "asc/config.h"
#include "asc/error.h"
#include "asc/eval.h"
#include "asc/experiment.h"
#include "asc/gradcheck_suite.h"

namespace fs = std::filesystem;
using namespace asc;

namespace {

enum Exit { kOk = 0, kDataError = 1, kConfigError = 2, kNumericalError = 3 };

struct GlobalOptions {
  std::optional<fs::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  bool allow_any_rate = false;
  std::optional<fs::path> out;
  std::optional<fs::path> manifest;
};

RunConfig resolve_config(const GlobalOptions& g) {
  RunConfig cfg = g.config ? load_config(*g.config) : RunConfig{};
  if (g.seed) cfg.seed = *g.seed;
  if (g.jobs) cfg.jobs = *g.jobs;
  if (g.allow_any_rate) cfg.allow_any_rate = true;
  if (g.out) cfg.out_dir = *g.out;
  if (g.manifest) cfg.manifest = *g.manifest;
  cfg.validate();
  return cfg;
}

void log_line(const std::string& msg) {
  static std::mutex mutex;
  std::lock_guard lock(mutex);
  std::cerr << msg << '\n';
}

Manifest require_manifest(const RunConfig& cfg) {
  if (cfg.manifest.empty()) throw ConfigError("no dataset manifest (set paths.manifest or --manifest)");
  return load_manifest(cfg.manifest);
}

SplitPlan plan_for(const RunConfig& cfg, const Manifest& manifest) {
  return make_splits(manifest, cfg.n_splits, cfg.train_ratio, derive_seed(cfg.seed, "splits"), cfg.split_dir);
}

std::vector<System> parse_systems(const std::vector<std::string>& names) {
  std::vector<System> out;
  for (const auto& n : names) {
    std::stringstream ss(n);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) out.push_back(parse_system(item));
    }
  }
  return out;
}

void print_report(const SweepReport& report) {
  std::printf("%-10s %9s %9s %9s %7s %8s\n", "system", "duration", "accuracy", "f1", "splits", "stddev");
  for (const auto& r : report.rows) {
    std::printf("%-10s %9g %9.2f %9.2f %7d %8.2f\n", r.system.c_str(), r.duration_s, r.accuracy, r.f1,
                r.n_splits, r.stddev);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acoustic scene classification toolkit"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--config", g.config, "INI configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Master seed");
  app.add_option("--jobs", g.jobs, "Parallel jobs across independent units")->check(CLI::PositiveNumber);
  app.add_flag("--allow-any-rate", g.allow_any_rate, "Accept WAV files not sampled at 22050 Hz");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--manifest", g.manifest, "Dataset manifest (JSON lines)");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic scene corpus");
  std::optional<int> n_cat, per_cat;
  std::optional<double> duration;
  synth->add_option("--categories", n_cat, "Number of categories");
  synth->add_option("--per-category", per_cat, "Clips per category");
  synth->add_option("--duration", duration, "Clip duration in seconds (>= 4)");

  auto* features = app.add_subcommand("features", "Extract and cache low-level features");

  auto* tree = app.add_subcommand("tree", "Fit label trees and embedding models per split");

  auto* train = app.add_subcommand("train", "Train networks and SVMs per split");
  std::vector<std::string> train_systems;
  std::optional<int> epochs;
  train->add_option("--system", train_systems, "Systems (cnn, rnn, ef-sum, ef-max, ef-concat, lf-max, lf-mean, lf-mult)");
  train->add_option("--epochs", epochs, "Override the epoch budget");

  auto* sweep = app.add_subcommand("sweep", "Evaluate trained systems over test durations");
  std::vector<std::string> sweep_systems;
  sweep->add_option("--system", sweep_systems, "Systems to evaluate");

  auto* gradcheck = app.add_subcommand("gradcheck", "Verify analytic gradients against finite differences");
  std::string profile = "tiny";
  gradcheck->add_option("--profile", profile, "Dimension profile")->check(CLI::IsMember({"tiny"}));

  auto* report = app.add_subcommand("report", "Render plots from report CSVs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    RunConfig cfg = resolve_config(g);

    if (synth->parsed()) {
      const int c = n_cat.value_or(cfg.synth_categories);
      const int n = per_cat.value_or(cfg.synth_per_category);
      const double d = duration.value_or(cfg.synth_duration_s);
      const auto clips = synthesize_corpus(cfg.out_dir, c, n, d, cfg.seed, cfg.jobs);
      std::printf("wrote %zu clips and %s\n", clips.size(), (cfg.out_dir / "manifest.jsonl").string().c_str());
      return kOk;
    }
    if (features->parsed()) {
      const Manifest manifest = require_manifest(cfg);
      const auto summary = build_feature_cache(manifest, cfg.cache_dir, cfg.features,
                                               WavOptions{cfg.allow_any_rate}, cfg.jobs);
      std::printf("features: %d computed, %d up to date, %zu failed\n", summary.computed, summary.reused,
                  summary.errors.size());
      for (const auto& e : summary.errors) std::fprintf(stderr, "error: %s\n", e.c_str());
      return summary.errors.empty() ? kOk : kDataError;
    }
    if (tree->parsed()) {
      const Manifest manifest = require_manifest(cfg);
      run_tree(cfg, manifest, plan_for(cfg, manifest), log_line);
      return kOk;
    }
    if (train->parsed()) {
      if (!train_systems.empty()) cfg.systems = parse_systems(train_systems);
      if (epochs) cfg.train.epochs = *epochs;
      cfg.validate();
      const Manifest manifest = require_manifest(cfg);
      run_train(cfg, manifest, plan_for(cfg, manifest), log_line);
      return kOk;
    }
    if (sweep->parsed()) {
      if (!sweep_systems.empty()) cfg.systems = parse_systems(sweep_systems);
      const Manifest manifest = require_manifest(cfg);
      print_report(run_sweep(cfg, manifest, plan_for(cfg, manifest), log_line));
      return kOk;
    }
    if (gradcheck->parsed()) {
      GradCheckSuiteOptions opts;
      opts.seed = cfg.seed;
      const auto rows = run_gradcheck_suite(opts);
      bool ok = true;
      std::printf("%-22s %-18s %8s %12s  %s\n", "target", "block", "coords", "max_rel_err", "result");
      for (const auto& r : rows) {
        std::printf("%-22s %-18s %8zu %12.3e  %s\n", r.target.c_str(), r.block.c_str(), r.checked, r.max_rel_error,
                    r.pass ? "pass" : "FAIL");
        ok = ok && r.pass;
      }
      return ok ? kOk : kNumericalError;
    }
    if (report->parsed()) {
      for (const auto& p : render_plots(cfg.out_dir / "report")) std::printf("%s\n", p.string().c_str());
      return kOk;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return kConfigError;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return kNumericalError;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kDataError;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kDataError;
  }
  return kOk;
}
