#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "asc/eval.h"
#include "asc/features.h"
#include "asc/fusion.h"
#include "asc/lte.h"
#include "asc/models.h"

namespace asc {

/// Everything a run needs. Loaded from an INI-style file; every key is
/// optional and unknown keys are rejected.
///
///   [paths]    manifest, cache_dir, out_dir, split_dir
///   [features] gammatone_bands, gammatone_fmin, gammatone_fmax, mel_filters,
///              mfcc_coeffs, mfcc_log_floor, logfb_bands, logfb_fmin,
///              logfb_fmax, background_percentile
///   [lte]      iterations, step, reg
///   [model]    widths, filters_per_width, hidden, gru_layers, fusion_size,
///              cnn_dropout, rnn_dropout, fusion_dropout
///   [train]    lambda, learning_rate, batch_size, epochs
///   [svm]      c, epochs
///   [eval]     n_splits, train_ratio, systems
///   [synth]    categories, per_category, duration_s
///   [run]      seed, jobs, allow_any_rate
struct RunConfig {
  std::filesystem::path manifest;
  std::filesystem::path cache_dir = "cache";
  std::filesystem::path out_dir = "out";
  std::optional<std::filesystem::path> split_dir;

  FeatureParams features;
  LogisticConfig lte;
  Architecture arch;  // kind and fusion are set per system
  TrainConfig train;
  SvmConfig svm;

  int n_splits = 20;
  double train_ratio = 0.8;
  std::vector<System> systems{std::begin(kAllSystems), std::end(kAllSystems)};

  int synth_categories = 8;
  int synth_per_category = 25;
  double synth_duration_s = 30.0;

  std::uint64_t seed = 0;
  int jobs = 1;
  bool allow_any_rate = false;

  /// Checks ranges; throws ConfigError.
  void validate() const;
  nlohmann::json to_json() const;
};

/// Relative paths in the file are resolved against the file's directory.
RunConfig load_config(const std::filesystem::path& path);

}  // namespace asc
