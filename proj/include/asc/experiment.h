#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "asc/audio.h"
#include "asc/config.h"
#include "asc/eval.h"
#include "asc/features.h"
#include "asc/fusion.h"
#include "asc/lte.h"
#include "asc/models.h"

namespace asc {

using LogFn = std::function<void(const std::string&)>;

/// Networks behind the evaluated systems. Late-fusion systems reuse the
/// standalone CNN and RNN.
enum class BaseModel { cnn, rnn, crnn_sum, crnn_max, crnn_concat };

const char* to_string(BaseModel m);
std::vector<BaseModel> base_models_for(std::span<const System> systems);
Architecture architecture_for(BaseModel m, const Architecture& base, int n_classes, int features);

// ---------------------------------------------------------------------------
// Synthetic corpus

struct SynthClip {
  std::string source_id;
  std::string category;
  int label = 0;
  std::uint64_t seed = 0;
  double duration_s = 0.0;
};

std::string synth_category_name(int c);

/// Writes <dir>/<id>.wav for n_categories x per_category clips, plus
/// manifest.jsonl (dataset manifest) and synth_manifest.json.
std::vector<SynthClip> synthesize_corpus(const std::filesystem::path& dir, int n_categories, int per_category,
                                         double duration_s, std::uint64_t seed, int jobs = 1);

// ---------------------------------------------------------------------------
// Feature cache

struct FeatureCacheSummary {
  int computed = 0;
  int reused = 0;
  std::vector<std::string> errors;  // "<snippet_id>: <message>"
};

/// Extracts features for every manifest entry whose cache entry is missing
/// or stale. Per-file failures are collected, not thrown.
FeatureCacheSummary build_feature_cache(const Manifest& manifest, const std::filesystem::path& cache_dir,
                                        const FeatureParams& params, const WavOptions& wav, int jobs,
                                        const LogFn& log = {});

/// Cached features for every manifest entry, labels taken from the
/// manifest. Throws DataError listing the missing entries.
std::vector<SnippetFeatures> load_cached_features(const Manifest& manifest, const std::filesystem::path& cache_dir,
                                                  const FeatureParams& params);

// ---------------------------------------------------------------------------
// Per-split building blocks

/// LTE tensors of every segment of the given snippets, in snippet order.
struct SegmentSet {
  std::vector<LteTensor> tensors;
  std::vector<int> labels;
  std::vector<int> snippet;  // index into the snippet list passed in
};

SegmentSet embed_snippets(const ChannelModels& models, std::span<const SnippetFeatures* const> snippets);

struct TrainedBase {
  SceneNet<float> net;
  LinearSvm svm;
  TrainResult trace;
};

struct BaseSeeds {
  std::uint64_t init = 0;
  std::uint64_t train = 0;
  std::uint64_t svm = 0;
};

BaseSeeds base_seeds(std::uint64_t seed, BaseModel m, int split);

/// Trains the network, then a linear SVM on its eval-mode features.
TrainedBase train_base(BaseModel m, const RunConfig& cfg, const SegmentSet& train, int n_classes,
                       const BaseSeeds& seeds, const EpochCallback& on_epoch = {});

/// SVM posterior of every segment.
std::vector<Posterior> segment_posteriors(const SceneNet<float>& net, const LinearSvm& svm, const SegmentSet& set);

/// Duration sweep of every system over the test snippets of one split.
/// posteriors[m] holds one posterior per segment of `test`.
std::vector<SystemSplitResult> evaluate_split(std::span<const System> systems, int split,
                                              const std::map<BaseModel, std::vector<Posterior>>& posteriors,
                                              const SegmentSet& test,
                                              std::span<const SnippetFeatures* const> test_snippets);

// ---------------------------------------------------------------------------
// Artifact-backed runs under <out>/split_<k>/

std::filesystem::path split_dir(const std::filesystem::path& out, int split);

/// Fits and stores the six channel embedding models of each split.
void run_tree(const RunConfig& cfg, const Manifest& manifest, const SplitPlan& plan, const LogFn& log = {});

/// Trains every base model needed by cfg.systems on each split and stores
/// checkpoints, SVMs, embedding models and training logs.
void run_train(const RunConfig& cfg, const Manifest& manifest, const SplitPlan& plan, const LogFn& log = {});

/// Loads the stored artifacts, evaluates every split and writes the report
/// under <out>/report. Throws DataError listing all missing artifacts.
SweepReport run_sweep(const RunConfig& cfg, const Manifest& manifest, const SplitPlan& plan, const LogFn& log = {});

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Exceptions propagate
/// after all started tasks finish.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn);

}  // namespace asc
