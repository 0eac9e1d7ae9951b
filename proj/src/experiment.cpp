#include "asc/experiment.h"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "asc/error.h"
#include "asc/random.h"

namespace asc {

namespace fs = std::filesystem;

const char* to_string(BaseModel m) {
  switch (m) {
    case BaseModel::cnn: return "cnn";
    case BaseModel::rnn: return "rnn";
    case BaseModel::crnn_sum: return "crnn-sum";
    case BaseModel::crnn_max: return "crnn-max";
    case BaseModel::crnn_concat: return "crnn-concat";
  }
  return "?";
}

std::vector<BaseModel> base_models_for(std::span<const System> systems) {
  std::vector<BaseModel> out;
  auto need = [&](BaseModel m) {
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  };
  for (System s : systems) {
    switch (s) {
      case System::cnn: need(BaseModel::cnn); break;
      case System::rnn: need(BaseModel::rnn); break;
      case System::ef_sum: need(BaseModel::crnn_sum); break;
      case System::ef_max: need(BaseModel::crnn_max); break;
      case System::ef_concat: need(BaseModel::crnn_concat); break;
      case System::lf_max:
      case System::lf_mean:
      case System::lf_mult:
        need(BaseModel::cnn);
        need(BaseModel::rnn);
        break;
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

Architecture architecture_for(BaseModel m, const Architecture& base, int n_classes, int features) {
  Architecture a = base;
  a.n_classes = n_classes;
  a.features = features;
  a.channels = kChannels;
  switch (m) {
    case BaseModel::cnn: a.kind = ModelKind::cnn; break;
    case BaseModel::rnn: a.kind = ModelKind::rnn; break;
    case BaseModel::crnn_sum: a.kind = ModelKind::crnn; a.fusion = EarlyFusion::sum; break;
    case BaseModel::crnn_max: a.kind = ModelKind::crnn; a.fusion = EarlyFusion::max; break;
    case BaseModel::crnn_concat: a.kind = ModelKind::crnn; a.fusion = EarlyFusion::concat; break;
  }
  return a;
}

void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  const int workers = std::clamp(jobs, 1, n);
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------

std::string synth_category_name(int c) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%02d", c);
  return buf;
}

std::vector<SynthClip> synthesize_corpus(const fs::path& dir, int n_categories, int per_category,
                                         double duration_s, std::uint64_t seed, int jobs) {
  if (n_categories < 2 || per_category < 1) throw ConfigError("synth needs >= 2 categories and >= 1 clip each");
  if (duration_s < kSegmentSeconds) throw ConfigError("synth duration must be at least 4 s");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataError("cannot create output directory " + dir.string());

  std::vector<SynthClip> clips;
  for (int c = 0; c < n_categories; ++c) {
    for (int i = 0; i < per_category; ++i) {
      SynthClip clip;
      clip.category = synth_category_name(c);
      char id[64];
      std::snprintf(id, sizeof id, "%s_%03d", clip.category.c_str(), i);
      clip.source_id = id;
      clip.label = c;
      clip.seed = derive_seed(seed, "synth." + clip.category, static_cast<std::uint64_t>(i));
      clip.duration_s = duration_s;
      clips.push_back(std::move(clip));
    }
  }
  parallel_for(static_cast<int>(clips.size()), jobs, [&](int i) {
    const SynthClip& s = clips[static_cast<std::size_t>(i)];
    AudioClip audio = synth_scene(default_scene_spec(s.label, n_categories), s.duration_s, s.seed);
    audio.source_id = s.source_id;
    write_wav(dir / (s.source_id + ".wav"), audio);
  });

  std::vector<SnippetRecord> records;
  nlohmann::json listing = nlohmann::json::array();
  for (const auto& s : clips) {
    records.push_back({s.source_id + ".wav", s.category, s.source_id});
    listing.push_back({{"source_id", s.source_id}, {"category", s.category}, {"seed", s.seed}, {"duration_s", s.duration_s}});
  }
  write_manifest(dir / "manifest.jsonl", records);
  std::ofstream js(dir / "synth_manifest.json");
  if (!js) throw DataError("cannot write " + (dir / "synth_manifest.json").string());
  js << nlohmann::json{{"clips", listing}}.dump(2) << '\n';
  return clips;
}

// ---------------------------------------------------------------------------

FeatureCacheSummary build_feature_cache(const Manifest& manifest, const fs::path& cache_dir,
                                        const FeatureParams& params, const WavOptions& wav, int jobs,
                                        const LogFn& log) {
  FeatureCacheSummary summary;
  std::mutex mutex;
  const FeatureExtractor fx(params);
  const int n = static_cast<int>(manifest.records.size());
  parallel_for(n, jobs, [&](int i) {
    const auto& r = manifest.records[static_cast<std::size_t>(i)];
    if (load_feature_cache(cache_dir, r.snippet_id, params)) {
      std::lock_guard lock(mutex);
      ++summary.reused;
      return;
    }
    try {
      AudioClip clip = load_wav(r.path, wav);
      clip.source_id = r.snippet_id;
      clip.label = manifest.label_of(r);
      const SnippetFeatures feats = extract_snippet_features(clip, fx);
      save_feature_cache(cache_dir, feats, params);
      std::lock_guard lock(mutex);
      ++summary.computed;
      if (log) log("features " + r.snippet_id);
    } catch (const std::exception& e) {
      std::lock_guard lock(mutex);
      summary.errors.push_back(r.snippet_id + ": " + e.what());
    }
  });
  std::sort(summary.errors.begin(), summary.errors.end());
  return summary;
}

std::vector<SnippetFeatures> load_cached_features(const Manifest& manifest, const fs::path& cache_dir,
                                                  const FeatureParams& params) {
  std::vector<SnippetFeatures> out;
  std::vector<std::string> missing;
  for (const auto& r : manifest.records) {
    auto f = load_feature_cache(cache_dir, r.snippet_id, params);
    if (!f) {
      missing.push_back(r.snippet_id);
      continue;
    }
    f->label = manifest.label_of(r);
    out.push_back(std::move(*f));
  }
  if (!missing.empty()) {
    std::string msg = "missing or stale feature cache entries (" + std::to_string(missing.size()) + "):";
    for (const auto& id : missing) msg += " " + id;
    throw DataError(msg);
  }
  return out;
}

// ---------------------------------------------------------------------------

SegmentSet embed_snippets(const ChannelModels& models, std::span<const SnippetFeatures* const> snippets) {
  SegmentSet set;
  for (std::size_t i = 0; i < snippets.size(); ++i) {
    auto tensors = embed_snippet(models, *snippets[i]);
    for (auto& t : tensors) {
      set.tensors.push_back(std::move(t));
      set.labels.push_back(snippets[i]->label);
      set.snippet.push_back(static_cast<int>(i));
    }
  }
  return set;
}

BaseSeeds base_seeds(std::uint64_t seed, BaseModel m, int split) {
  const std::string name = to_string(m);
  const auto k = static_cast<std::uint64_t>(split);
  return {derive_seed(seed, "init." + name, k), derive_seed(seed, "train." + name, k),
          derive_seed(seed, "svm." + name, k)};
}

TrainedBase train_base(BaseModel m, const RunConfig& cfg, const SegmentSet& train, int n_classes,
                       const BaseSeeds& seeds, const EpochCallback& on_epoch) {
  if (train.tensors.empty()) throw DataError("no training segments");
  const Architecture arch = architecture_for(m, cfg.arch, n_classes, train.tensors.front().features);
  SceneNet<float> net(arch, seeds.init);
  TrainConfig tc = cfg.train;
  tc.seed = seeds.train;
  TrainResult trace = train_model(net, train.tensors, train.labels, tc, on_epoch);
  const Mat<float> feats = extract_features(net, train.tensors);
  SvmConfig sc = cfg.svm;
  sc.seed = seeds.svm;
  LinearSvm svm = train_linear_svm(feats, train.labels, n_classes, sc);
  return {std::move(net), std::move(svm), std::move(trace)};
}

std::vector<Posterior> segment_posteriors(const SceneNet<float>& net, const LinearSvm& svm, const SegmentSet& set) {
  const Mat<float> feats = extract_features(net, set.tensors);
  std::vector<Posterior> out;
  out.reserve(set.tensors.size());
  for (Eigen::Index i = 0; i < feats.rows(); ++i) {
    out.push_back(svm_posterior(svm, std::span<const float>(feats.data() + i * feats.cols(),
                                                            static_cast<std::size_t>(feats.cols()))));
  }
  return out;
}

std::vector<SystemSplitResult> evaluate_split(std::span<const System> systems, int split,
                                              const std::map<BaseModel, std::vector<Posterior>>& posteriors,
                                              const SegmentSet& test,
                                              std::span<const SnippetFeatures* const> test_snippets) {
  if (test_snippets.empty()) throw DataError("split " + std::to_string(split) + " has no test snippets");
  const int S = test_snippets.front()->n_segments;
  for (const auto* f : test_snippets) {
    if (f->n_segments != S) throw DataError("test snippets differ in segment count; the sweep needs equal lengths");
  }
  // First segment index of each snippet.
  std::vector<std::size_t> first(test_snippets.size(), test.snippet.size());
  for (std::size_t i = test.snippet.size(); i-- > 0;) first[static_cast<std::size_t>(test.snippet[i])] = i;

  auto posts_of = [&](BaseModel m) -> const std::vector<Posterior>& {
    const auto it = posteriors.find(m);
    if (it == posteriors.end()) throw DataError(std::string("no posteriors for model ") + to_string(m));
    if (it->second.size() != test.tensors.size()) throw DataError("posterior count does not match segments");
    return it->second;
  };

  std::vector<SystemSplitResult> results;
  for (System sys : systems) {
    SystemSplitResult r;
    r.system = sys;
    r.split = split;
    for (int k = 1; k <= S; ++k) r.durations.push_back(duration_label(k, S, test_snippets.front()->duration_s));
    r.predictions.assign(static_cast<std::size_t>(S), {});
    const bool late = is_late_fusion(sys);
    BaseModel primary = BaseModel::cnn;
    switch (sys) {
      case System::rnn: primary = BaseModel::rnn; break;
      case System::ef_sum: primary = BaseModel::crnn_sum; break;
      case System::ef_max: primary = BaseModel::crnn_max; break;
      case System::ef_concat: primary = BaseModel::crnn_concat; break;
      default: break;
    }
    const auto& p1 = posts_of(primary);
    const std::vector<Posterior>* p2 = late ? &posts_of(BaseModel::rnn) : nullptr;
    for (std::size_t s = 0; s < test_snippets.size(); ++s) {
      const std::size_t b = first[s];
      const std::span<const Posterior> a(p1.data() + b, static_cast<std::size_t>(S));
      const std::span<const Posterior> c = p2 ? std::span<const Posterior>(p2->data() + b, static_cast<std::size_t>(S))
                                              : std::span<const Posterior>{};
      const auto preds = duration_sweep(sys, a, c);
      for (int k = 0; k < S; ++k) r.predictions[static_cast<std::size_t>(k)].push_back(preds[static_cast<std::size_t>(k)]);
      r.truths.push_back(test_snippets[s]->label);
    }
    results.push_back(std::move(r));
  }
  return results;
}

// ---------------------------------------------------------------------------

fs::path split_dir(const fs::path& out, int split) { return out / ("split_" + std::to_string(split)); }

namespace {

struct SplitData {
  std::vector<const SnippetFeatures*> train;
  std::vector<const SnippetFeatures*> test;
};

SplitData select_split(const Manifest& manifest, const std::vector<SnippetFeatures>& all, const Split& split) {
  SplitData d;
  for (const auto* ids : {&split.train, &split.test}) {
    for (const auto& id : *ids) {
      const int i = manifest.index_of(id);
      if (i < 0) throw DataError("split references unknown snippet '" + id + "'");
      (ids == &split.train ? d.train : d.test).push_back(&all[static_cast<std::size_t>(i)]);
    }
  }
  return d;
}

fs::path lte_path(const fs::path& dir, int c) { return dir / ("lte_channel_" + std::to_string(c) + ".bin"); }

void save_channel_models(const fs::path& dir, const ChannelModels& models) {
  fs::create_directories(dir);
  nlohmann::json trees = nlohmann::json::array();
  for (int c = 0; c < kChannels; ++c) {
    save_embedding_model(lte_path(dir, c), models[static_cast<std::size_t>(c)]);
    trees.push_back(models[static_cast<std::size_t>(c)].tree.to_json());
  }
  std::ofstream(dir / "label_trees.json") << trees.dump(2) << '\n';
}

ChannelModels load_channel_models(const fs::path& dir) {
  ChannelModels models;
  for (int c = 0; c < kChannels; ++c) models[static_cast<std::size_t>(c)] = load_embedding_model(lte_path(dir, c));
  return models;
}

void write_training_log(const fs::path& path, const TrainResult& trace) {
  std::ofstream out(path);
  out << "epoch,loss,train_accuracy\n";
  for (const auto& e : trace.trace) out << e.epoch << ',' << e.loss << ',' << e.train_accuracy << '\n';
}

}  // namespace

void run_tree(const RunConfig& cfg, const Manifest& manifest, const SplitPlan& plan, const LogFn& log) {
  const auto all = load_cached_features(manifest, cfg.cache_dir, cfg.features);
  const int C = static_cast<int>(manifest.categories.size());
  parallel_for(static_cast<int>(plan.splits.size()), cfg.jobs, [&](int k) {
    const SplitData d = select_split(manifest, all, plan.splits[static_cast<std::size_t>(k)]);
    const ChannelModels models = fit_embeddings(d.train, C, cfg.lte);
    save_channel_models(split_dir(cfg.out_dir, k), models);
    if (log) log("split " + std::to_string(k) + ": label trees with " + std::to_string(models[0].tree.split_nodes()) + " split nodes");
  });
}

void run_train(const RunConfig& cfg, const Manifest& manifest, const SplitPlan& plan, const LogFn& log) {
  const auto all = load_cached_features(manifest, cfg.cache_dir, cfg.features);
  const int C = static_cast<int>(manifest.categories.size());
  const auto bases = base_models_for(cfg.systems);
  parallel_for(static_cast<int>(plan.splits.size()), cfg.jobs, [&](int k) {
    const fs::path dir = split_dir(cfg.out_dir, k);
    const SplitData d = select_split(manifest, all, plan.splits[static_cast<std::size_t>(k)]);
    const ChannelModels models = fit_embeddings(d.train, C, cfg.lte);
    save_channel_models(dir, models);
    const SegmentSet train = embed_snippets(models, d.train);
    {
      nlohmann::json meta = {{"split", k}, {"train", plan.splits[static_cast<std::size_t>(k)].train},
                             {"test", plan.splits[static_cast<std::size_t>(k)].test}, {"config", cfg.to_json()}};
      std::ofstream(dir / "split.json") << meta.dump(2) << '\n';
    }
    for (BaseModel m : bases) {
      const std::string name = to_string(m);
      const BaseSeeds seeds = base_seeds(cfg.seed, m, k);
      const auto on_epoch = [&](const EpochStats& e) {
        if (log && (e.epoch % 10 == 0 || e.epoch == cfg.train.epochs)) {
          std::ostringstream msg;
          msg << "split " << k << " " << name << " epoch " << e.epoch << " loss " << e.loss << " train-acc "
              << e.train_accuracy;
          log(msg.str());
        }
      };
      const TrainedBase tb = train_base(m, cfg, train, C, seeds, on_epoch);
      nlohmann::json extra = {{"seed", seeds.init}, {"train", cfg.train.to_json()}, {"split", k}};
      extra["train"]["seed"] = seeds.train;
      save_checkpoint(dir / (name + ".ckpt"), tb.net, extra);
      save_svm(dir / (name + ".svm"), tb.svm);
      write_training_log(dir / (name + "_train.csv"), tb.trace);
      if (log) log("split " + std::to_string(k) + " " + name + " done");
    }
  });
}

SweepReport run_sweep(const RunConfig& cfg, const Manifest& manifest, const SplitPlan& plan, const LogFn& log) {
  const auto bases = base_models_for(cfg.systems);
  const int n_splits = static_cast<int>(plan.splits.size());
  std::vector<std::string> missing;
  for (int k = 0; k < n_splits; ++k) {
    const fs::path dir = split_dir(cfg.out_dir, k);
    for (int c = 0; c < kChannels; ++c) {
      if (!fs::exists(lte_path(dir, c))) missing.push_back(lte_path(dir, c).string());
    }
    for (BaseModel m : bases) {
      for (const char* ext : {".ckpt", ".svm"}) {
        const fs::path p = dir / (std::string(to_string(m)) + ext);
        if (!fs::exists(p)) missing.push_back(p.string());
      }
    }
  }
  if (!missing.empty()) {
    std::string msg = "missing artifacts (" + std::to_string(missing.size()) + "):";
    for (const auto& p : missing) msg += "\n  " + p;
    throw DataError(msg);
  }

  const auto all = load_cached_features(manifest, cfg.cache_dir, cfg.features);
  std::vector<std::vector<SystemSplitResult>> per_split(static_cast<std::size_t>(n_splits));
  parallel_for(n_splits, cfg.jobs, [&](int k) {
    const fs::path dir = split_dir(cfg.out_dir, k);
    const SplitData d = select_split(manifest, all, plan.splits[static_cast<std::size_t>(k)]);
    const ChannelModels models = load_channel_models(dir);
    const SegmentSet test = embed_snippets(models, d.test);
    std::map<BaseModel, std::vector<Posterior>> posts;
    for (BaseModel m : bases) {
      const std::string name = to_string(m);
      const SceneNet<float> net = load_checkpoint(dir / (name + ".ckpt"));
      const LinearSvm svm = load_svm(dir / (name + ".svm"));
      posts[m] = segment_posteriors(net, svm, test);
    }
    per_split[static_cast<std::size_t>(k)] = evaluate_split(cfg.systems, k, posts, test, d.test);
    if (log) log("split " + std::to_string(k) + " evaluated");
  });
  std::vector<SystemSplitResult> flat;
  for (auto& v : per_split) {
    for (auto& r : v) flat.push_back(std::move(r));
  }
  SweepReport report = summarize(flat, manifest.categories);
  emit_report(cfg.out_dir / "report", report);
  return report;
}

}  // namespace asc
