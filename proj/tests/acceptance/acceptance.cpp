// Acceptance run: one PASS/FAIL line per primary criterion.
//
//   acceptance [criterion ...] [--trend-epochs N] [--work DIR]
//
// With no criterion numbers every criterion runs. Exit status is non-zero if
// any primary criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "asc/audio.h"
#include "asc/eval.h"
#include "asc/experiment.h"
#include "asc/features.h"
#include "asc/fusion.h"
#include "asc/gradcheck_suite.h"
#include "asc/lte.h"
#include "asc/models.h"
#include "asc/nn/layers.h"
#include "asc/random.h"

namespace fs = std::filesystem;
using namespace asc;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Settings {
  int trend_epochs = 30;
  fs::path work = fs::temp_directory_path() / "asc_acceptance";
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1 ------------------------------------------------------------------------

Outcome gradient_verification(const Settings&) {
  const auto t0 = std::chrono::steady_clock::now();
  GradCheckSuiteOptions opts;
  opts.seed = 2024;
  const std::vector<std::pair<std::string, Architecture>> archs = {
      {"cnn", tiny_architecture(ModelKind::cnn)},
      {"rnn", tiny_architecture(ModelKind::rnn)},
      {"crnn-sum", tiny_architecture(ModelKind::crnn, EarlyFusion::sum)},
      {"crnn-max", tiny_architecture(ModelKind::crnn, EarlyFusion::max)},
      {"crnn-concat", tiny_architecture(ModelKind::crnn, EarlyFusion::concat)}};
  double worst = 0.0;
  std::string worst_at;
  std::size_t blocks = 0;
  for (const auto& [name, arch] : archs) {
    const auto r = check_architecture(arch, opts);
    for (const auto& b : r.blocks) {
      ++blocks;
      if (b.max_rel_error >= worst) {
        worst = b.max_rel_error;
        worst_at = name + "/" + b.name;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 120.0,
          std::to_string(blocks) + " blocks, max rel err " + fmt("%.2e", worst) + " at " + worst_at +
              " (< 1e-4), " + fmt("%.1f", secs) + " s (< 120 s)"};
}

// 2 ------------------------------------------------------------------------

Outcome convolution_oracle(const Settings&) {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(7);
  double worst = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    const int F = 1 + static_cast<int>(rng.below(40));
    const int T = 2 + static_cast<int>(rng.below(40));
    const int D = 1 + static_cast<int>(rng.below(8));
    const int w = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(T - 1)));
    Image3<double> x(F, T, D);
    for (auto& v : x.values) v = rng.uniform(-1.0, 1.0);
    Mat<double> filt(F, w);
    for (Eigen::Index i = 0; i < filt.size(); ++i) filt.data()[i] = rng.uniform(-1.0, 1.0);
    const Mat<double> o = nn::conv_time_channel<double>(x, filt);
    if (o.rows() != T - w + 1 || o.cols() != D) return {false, "wrong output shape"};
    for (int i = 0; i < T - w + 1; ++i) {
      for (int j = 0; j < D; ++j) {
        double ref = 0.0;
        for (int m = 0; m < F; ++m) {
          for (int n = 0; n < w; ++n) ref += x.at(m, i + n, j) * filt(m, n);
        }
        worst = std::max(worst, std::abs(ref - o(i, j)));
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-12 && secs < 30.0,
          "100 random instances, max abs diff " + fmt("%.2e", worst) + " (<= 1e-12), " + fmt("%.2f", secs) +
              " s (< 30 s)"};
}

// 3 ------------------------------------------------------------------------

Posterior random_simplex(Rng& rng, int C) {
  Posterior p;
  double sum = 0.0;
  for (int c = 0; c < C; ++c) {
    p.values.push_back(rng.exponential(1.0));
    sum += p.values.back();
  }
  for (auto& v : p.values) v /= sum;
  return p;
}

Outcome fusion_algebra(const Settings&) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::string> failures;
  auto close = [](const Posterior& p, std::vector<double> want) {
    if (p.size() != want.size()) return false;
    for (std::size_t i = 0; i < want.size(); ++i) {
      if (std::abs(p[i] - want[i]) > 1e-12) return false;
    }
    return true;
  };
  const Posterior a{{0.7, 0.3}}, b{{0.4, 0.6}};
  if (!close(late_fuse(a, b, FusionRule::max), {0.7, 0.6})) failures.push_back("max");
  if (!close(late_fuse(a, b, FusionRule::mean), {0.55, 0.45})) failures.push_back("mean");
  if (!close(late_fuse(a, b, FusionRule::mult), {0.14, 0.09})) failures.push_back("mult");
  const Posterior p{{0.2, 0.5, 0.3}};
  if (!close(late_fuse(p, p, FusionRule::mean), p.values)) failures.push_back("mean identity");
  if (!close(late_fuse(p, p, FusionRule::max), p.values)) failures.push_back("max identity");
  if (!close(late_fuse(p, p, FusionRule::mult), {0.02, 0.125, 0.045})) failures.push_back("mult identity");

  Rng rng(11);
  int half_mismatch = 0;
  for (int i = 0; i < 1000; ++i) {
    const int C = 2 + static_cast<int>(rng.below(18));
    const Posterior x = random_simplex(rng, C), y = random_simplex(rng, C);
    std::vector<double> prod(static_cast<std::size_t>(C)), sum(static_cast<std::size_t>(C));
    for (int c = 0; c < C; ++c) {
      prod[static_cast<std::size_t>(c)] = x[static_cast<std::size_t>(c)] * y[static_cast<std::size_t>(c)];
      sum[static_cast<std::size_t>(c)] = x[static_cast<std::size_t>(c)] + y[static_cast<std::size_t>(c)];
    }
    if (predict(late_fuse(x, y, FusionRule::mult)) != predict(prod)) ++half_mismatch;
    if (predict(late_fuse(x, y, FusionRule::mean)) != predict(sum)) ++half_mismatch;
  }
  if (half_mismatch) failures.push_back(std::to_string(half_mismatch) + " argmax changes from the 1/2 factor");

  int perm_fail = 0;
  for (int i = 0; i < 1000; ++i) {
    const int C = 2 + static_cast<int>(rng.below(18));
    const int S = 1 + static_cast<int>(rng.below(8));
    std::vector<Posterior> segs;
    for (int s = 0; s < S; ++s) segs.push_back(random_simplex(rng, C));
    const Posterior ref = aggregate_segments(segs);
    shuffle(segs.begin(), segs.end(), rng);
    const Posterior perm = aggregate_segments(segs);
    for (int c = 0; c < C; ++c) {
      if (std::abs(ref[static_cast<std::size_t>(c)] - perm[static_cast<std::size_t>(c)]) > 1e-12) {
        ++perm_fail;
        break;
      }
    }
  }
  if (perm_fail) failures.push_back(std::to_string(perm_fail) + " permutation mismatches");
  const double secs = seconds_since(t0);
  std::string detail = failures.empty() ? "fixed pairs exact, 1000/1000 argmax-invariant pairs, 1000/1000 "
                                          "permutation-invariant lists"
                                        : "failed:";
  for (const auto& f : failures) detail += " [" + f + "]";
  return {failures.empty() && secs < 10.0, detail + ", " + fmt("%.2f", secs) + " s (< 10 s)"};
}

// 4 ------------------------------------------------------------------------

Outcome shape_contract(const Settings&) {
  std::vector<std::string> checks;
  bool ok = true;
  auto expect = [&](const std::string& what, long got, long want) {
    checks.push_back(what + "=" + std::to_string(got));
    if (got != want) ok = false;
  };
  // F from a 19-category tree.
  Rng rng(3);
  std::vector<std::vector<double>> means(19, std::vector<double>(5));
  for (auto& m : means) {
    for (auto& v : m) v = rng.normal();
  }
  const LabelTree tree = build_label_tree(means);
  expect("F", tree.meta_classes(), 36);
  expect("D", kChannels, 6);
  const auto seg_len = static_cast<std::size_t>(4 * kSampleRate);
  expect("T", frame_count(seg_len, kSampleRate), 31);
  expect("S", static_cast<long>(segment_starts(static_cast<std::size_t>(30 * kSampleRate), kSampleRate).size()), 8);

  LteTensor x(36, 31, 6);
  for (auto& v : x.values) v = static_cast<float>(rng.uniform());
  const std::vector<const LteTensor*> batch{&x};
  Architecture cnn;
  cnn.kind = ModelKind::cnn;
  const auto zc = SceneNet<float>(cnn, 1).forward(batch, nn::Mode::eval);
  expect("z_conv", zc.features.cols(), 3000);
  Architecture rnn;
  rnn.kind = ModelKind::rnn;
  const SceneNet<float> rnn_net(rnn, 2);
  expect("rnn_input", rnn_net.params()[rnn_net.params().find("gru1.W")].shape[0], 216);
  const auto zr = rnn_net.forward(batch, nn::Mode::eval);
  expect("z_rec", zr.features.cols(), 256);
  return {ok, [&] {
            std::string s;
            for (const auto& c : checks) s += (s.empty() ? "" : " ") + c;
            return s;
          }()};
}

// 5 ------------------------------------------------------------------------

Outcome lte_invariants(const Settings&) {
  constexpr int C = 19;
  Rng rng(5);
  double worst = 0.0;
  int nodes = -1;
  bool nodes_ok = true;
  const FeatureParams params;
  for (int ch = 0; ch < kChannels; ++ch) {
    const int dim = params.dim(ChannelId{ch}.kind());
    std::vector<std::vector<double>> centers(C, std::vector<double>(static_cast<std::size_t>(dim)));
    for (auto& c : centers) {
      for (auto& v : c) v = 2.0 * rng.normal();
    }
    constexpr int per_class = 40;
    FeatureMatrix frames(C * per_class, dim);
    std::vector<int> labels;
    for (int c = 0; c < C; ++c) {
      for (int i = 0; i < per_class; ++i) {
        auto row = frames.row(c * per_class + i);
        for (int d = 0; d < dim; ++d) {
          row[static_cast<std::size_t>(d)] =
              static_cast<float>(centers[static_cast<std::size_t>(c)][static_cast<std::size_t>(d)] + rng.normal());
        }
        labels.push_back(c);
      }
    }
    const EmbeddingModel model = fit_channel_embedding(frames, labels, C, ChannelId{ch});
    nodes = model.tree.split_nodes();
    nodes_ok = nodes_ok && nodes == C - 1;
    std::vector<float> v(static_cast<std::size_t>(dim));
    for (int i = 0; i < 10000 / kChannels + 1; ++i) {
      for (auto& x : v) x = static_cast<float>(rng.uniform(-20.0, 20.0));
      const auto e = embed_frame(model, v);
      for (int n = 0; n < nodes; ++n) {
        // Also checked after the float32 cast used by the tensor.
        const double s64 = e[static_cast<std::size_t>(2 * n)] + e[static_cast<std::size_t>(2 * n + 1)];
        const double s32 = static_cast<double>(static_cast<float>(e[static_cast<std::size_t>(2 * n)])) +
                           static_cast<double>(static_cast<float>(e[static_cast<std::size_t>(2 * n + 1)]));
        worst = std::max({worst, std::abs(s64 - 1.0), std::abs(s32 - 1.0)});
      }
    }
  }
  return {worst <= 1e-9 && nodes_ok,
          "split nodes " + std::to_string(nodes) + " (18), >= 10^4 random frames over 6 channels, max |pair sum - 1| " +
              fmt("%.2e", worst) + " (<= 1e-9)"};
}

// 6 ------------------------------------------------------------------------

struct SmallSet {
  std::vector<LteTensor> tensors;
  std::vector<int> labels;
};

// Separable catalogue: every category has its own noise color and event
// band, and events are frequent enough that each 4 s clip contains several.
SceneSpec separable_spec(int c) {
  SceneSpec s;
  s.category = c;
  s.noise_color = 0.7 * c;
  s.event_rate = 1.5;
  s.event_band_lo = 250.0 * std::pow(2.5, c);
  s.event_band_hi = 1.6 * s.event_band_lo;
  return s;
}

SmallSet overfit_set() {
  constexpr int C = 4, per = 20;
  std::vector<SnippetFeatures> feats;
  const FeatureExtractor fx;
  for (int c = 0; c < C; ++c) {
    for (int i = 0; i < per; ++i) {
      AudioClip clip = synth_scene(separable_spec(c), 4.0, derive_seed(99, "overfit", static_cast<std::uint64_t>(c * per + i)));
      clip.label = c;
      clip.source_id = "s" + std::to_string(c * per + i);
      feats.push_back(extract_snippet_features(clip, fx));
    }
  }
  std::vector<const SnippetFeatures*> ptrs;
  for (const auto& f : feats) ptrs.push_back(&f);
  const ChannelModels models = fit_embeddings(ptrs, C);
  const SegmentSet set = embed_snippets(models, ptrs);
  return {set.tensors, set.labels};
}

Outcome overfit(const Settings&) {
  const SmallSet data = overfit_set();
  std::string detail = std::to_string(data.tensors.size()) + " segments;";
  bool ok = true;
  for (ModelKind kind : {ModelKind::cnn, ModelKind::rnn}) {
    const auto t0 = std::chrono::steady_clock::now();
    Architecture arch;
    arch.kind = kind;
    arch.n_classes = 4;
    arch.features = data.tensors.front().features;
    SceneNet<float> net(arch, derive_seed(1, to_string(kind)));
    TrainConfig cfg;  // 200 epochs, batch 64, Adam 1e-4, lambda 1e-3
    cfg.seed = 17;
    int first_hit = -1;
    train_model(net, data.tensors, data.labels, cfg, [&](const EpochStats& e) {
      if (first_hit < 0 && e.train_accuracy >= 95.0) first_hit = e.epoch;
    });
    const Mat<float> post = predict_posteriors(net, data.tensors);
    std::vector<int> preds;
    for (Eigen::Index i = 0; i < post.rows(); ++i) preds.push_back(predict(std::vector<double>(post.row(i).begin(), post.row(i).end())));
    const double acc = accuracy(preds, data.labels);
    const double secs = seconds_since(t0);
    ok = ok && acc >= 95.0 && secs < 600.0;
    detail += std::string(" ") + to_string(kind) + " " + fmt("%.1f", acc) + "% (train-mode >= 95% from epoch " +
              std::to_string(first_hit) + ", " + fmt("%.0f", secs) + " s);";
  }
  return {ok, detail + " need >= 95% and < 600 s each"};
}

// 7 ------------------------------------------------------------------------

Outcome trends(const Settings& st) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path work = st.work / "trends";
  fs::remove_all(work);
  RunConfig cfg;
  cfg.seed = 20240607;
  cfg.out_dir = work / "out";
  cfg.cache_dir = work / "cache";
  cfg.n_splits = 5;
  cfg.train.epochs = st.trend_epochs;
  synthesize_corpus(work / "data", 8, 25, 30.0, cfg.seed);
  const Manifest manifest = load_manifest(work / "data" / "manifest.jsonl");
  const auto summary = build_feature_cache(manifest, cfg.cache_dir, cfg.features, {}, 1);
  if (!summary.errors.empty()) return {false, "feature extraction failed: " + summary.errors.front()};
  const SplitPlan plan = make_splits(manifest, cfg.n_splits, cfg.train_ratio, derive_seed(cfg.seed, "splits"));
  run_train(cfg, manifest, plan, [&](const std::string& msg) {
    if (msg.ends_with("done")) std::fprintf(stderr, "  [%6.0f s] %s\n", seconds_since(t0), msg.c_str());
  });
  const SweepReport report = run_sweep(cfg, manifest, plan);

  std::ostringstream detail;
  bool ok_a = true;
  for (System s : kAllSystems) {
    const auto* r4 = report.find(to_string(s), 4.0);
    const auto* r30 = report.find(to_string(s), 30.0);
    if (!r4 || !r30) return {false, std::string("missing rows for ") + to_string(s)};
    const bool ok = r30->accuracy >= r4->accuracy - 1.0;
    ok_a = ok_a && ok;
    detail << to_string(s) << " " << fmt("%.1f", r4->accuracy) << "->" << fmt("%.1f", r30->accuracy)
           << (ok ? "" : "(!)") << "; ";
  }
  auto gain = [&](double d) {
    const double lf = report.find("lf-mult", d)->accuracy;
    return lf - std::max(report.find("cnn", d)->accuracy, report.find("rnn", d)->accuracy);
  };
  const double g4 = gain(4.0), g28 = gain(28.0);
  const bool ok_b = g4 > g28 - 0.5;
  const double secs = seconds_since(t0);
  detail << "(a) " << (ok_a ? "ok" : "violated") << "; (b) lf-mult gain 4 s " << fmt("%+.2f", g4) << " vs 28 s "
         << fmt("%+.2f", g28) << " (tolerance 0.5) " << (ok_b ? "ok" : "violated") << "; " << st.trend_epochs
         << " epochs, " << fmt("%.0f", secs) << " s (< 7200 s); report " << (cfg.out_dir / "report").string();
  return {ok_a && ok_b && secs < 7200.0, detail.str()};
}

}  // namespace

int main(int argc, char** argv) {
  Settings st;
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--trend-epochs" && i + 1 < argc) {
      st.trend_epochs = std::atoi(argv[++i]);
    } else if (a == "--work" && i + 1 < argc) {
      st.work = argv[++i];
    } else {
      only.insert(std::atoi(a.c_str()));
    }
  }
  const std::vector<std::tuple<int, std::string, std::function<Outcome(const Settings&)>>> criteria = {
      {1, "gradient verification", gradient_verification},
      {2, "convolution oracle", convolution_oracle},
      {3, "fusion algebra", fusion_algebra},
      {4, "shape contract", shape_contract},
      {5, "LTE invariants", lte_invariants},
      {6, "overfit capability", overfit},
      {7, "duration trends on synthetic data", trends},
  };
  int failed = 0;
  for (const auto& [id, name, fn] : criteria) {
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = fn(st);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %d %-34s %s  %s\n", id, name.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  if (only.empty() || only.count(8)) {
    std::printf("criterion 8 [stretch, not required] %-26s INFO  needs the external corpus and official splits; "
                "run `asc --config <cfg> train` and `sweep` with paths.split_dir set\n",
                "published-figure comparison");
  }
  return failed == 0 ? 0 : 1;
}
