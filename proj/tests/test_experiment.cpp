#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "asc/error.h"
#include "asc/experiment.h"

namespace asc {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int count_lines(const fs::path& p) {
  std::ifstream in(p);
  int n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

class Workdir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("asc_exp_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

TEST_F(Workdir, SynthCorpusIsReproducible) {
  const auto clips = synthesize_corpus(dir_ / "a", 3, 2, 4.0, 11);
  ASSERT_EQ(clips.size(), 6u);
  EXPECT_EQ(count_lines(dir_ / "a" / "manifest.jsonl"), 6);
  const auto listing = nlohmann::json::parse(slurp(dir_ / "a" / "synth_manifest.json"));
  EXPECT_EQ(listing.at("clips").size(), 6u);

  synthesize_corpus(dir_ / "b", 3, 2, 4.0, 11, 2);
  std::set<std::string> ids;
  for (const auto& c : clips) {
    ids.insert(c.source_id);
    EXPECT_EQ(slurp(dir_ / "a" / (c.source_id + ".wav")), slurp(dir_ / "b" / (c.source_id + ".wav"))) << c.source_id;
  }
  EXPECT_EQ(ids.size(), 6u);

  const Manifest m = load_manifest(dir_ / "a" / "manifest.jsonl");
  EXPECT_EQ(m.categories.size(), 3u);
  EXPECT_EQ(m.categories[0], synth_category_name(0));
}

TEST_F(Workdir, SynthSeedChangesAudio) {
  const auto clips = synthesize_corpus(dir_ / "a", 2, 1, 4.0, 1);
  synthesize_corpus(dir_ / "b", 2, 1, 4.0, 2);
  EXPECT_NE(slurp(dir_ / "a" / (clips[0].source_id + ".wav")), slurp(dir_ / "b" / (clips[0].source_id + ".wav")));
}

TEST_F(Workdir, SynthRejectsBadArguments) {
  EXPECT_THROW(synthesize_corpus(dir_, 2, 1, 3.9, 0), ConfigError);
  EXPECT_THROW(synthesize_corpus(dir_, 1, 1, 4.0, 0), ConfigError);
  EXPECT_THROW(synthesize_corpus(dir_, 2, 0, 4.0, 0), ConfigError);
}

TEST_F(Workdir, FeatureCacheIsIncremental) {
  synthesize_corpus(dir_ / "data", 2, 2, 4.0, 3);
  const Manifest m = load_manifest(dir_ / "data" / "manifest.jsonl");
  const FeatureParams params;
  const auto first = build_feature_cache(m, dir_ / "cache", params, WavOptions{}, 1);
  EXPECT_EQ(first.computed, 4);
  EXPECT_EQ(first.reused, 0);
  EXPECT_TRUE(first.errors.empty());

  const auto second = build_feature_cache(m, dir_ / "cache", params, WavOptions{}, 2);
  EXPECT_EQ(second.computed, 0);
  EXPECT_EQ(second.reused, 4);

  FeatureParams changed = params;
  changed.background_percentile = 0.3;
  const auto third = build_feature_cache(m, dir_ / "cache", changed, WavOptions{}, 1);
  EXPECT_EQ(third.computed, 4);

  const auto feats = load_cached_features(m, dir_ / "cache", changed);
  ASSERT_EQ(feats.size(), 4u);
  for (std::size_t i = 0; i < feats.size(); ++i) {
    EXPECT_EQ(feats[i].snippet_id, m.records[i].snippet_id);
    EXPECT_EQ(feats[i].label, m.label_of(m.records[i]));
    EXPECT_EQ(feats[i].n_segments, 1);
  }
  EXPECT_THROW(load_cached_features(m, dir_ / "cache", params), DataError);
}

TEST_F(Workdir, FeatureCacheCollectsPerFileErrors) {
  synthesize_corpus(dir_ / "data", 2, 2, 4.0, 3);
  Manifest m = load_manifest(dir_ / "data" / "manifest.jsonl");
  fs::remove(dir_ / "data" / m.records[1].path);
  fs::create_directories(dir_ / "cache");
  const auto summary = build_feature_cache(m, dir_ / "cache", FeatureParams{}, WavOptions{}, 1);
  EXPECT_EQ(summary.computed, 3);
  ASSERT_EQ(summary.errors.size(), 1u);
  EXPECT_EQ(summary.errors[0].rfind(m.records[1].snippet_id, 0), 0u);
  EXPECT_THROW(load_cached_features(m, dir_ / "cache", FeatureParams{}), DataError);
}

TEST(BaseModels, LateFusionReusesStandaloneNetworks) {
  const std::vector<System> late{System::lf_max, System::lf_mult};
  EXPECT_EQ(base_models_for(late), (std::vector<BaseModel>{BaseModel::cnn, BaseModel::rnn}));
  const std::vector<System> early{System::ef_concat, System::cnn};
  const auto early_models = base_models_for(early);
  EXPECT_EQ(early_models.size(), 2u);
  EXPECT_NE(std::find(early_models.begin(), early_models.end(), BaseModel::crnn_concat), early_models.end());
  EXPECT_EQ(base_models_for(std::vector<System>(std::begin(kAllSystems), std::end(kAllSystems))).size(), 5u);
}

TEST(BaseModels, SeedsDifferPerModelAndSplit) {
  std::set<std::uint64_t> seen;
  for (BaseModel m : {BaseModel::cnn, BaseModel::rnn, BaseModel::crnn_sum, BaseModel::crnn_max, BaseModel::crnn_concat}) {
    for (int split = 0; split < 4; ++split) {
      const BaseSeeds s = base_seeds(5, m, split);
      seen.insert(s.init);
      seen.insert(s.train);
      seen.insert(s.svm);
      EXPECT_EQ(base_seeds(5, m, split).init, s.init);
    }
  }
  EXPECT_EQ(seen.size(), 5u * 4u * 3u);
}

TEST(ParallelFor, VisitsEveryIndexOnce) {
  for (int jobs : {1, 3}) {
    std::vector<std::atomic<int>> hits(50);
    parallel_for(50, jobs, [&](int i) { hits[static_cast<std::size_t>(i)]++; });
    for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
  }
}

TEST(ParallelFor, PropagatesExceptions) {
  for (int jobs : {1, 4}) {
    std::atomic<int> ran{0};
    EXPECT_THROW(parallel_for(10, jobs,
                              [&](int i) {
                                ran++;
                                if (i == 3) throw DataError("boom");
                              }),
                 DataError);
    EXPECT_GE(ran.load(), 1);
  }
}

TEST(SplitDir, Layout) { EXPECT_EQ(split_dir("out", 3), fs::path("out") / "split_3"); }

}  // namespace
}  // namespace asc
