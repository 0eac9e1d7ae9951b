#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <vector>

#include "asc/audio.h"
#include "asc/error.h"
#include "asc/features.h"
#include "asc/random.h"

namespace asc {
namespace {

namespace fs = std::filesystem;

constexpr int kFrameLen = 5512;

std::vector<float> sine(double hz, double amp = 1.0) {
  std::vector<float> f(kFrameLen);
  for (int i = 0; i < kFrameLen; ++i) {
    f[static_cast<std::size_t>(i)] = static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * hz * i / kSampleRate));
  }
  return f;
}

std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

const FeatureExtractor& extractor() {
  static const FeatureExtractor fx;
  return fx;
}

TEST(PowerSpectrum, ZeroFrame) {
  const auto s = power_spectrum(std::vector<float>(kFrameLen, 0.0f));
  ASSERT_EQ(s.size(), 2049u);
  for (double v : s) EXPECT_EQ(v, 0.0);
}

TEST(PowerSpectrum, SinePeakNearAnalyticBin) {
  const auto s = power_spectrum(sine(1000.0));
  const double expected = 1000.0 * 4096.0 / 22050.0;  // ~185.8
  EXPECT_LE(std::abs(static_cast<double>(argmax(s)) - expected), 1.0);
  for (double v : s) EXPECT_GE(v, 0.0);
}

TEST(PowerSpectrum, ParsevalAgainstWindowedEnergy) {
  Rng rng(4);
  std::vector<float> frame(kFrameLen);
  for (auto& v : frame) v = static_cast<float>(rng.uniform(-1, 1));
  double energy = 0.0;
  for (int i = 0; i < kFrameLen; ++i) {
    const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / (kFrameLen - 1));
    const double x = w * frame[static_cast<std::size_t>(i)];
    energy += x * x;
  }
  double total = 0.0;
  for (double v : power_spectrum(frame)) total += v;
  EXPECT_NEAR(total / energy, 1.0, 1e-6);
}

TEST(PowerSpectrum, WrongLengthThrows) {
  EXPECT_THROW(power_spectrum(std::vector<float>(5000, 0.0f)), DataError);
}

TEST(FeatureDims, DefaultsAndSixChannels) {
  const FeatureParams p;
  EXPECT_EQ(p.dim(FeatureKind::gammatone), 64);
  EXPECT_EQ(p.dim(FeatureKind::mfcc), 20);
  EXPECT_EQ(p.dim(FeatureKind::logfb), 40);
  for (int c = 0; c < kChannels; ++c) {
    const ChannelId id{c};
    EXPECT_EQ(ChannelId::of(id.kind(), id.variant()), id);
  }
  EXPECT_EQ(ChannelId::of(FeatureKind::gammatone, NoiseVariant::with_bg).index, 0);
  EXPECT_EQ(ChannelId::of(FeatureKind::gammatone, NoiseVariant::fg_only).index, 1);
  EXPECT_EQ(ChannelId::of(FeatureKind::mfcc, NoiseVariant::with_bg).index, 2);
  EXPECT_EQ(ChannelId::of(FeatureKind::logfb, NoiseVariant::fg_only).index, 5);
}

TEST(Gammatone, ZeroSpectrumGivesZeros) {
  const auto v = extractor().gammatone_coeffs(std::vector<double>(2049, 0.0));
  ASSERT_EQ(v.values.size(), 64u);
  for (double x : v.values) EXPECT_EQ(x, 0.0);
}

TEST(Gammatone, ToneLandsInNearestErbBand) {
  // Glasberg & Moore ERB-rate scale, 64 centers from 50 Hz to 11025 Hz.
  auto erb = [](double f) { return 21.4 * std::log10(1.0 + 0.00437 * f); };
  auto inv = [](double e) { return (std::pow(10.0, e / 21.4) - 1.0) / 0.00437; };
  std::vector<double> centers(64);
  for (int i = 0; i < 64; ++i) centers[static_cast<std::size_t>(i)] = inv(erb(50.0) + (erb(11025.0) - erb(50.0)) * i / 63.0);
  for (int i = 0; i < 64; ++i) EXPECT_NEAR(extractor().gammatone_bank()[static_cast<std::size_t>(i)].center_hz, centers[static_cast<std::size_t>(i)], 1e-6);
  for (double tone : {1000.0, 440.0, 3000.0}) {
    std::size_t nearest = 0;
    for (std::size_t i = 1; i < 64; ++i) {
      if (std::abs(centers[i] - tone) < std::abs(centers[nearest] - tone)) nearest = i;
    }
    const auto v = extractor().gammatone_coeffs(power_spectrum(sine(tone)));
    EXPECT_EQ(argmax(v.values), nearest) << tone;
  }
}

TEST(Gammatone, MonotoneInSpectrumScale) {
  Rng rng(8);
  std::vector<double> s(2049);
  for (auto& v : s) v = rng.uniform(0.0, 2.0);
  std::vector<double> s2 = s;
  for (auto& v : s2) v *= 2.0;
  const auto a = extractor().gammatone_coeffs(s).values;
  const auto b = extractor().gammatone_coeffs(s2).values;
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_GE(b[i], a[i]);
}

TEST(Mfcc, ZeroSpectrumOnlyDcTerm) {
  const auto v = extractor().mfcc(std::vector<double>(2049, 0.0));
  ASSERT_EQ(v.values.size(), 20u);
  // Orthonormal DCT-II of a constant vector of 40 entries log(1e-10).
  const double c0 = 40.0 * std::log(1e-10) * std::sqrt(1.0 / 40.0);
  EXPECT_NEAR(v.values[0], c0, 1e-9);
  for (std::size_t k = 1; k < 20; ++k) EXPECT_NEAR(v.values[k], 0.0, 1e-9);
}

TEST(Mfcc, FlatMelEnergiesGiveNegligibleHigherOrders) {
  // A spectrum giving every Mel filter the same energy: unit-sum filters
  // over a flat spectrum.
  const auto v = extractor().mfcc(std::vector<double>(2049, 1e-3)).values;
  for (std::size_t k = 1; k < 20; ++k) EXPECT_LT(std::abs(v[k]), 1e-6 * std::abs(v[0]));
}

TEST(Mfcc, FilterOrderMatters) {
  FeatureExtractor fx;
  const auto spec = power_spectrum(sine(700.0));
  const auto before = fx.mfcc(spec).values;
  auto bank = fx.mel_bank();
  std::reverse(bank.begin(), bank.end());
  fx.set_mel_bank(bank);
  const auto after = fx.mfcc(spec).values;
  EXPECT_NEAR(after[0], before[0], 1e-9);  // DC term is a plain sum
  EXPECT_NE(after, before);
}

TEST(LogFb, ZeroToneAndMonotone) {
  const auto z = extractor().log_freq_fb(std::vector<double>(2049, 0.0)).values;
  ASSERT_EQ(z.size(), 40u);
  for (double x : z) EXPECT_EQ(x, 0.0);

  const double ratio = std::pow(11025.0 / 50.0, 1.0 / 39.0);
  for (double tone : {1000.0, 2500.0}) {
    std::size_t nearest = 0;
    double best = 1e300;
    for (int i = 0; i < 40; ++i) {
      const double c = 50.0 * std::pow(ratio, i);
      // Nearest on the log axis, the axis the triangles are spaced on.
      if (std::abs(std::log(c / tone)) < best) {
        best = std::abs(std::log(c / tone));
        nearest = static_cast<std::size_t>(i);
      }
    }
    EXPECT_EQ(argmax(extractor().log_freq_fb(power_spectrum(sine(tone))).values), nearest) << tone;
  }

  Rng rng(2);
  std::vector<double> s(2049);
  for (auto& v : s) v = rng.uniform();
  std::vector<double> s2 = s;
  for (auto& v : s2) v *= 2.0;
  const auto a = extractor().log_freq_fb(s).values;
  const auto b = extractor().log_freq_fb(s2).values;
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_GE(b[i], a[i]);
}

TEST(SubtractBackground, ConstantSpectraGoToZero) {
  const std::vector<std::vector<double>> spectra(20, std::vector<double>(16, 3.5));
  for (const auto& row : subtract_background(spectra)) {
    for (double v : row) EXPECT_EQ(v, 0.0);
  }
}

TEST(SubtractBackground, LoudFrameKeepsExcess) {
  std::vector<std::vector<double>> spectra(100, std::vector<double>(8, 1.0));
  spectra[37].assign(8, 5.0);
  const auto out = subtract_background(spectra);
  for (std::size_t t = 0; t < out.size(); ++t) {
    for (double v : out[t]) EXPECT_NEAR(v, t == 37 ? 4.0 : 0.0, 1e-12);
  }
}

TEST(SubtractBackground, NeverExceedsInputAndNeedsEightFrames) {
  Rng rng(10);
  std::vector<std::vector<double>> spectra(31, std::vector<double>(32));
  for (auto& r : spectra) for (auto& v : r) v = rng.uniform(0, 10);
  const auto out = subtract_background(spectra);
  for (std::size_t t = 0; t < out.size(); ++t) {
    for (std::size_t b = 0; b < 32; ++b) {
      EXPECT_LE(out[t][b], spectra[t][b]);
      EXPECT_GE(out[t][b], 0.0);
    }
  }
  EXPECT_THROW(subtract_background(std::vector<std::vector<double>>(7, std::vector<double>(4, 1.0))), DataError);
}

TEST(SnippetFeatures, ShapesFinitenessAndDeterminism) {
  const AudioClip clip = synth_scene(default_scene_spec(2, 8), 10.0, 99);
  const auto a = extract_snippet_features(clip, extractor());
  EXPECT_EQ(a.n_segments, 3);  // starts 0, 4, 6
  EXPECT_EQ(a.frames_per_segment, 31);
  EXPECT_DOUBLE_EQ(a.duration_s, 10.0);
  const int dims[] = {64, 64, 20, 20, 40, 40};
  for (int c = 0; c < kChannels; ++c) {
    const auto& m = a.channels[static_cast<std::size_t>(c)];
    EXPECT_EQ(m.rows, 93);
    EXPECT_EQ(m.cols, dims[c]);
    for (float v : m.data) ASSERT_TRUE(std::isfinite(v));
  }
  const auto b = extract_snippet_features(clip, extractor());
  for (int c = 0; c < kChannels; ++c) EXPECT_EQ(a.channels[static_cast<std::size_t>(c)].data, b.channels[static_cast<std::size_t>(c)].data);
}

TEST(FeatureCache, RoundTripAndParameterInvalidation) {
  const fs::path dir = fs::temp_directory_path() / "asc_test_feature_cache";
  fs::remove_all(dir);
  AudioClip clip = synth_scene(default_scene_spec(0, 8), 4.0, 5);
  clip.source_id = "clip_a";
  const FeatureParams params;
  const auto feats = extract_snippet_features(clip, FeatureExtractor(params));
  save_feature_cache(dir, feats, params);

  const auto back = load_feature_cache(dir, "clip_a", params);
  ASSERT_TRUE(back.has_value());
  EXPECT_EQ(back->n_segments, feats.n_segments);
  EXPECT_DOUBLE_EQ(back->duration_s, 4.0);
  for (int c = 0; c < kChannels; ++c) EXPECT_EQ(back->channels[static_cast<std::size_t>(c)].data, feats.channels[static_cast<std::size_t>(c)].data);

  FeatureParams other = params;
  other.background_percentile = 0.3;
  EXPECT_NE(other.digest(), params.digest());
  EXPECT_FALSE(load_feature_cache(dir, "clip_a", other).has_value());
  EXPECT_FALSE(load_feature_cache(dir, "absent", params).has_value());

  std::ofstream(dir / "clip_a.json") << "{\"param_digest\": \"" << params.digest() << "\"}";
  EXPECT_FALSE(load_feature_cache(dir, "clip_a", params).has_value());
}

TEST(FeatureParams, JsonRoundTrip) {
  FeatureParams p;
  p.gammatone_bands = 32;
  p.mfcc_log_floor = 1e-8;
  const FeatureParams q = FeatureParams::from_json(p.to_json());
  EXPECT_EQ(q.digest(), p.digest());
}

}  // namespace
}  // namespace asc
