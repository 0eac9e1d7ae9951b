#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <vector>

#include "asc/audio.h"
#include "asc/error.h"
#include "asc/features.h"
#include "asc/fusion.h"
#include "asc/random.h"

namespace asc {
namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("asc_test_audio_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

AudioClip ramp_clip(double seconds, int rate = kSampleRate) {
  AudioClip c;
  c.sample_rate = rate;
  c.samples.resize(static_cast<std::size_t>(std::llround(seconds * rate)));
  for (std::size_t i = 0; i < c.samples.size(); ++i) {
    c.samples[i] = static_cast<float>((static_cast<double>(i % 1000) - 500.0) / 1000.0);
  }
  return c;
}

void put16(std::ofstream& f, std::uint16_t v) { f.put(char(v & 0xff)).put(char(v >> 8)); }
void put32(std::ofstream& f, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) f.put(char((v >> (8 * i)) & 0xff));
}

// Minimal RIFF writer independent of write_wav.
void write_raw_wav(const fs::path& p, std::uint16_t format, std::uint16_t channels, std::uint32_t rate,
                   std::uint16_t bits, const std::vector<unsigned char>& payload) {
  std::ofstream f(p, std::ios::binary);
  f.write("RIFF", 4);
  put32(f, 36 + static_cast<std::uint32_t>(payload.size()));
  f.write("WAVEfmt ", 8);
  put32(f, 16);
  put16(f, format);
  put16(f, channels);
  put32(f, rate);
  put32(f, rate * channels * bits / 8);
  put16(f, static_cast<std::uint16_t>(channels * bits / 8));
  put16(f, bits);
  f.write("data", 4);
  put32(f, static_cast<std::uint32_t>(payload.size()));
  f.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
}

TEST(LoadWav, ThirtySecondPcm16Mono) {
  const auto dir = temp_dir("pcm16");
  AudioClip c = ramp_clip(30.0);
  write_wav(dir / "a.wav", c);
  const AudioClip back = load_wav(dir / "a.wav");
  EXPECT_EQ(back.samples.size(), 661500u);
  EXPECT_EQ(back.sample_rate, 22050);
  for (std::size_t i = 0; i < 2000; ++i) EXPECT_NEAR(back.samples[i], c.samples[i], 1.0 / 32767);
}

TEST(LoadWav, AllZeroFile) {
  const auto dir = temp_dir("zero");
  AudioClip c;
  c.samples.assign(22050, 0.0f);
  write_wav(dir / "z.wav", c);
  const AudioClip back = load_wav(dir / "z.wav");
  ASSERT_EQ(back.samples.size(), 22050u);
  for (float v : back.samples) EXPECT_EQ(v, 0.0f);
}

TEST(LoadWav, Float32RoundTripIsExact) {
  const auto dir = temp_dir("f32");
  AudioClip c = ramp_clip(1.0);
  write_wav(dir / "f.wav", c, WavEncoding::float32);
  EXPECT_EQ(load_wav(dir / "f.wav").samples, c.samples);
}

TEST(LoadWav, StereoIsAveraged) {
  const auto dir = temp_dir("stereo");
  std::vector<unsigned char> payload;
  const std::int16_t pairs[][2] = {{1000, 3000}, {-2000, 0}, {32767, 32767}};
  for (const auto& pr : pairs) {
    for (std::int16_t s : pr) {
      payload.push_back(static_cast<unsigned char>(s & 0xff));
      payload.push_back(static_cast<unsigned char>((s >> 8) & 0xff));
    }
  }
  write_raw_wav(dir / "s.wav", 1, 2, 22050, 16, payload);
  const AudioClip c = load_wav(dir / "s.wav");
  ASSERT_EQ(c.samples.size(), 3u);
  EXPECT_NEAR(c.samples[0], 2000.0 / 32768.0, 1e-4);
  EXPECT_NEAR(c.samples[1], -1000.0 / 32768.0, 1e-4);
  EXPECT_NEAR(c.samples[2], 32767.0 / 32768.0, 1e-4);
}

TEST(LoadWav, MuLawIsRejected) {
  const auto dir = temp_dir("mulaw");
  write_raw_wav(dir / "m.wav", 7, 1, 22050, 8, std::vector<unsigned char>(100, 0xff));
  EXPECT_THROW(load_wav(dir / "m.wav"), DataError);
}

TEST(LoadWav, OffRateRejectedUnlessAllowed) {
  const auto dir = temp_dir("rate");
  AudioClip c = ramp_clip(0.5, 16000);
  write_wav(dir / "r.wav", c);
  EXPECT_THROW(load_wav(dir / "r.wav"), SampleRateError);
  const AudioClip ok = load_wav(dir / "r.wav", WavOptions{.allow_any_rate = true});
  EXPECT_EQ(ok.sample_rate, 16000);
}

TEST(LoadWav, MissingAndGarbageFiles) {
  const auto dir = temp_dir("garbage");
  EXPECT_THROW(load_wav(dir / "absent.wav"), DataError);
  std::ofstream(dir / "g.wav") << "this is not audio";
  EXPECT_THROW(load_wav(dir / "g.wav"), DataError);
}

std::vector<double> starts_s(const std::vector<Segment>& segs) {
  std::vector<double> out;
  for (const auto& s : segs) out.push_back(s.start_s);
  return out;
}

TEST(SegmentSnippet, ThirtySecondsGivesEightWithFlushTail) {
  const auto segs = segment_snippet(ramp_clip(30.0));
  ASSERT_EQ(segs.size(), 8u);
  const std::vector<double> expect{0, 4, 8, 12, 16, 20, 24, 26};
  const auto got = starts_s(segs);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(got[i], expect[i], 1.0 / kSampleRate);
  for (const auto& s : segs) {
    EXPECT_NEAR(s.end_s - s.start_s, 4.0, 1.0 / kSampleRate);
    EXPECT_EQ(s.samples.size(), 88200u);
  }
}

TEST(SegmentSnippet, SixteenSecondsHasNoOverlap) {
  const auto segs = segment_snippet(ramp_clip(16.0));
  ASSERT_EQ(segs.size(), 4u);
  const auto got = starts_s(segs);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(got[i], 4.0 * static_cast<double>(i), 1e-9);
  for (std::size_t i = 1; i < segs.size(); ++i) {
    EXPECT_EQ(segs[i].start_sample, segs[i - 1].start_sample + segs[i - 1].samples.size());
  }
}

TEST(SegmentSnippet, TooShortThrows) { EXPECT_THROW(segment_snippet(ramp_clip(3.0)), DataError); }

TEST(SegmentSnippet, SegmentsAreContiguousSlices) {
  const AudioClip c = ramp_clip(30.0);
  for (const auto& s : segment_snippet(c)) {
    ASSERT_LE(s.start_sample + s.samples.size(), c.samples.size());
    EXPECT_TRUE(std::equal(s.samples.begin(), s.samples.end(), c.samples.begin() + static_cast<long>(s.start_sample)));
  }
}

TEST(SegmentSnippet, NonFinalSegmentsReassembleThePrefix) {
  for (double dur : {13.0, 22.5, 30.0}) {
    AudioClip c = ramp_clip(dur);
    Rng rng(3);
    for (auto& v : c.samples) v = static_cast<float>(rng.uniform(-1, 1));
    const auto segs = segment_snippet(c);
    const std::size_t full = static_cast<std::size_t>(std::floor(dur / 4.0));
    std::vector<float> joined;
    for (std::size_t i = 0; i < full; ++i) joined.insert(joined.end(), segs[i].samples.begin(), segs[i].samples.end());
    ASSERT_EQ(joined.size(), full * 88200);
    EXPECT_TRUE(std::equal(joined.begin(), joined.end(), c.samples.begin()));
  }
}

TEST(FrameSegment, FourSecondsGives31Frames) {
  const auto segs = segment_snippet(ramp_clip(4.0));
  const FrameSet fs = frame_segment(segs[0]);
  EXPECT_EQ(fs.count(), 31);
  EXPECT_EQ(fs.frame_len, 5512);
  EXPECT_EQ(fs.hop, 2756);
}

TEST(FrameSegment, QuarterSecondGivesOneFrame) {
  Segment s;
  s.samples.assign(5512, 0.1f);
  EXPECT_EQ(frame_segment(s).count(), 1);
  s.samples.resize(5511);
  EXPECT_THROW(frame_segment(s), DataError);
}

TEST(FrameSegment, WholeThirtySecondSnippetGives239) {
  // floor((30000 - 250) / 125) + 1
  EXPECT_EQ(frame_count(661500, kSampleRate), (30000 - 250) / 125 + 1);
  EXPECT_EQ(frame_count(661500, kSampleRate), 239);
}

TEST(FrameSegment, ConsecutiveFramesShareHalf) {
  Segment s;
  s.samples.resize(88200);
  for (std::size_t i = 0; i < s.samples.size(); ++i) s.samples[i] = static_cast<float>(i) * 1e-5f;
  const FrameSet fs = frame_segment(s);
  for (int t = 0; t + 1 < fs.count(); ++t) {
    const auto& a = fs.frames[static_cast<std::size_t>(t)];
    const auto& b = fs.frames[static_cast<std::size_t>(t + 1)];
    EXPECT_TRUE(std::equal(a.begin() + 2756, a.end(), b.begin()));
    EXPECT_EQ(a.size() - 2756, 2756u);
  }
}

TEST(SynthScene, Deterministic) {
  const SceneSpec spec = default_scene_spec(3, 8);
  const AudioClip a = synth_scene(spec, 30.0, 42);
  const AudioClip b = synth_scene(spec, 30.0, 42);
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_NE(a.samples, synth_scene(spec, 30.0, 43).samples);
  for (float v : a.samples) {
    ASSERT_TRUE(std::isfinite(v));
    ASSERT_LE(std::abs(v), 1.0f);
  }
}

TEST(SynthScene, ZeroEventRateIsPureNoise) {
  SceneSpec spec;
  spec.noise_color = 1.0;
  spec.event_rate = 0.0;
  const AudioClip c = synth_scene(spec, 4.0, 1);
  double sq = 0.0;
  float peak = 0.0f;
  for (float v : c.samples) {
    sq += double(v) * v;
    peak = std::max(peak, std::abs(v));
  }
  // The floor RMS is the configured level times a per-clip jitter in
  // [0.7, 1.4]; with no bursts the peak stays within Gaussian range.
  const double rms = std::sqrt(sq / static_cast<double>(c.samples.size()));
  EXPECT_GE(rms, 0.7 * spec.noise_level - 1e-4);
  EXPECT_LE(rms, 1.4 * spec.noise_level + 1e-4);
  EXPECT_LT(peak, 6.0 * rms);
}

std::vector<float> mean_gammatone(const AudioClip& clip, const FeatureExtractor& fx) {
  const SnippetFeatures f = extract_snippet_features(clip, fx);
  const FeatureMatrix& m = f.channels[0];
  std::vector<float> mean(static_cast<std::size_t>(m.cols), 0.0f);
  for (int r = 0; r < m.rows; ++r) {
    for (int c = 0; c < m.cols; ++c) mean[static_cast<std::size_t>(c)] += m.row(r)[static_cast<std::size_t>(c)] / m.rows;
  }
  return mean;
}

TEST(SynthScene, DisjointEventBandsAreLinearlySeparable) {
  SceneSpec a, b;
  a.category = 0;
  b.category = 1;
  a.event_rate = b.event_rate = 2.0;
  a.noise_color = b.noise_color = 1.0;
  a.event_band_lo = 300;
  a.event_band_hi = 600;
  b.event_band_lo = 3000;
  b.event_band_hi = 6000;
  const FeatureExtractor fx;
  const int per = 100;
  Mat<float> train(per, 64), test(per, 64);
  std::vector<int> ytrain, ytest;
  int ri = 0, ti = 0;
  for (int i = 0; i < per; ++i) {
    for (int c = 0; c < 2; ++c) {
      const auto v = mean_gammatone(synth_scene(c == 0 ? a : b, 4.0, derive_seed(11, "clip", std::uint64_t(2 * i + c))), fx);
      auto& dst = (i % 2 == 0) ? train : test;
      auto& row = (i % 2 == 0) ? ri : ti;
      for (int k = 0; k < 64; ++k) dst(row, k) = v[static_cast<std::size_t>(k)];
      ++row;
      ((i % 2 == 0) ? ytrain : ytest).push_back(c);
    }
  }
  const LinearSvm svm = train_linear_svm(train, ytrain, 2, SvmConfig{.seed = 3});
  const Mat<double> s = svm.scores(test);
  int correct = 0;
  for (int r = 0; r < s.rows(); ++r) {
    const std::vector<double> row(s.row(r).data(), s.row(r).data() + s.cols());
    correct += predict(row) == ytest[static_cast<std::size_t>(r)];
  }
  EXPECT_GT(100.0 * correct / s.rows(), 90.0);
}

}  // namespace
}  // namespace asc
