#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace asc {

inline constexpr int kSampleRate = 22050;
inline constexpr double kSegmentSeconds = 4.0;
inline constexpr int kFrameMs = 250;
inline constexpr int kHopMs = 125;

struct AudioClip {
  std::vector<float> samples;
  int sample_rate = kSampleRate;
  std::optional<int> label;
  std::string source_id;

  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate; }
};

/// A contiguous slice of a parent snippet.
struct Segment {
  std::vector<float> samples;
  int sample_rate = kSampleRate;
  double start_s = 0.0;
  double end_s = 0.0;
  std::string parent_id;
  std::size_t start_sample = 0;
};

struct FrameSet {
  std::vector<std::vector<float>> frames;
  int frame_len = 0;  // samples
  int hop = 0;        // samples

  int count() const { return static_cast<int>(frames.size()); }
};

struct WavOptions {
  bool allow_any_rate = false;
};

/// Reads PCM16 or IEEE float32 RIFF/WAVE (mono or stereo). Stereo is
/// averaged to mono. Throws DataError for unreadable or unsupported files and
/// SampleRateError when the rate is not 22050 Hz unless allowed.
AudioClip load_wav(const std::filesystem::path& path, const WavOptions& opts = {});

enum class WavEncoding { pcm16, float32 };

void write_wav(const std::filesystem::path& path, const AudioClip& clip,
               WavEncoding encoding = WavEncoding::pcm16);

/// Non-overlapping segments from t=0. A remainder shorter than seg_s yields one
/// final segment flush with the clip end, overlapping its predecessor.
std::vector<Segment> segment_snippet(const AudioClip& clip, double seg_s = kSegmentSeconds);

/// Segment start offsets in samples, without copying audio.
std::vector<std::size_t> segment_starts(std::size_t n_samples, int sample_rate,
                                        double seg_s = kSegmentSeconds);

int frame_length_samples(int sample_rate);
int hop_length_samples(int sample_rate);
int frame_count(std::size_t n_samples, int sample_rate);

/// 250 ms windows with 50% overlap; trailing partial window dropped.
FrameSet frame_segment(const Segment& seg);

// ---------------------------------------------------------------------------
// Synthetic scenes

/// Recipe for one synthetic scene category: a colored noise floor (power
/// spectral density proportional to f^-noise_color) plus Poisson-timed
/// tone bursts drawn from event_band.
struct SceneSpec {
  int category = 0;
  double noise_color = 0.0;
  double event_rate = 0.0;  // events per second
  double event_band_lo = 500.0;
  double event_band_hi = 1000.0;
  double noise_level = 0.05;  // RMS of the noise floor
  double event_level = 0.15;  // peak amplitude of a burst
};

/// Deterministic catalogue used by the synth command: neighbouring
/// categories share a noise color and have adjacent event bands.
SceneSpec default_scene_spec(int category, int n_categories);

AudioClip synth_scene(const SceneSpec& spec, double duration_s, std::uint64_t seed);

}  // namespace asc
