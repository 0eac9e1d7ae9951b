#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "asc/audio.h"

namespace asc {

inline constexpr int kTransformSize = 8192;
inline constexpr int kSpectrumResolution = 4096;
inline constexpr int kSpectrumBins = kSpectrumResolution / 2 + 1;  // 2049
inline constexpr int kChannels = 6;

enum class FeatureKind { gammatone, mfcc, logfb };
enum class NoiseVariant { with_bg, fg_only };

const char* to_string(FeatureKind k);
const char* to_string(NoiseVariant v);

/// Channel index 0..5 in the fixed order (gammatone, mfcc, logfb) x
/// (with_bg, fg_only).
struct ChannelId {
  int index = 0;

  static constexpr ChannelId of(FeatureKind kind, NoiseVariant variant) {
    return {2 * static_cast<int>(kind) + static_cast<int>(variant)};
  }
  constexpr FeatureKind kind() const { return static_cast<FeatureKind>(index / 2); }
  constexpr NoiseVariant variant() const { return static_cast<NoiseVariant>(index % 2); }
  friend constexpr bool operator==(ChannelId, ChannelId) = default;
};

struct LowLevelVector {
  std::vector<double> values;
  FeatureKind kind = FeatureKind::gammatone;
  NoiseVariant variant = NoiseVariant::with_bg;
};

struct FeatureParams {
  int sample_rate = kSampleRate;
  int gammatone_bands = 64;
  double gammatone_fmin = 50.0;
  double gammatone_fmax = 11025.0;
  int mel_filters = 40;
  int mfcc_coeffs = 20;
  double mfcc_log_floor = 1e-10;
  int logfb_bands = 40;
  double logfb_fmin = 50.0;
  double logfb_fmax = 11025.0;
  double background_percentile = 0.2;

  int dim(FeatureKind k) const;
  nlohmann::json to_json() const;
  static FeatureParams from_json(const nlohmann::json& j);
  /// Stable digest of every parameter; drives cache invalidation.
  std::string digest() const;
};

/// One-sided power spectrum of a Hann-windowed frame with 2049 bins spaced
/// sample_rate/4096 apart. The frame is transformed at 8192 points and
/// adjacent bin pairs are summed, so the bins sum to the windowed energy.
std::vector<double> power_spectrum(std::span<const float> frame,
                                   int expected_len = frame_length_samples(kSampleRate));

/// Center frequency (Hz) of spectrum bin k.
double bin_frequency(int k, int sample_rate = kSampleRate);

/// Triangular/gammatone filter stored as a dense run of bin weights.
struct SpectralFilter {
  int first_bin = 0;
  std::vector<double> weights;
  double center_hz = 0.0;

  double apply(std::span<const double> spectrum) const;
};

/// Precomputed filterbanks for the three low-level feature kinds.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(FeatureParams params = {});

  const FeatureParams& params() const { return params_; }

  LowLevelVector gammatone_coeffs(std::span<const double> spectrum) const;
  LowLevelVector mfcc(std::span<const double> spectrum) const;
  LowLevelVector log_freq_fb(std::span<const double> spectrum) const;
  LowLevelVector compute(FeatureKind kind, std::span<const double> spectrum) const;

  const std::vector<SpectralFilter>& gammatone_bank() const { return gammatone_; }
  const std::vector<SpectralFilter>& mel_bank() const { return mel_; }
  const std::vector<SpectralFilter>& logfb_bank() const { return logfb_; }

  /// Replaces the Mel bank, e.g. to reorder filters.
  void set_mel_bank(std::vector<SpectralFilter> bank) { mel_ = std::move(bank); }

 private:
  FeatureParams params_;
  std::vector<SpectralFilter> gammatone_;
  std::vector<SpectralFilter> mel_;
  std::vector<SpectralFilter> logfb_;
};

/// ERB-rate spaced gammatone center frequencies (Glasberg & Moore scale).
std::vector<double> erb_space(double fmin, double fmax, int n);

/// Per-bin noise floor (percentile over frames) subtracted and rectified.
std::vector<std::vector<double>> subtract_background(
    const std::vector<std::vector<double>>& spectra, double percentile = 0.2);

/// Row-major float matrix.
struct FeatureMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<float> data;

  FeatureMatrix() = default;
  FeatureMatrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c) {}

  std::span<float> row(int i) { return {data.data() + static_cast<std::size_t>(i) * cols, static_cast<std::size_t>(cols)}; }
  std::span<const float> row(int i) const {
    return {data.data() + static_cast<std::size_t>(i) * cols, static_cast<std::size_t>(cols)};
  }
};

/// Low-level features of every frame of every 4 s segment of one snippet.
/// Rows of each channel matrix run segment-major: row = s * frames_per_segment + t.
struct SnippetFeatures {
  std::string snippet_id;
  int label = -1;
  int n_segments = 0;
  int frames_per_segment = 0;
  double duration_s = 0.0;
  std::array<FeatureMatrix, kChannels> channels;

  int total_frames() const { return n_segments * frames_per_segment; }
};

SnippetFeatures extract_snippet_features(const AudioClip& clip, const FeatureExtractor& fx);

/// Feature cache: <dir>/<id>.f32 holds [T_total x (sum of channel dims)]
/// little-endian float32 rows (channels concatenated in index order) and
/// <dir>/<id>.json is the sidecar with shapes and extraction parameters.
void save_feature_cache(const std::filesystem::path& dir, const SnippetFeatures& feats,
                        const FeatureParams& params);

/// nullopt when the entry is missing or was built with different parameters.
std::optional<SnippetFeatures> load_feature_cache(const std::filesystem::path& dir,
                                                  const std::string& snippet_id,
                                                  const FeatureParams& params);

}  // namespace asc
