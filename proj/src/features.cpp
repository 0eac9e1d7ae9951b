#include "asc/features.h"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "asc/binio.h"
#include "asc/error.h"
#include "asc/random.h"
#include "fftw_lock.h"

namespace asc {
namespace {

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

double erb_rate(double f) { return 21.4 * std::log10(1.0 + 0.00437 * f); }
double erb_rate_to_hz(double e) { return (std::pow(10.0, e / 21.4) - 1.0) / 0.00437; }
double erb_width(double f) { return 24.7 * (4.37 * f / 1000.0 + 1.0); }

/// Triangle over [lo, hi] peaking at center; weights normalized to unit sum.
SpectralFilter triangle(double lo, double center, double hi, int sample_rate) {
  SpectralFilter filt;
  filt.center_hz = center;
  std::vector<double> w(kSpectrumBins, 0.0);
  int first = -1, last = -1;
  for (int k = 0; k < kSpectrumBins; ++k) {
    const double f = bin_frequency(k, sample_rate);
    double v = 0.0;
    if (f > lo && f <= center) v = (f - lo) / (center - lo);
    else if (f > center && f < hi) v = (hi - f) / (hi - center);
    if (v > 0.0) {
      w[static_cast<std::size_t>(k)] = v;
      if (first < 0) first = k;
      last = k;
    }
  }
  if (first < 0) {
    // Narrower than one bin: take the bin nearest the center.
    const int k = std::clamp(static_cast<int>(std::lround(center * kSpectrumResolution / sample_rate)),
                             0, kSpectrumBins - 1);
    first = last = k;
    w[static_cast<std::size_t>(k)] = 1.0;
  }
  filt.first_bin = first;
  filt.weights.assign(w.begin() + first, w.begin() + last + 1);
  double sum = 0.0;
  for (double v : filt.weights) sum += v;
  for (double& v : filt.weights) v /= sum;
  return filt;
}

std::vector<SpectralFilter> make_gammatone_bank(const FeatureParams& p) {
  std::vector<SpectralFilter> bank;
  for (double fc : erb_space(p.gammatone_fmin, p.gammatone_fmax, p.gammatone_bands)) {
    const double b = 1.019 * erb_width(fc);
    std::vector<double> w(kSpectrumBins);
    int first = -1, last = -1;
    for (int k = 0; k < kSpectrumBins; ++k) {
      const double x = (bin_frequency(k, p.sample_rate) - fc) / b;
      // Power response of a 4th-order gammatone filter.
      const double v = std::pow(1.0 + x * x, -4.0);
      w[static_cast<std::size_t>(k)] = v;
      if (v > 1e-8) {
        if (first < 0) first = k;
        last = k;
      }
    }
    SpectralFilter filt;
    filt.center_hz = fc;
    filt.first_bin = first;
    filt.weights.assign(w.begin() + first, w.begin() + last + 1);
    bank.push_back(std::move(filt));
  }
  return bank;
}

std::vector<SpectralFilter> make_mel_bank(const FeatureParams& p) {
  const int n = p.mel_filters;
  const double mel_hi = hz_to_mel(p.sample_rate / 2.0);
  std::vector<double> edges(static_cast<std::size_t>(n + 2));
  for (int i = 0; i < n + 2; ++i) edges[static_cast<std::size_t>(i)] = mel_to_hz(mel_hi * i / (n + 1));
  std::vector<SpectralFilter> bank;
  for (int i = 0; i < n; ++i) {
    bank.push_back(triangle(edges[i], edges[i + 1], edges[i + 2], p.sample_rate));
  }
  return bank;
}

std::vector<SpectralFilter> make_logfb_bank(const FeatureParams& p) {
  const int n = p.logfb_bands;
  const double ratio = std::pow(p.logfb_fmax / p.logfb_fmin, 1.0 / (n - 1));
  std::vector<SpectralFilter> bank;
  for (int i = 0; i < n; ++i) {
    const double center = p.logfb_fmin * std::pow(ratio, i);
    bank.push_back(triangle(center / ratio, center, center * ratio, p.sample_rate));
  }
  return bank;
}

void check_spectrum(std::span<const double> spectrum) {
  if (spectrum.size() != static_cast<std::size_t>(kSpectrumBins)) {
    throw DataError("spectrum must have " + std::to_string(kSpectrumBins) + " bins");
  }
}

/// Reusable FFTW plan; one per thread.
class SpectrumPlan {
 public:
  SpectrumPlan() : in_(kTransformSize), out_(kTransformSize / 2 + 1) {
    std::lock_guard lock(detail::fftw_planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(kTransformSize, in_.data(),
                                 reinterpret_cast<fftw_complex*>(out_.data()), FFTW_ESTIMATE);
  }
  ~SpectrumPlan() {
    std::lock_guard lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(plan_);
  }
  SpectrumPlan(const SpectrumPlan&) = delete;
  SpectrumPlan& operator=(const SpectrumPlan&) = delete;

  std::vector<double>& input() { return in_; }
  const std::vector<std::complex<double>>& run() {
    fftw_execute(plan_);
    return out_;
  }

 private:
  std::vector<double> in_;
  std::vector<std::complex<double>> out_;
  fftw_plan plan_;
};

}  // namespace

const char* to_string(FeatureKind k) {
  switch (k) {
    case FeatureKind::gammatone: return "gammatone";
    case FeatureKind::mfcc: return "mfcc";
    case FeatureKind::logfb: return "logfb";
  }
  return "?";
}

const char* to_string(NoiseVariant v) {
  return v == NoiseVariant::with_bg ? "with_bg" : "fg_only";
}

int FeatureParams::dim(FeatureKind k) const {
  switch (k) {
    case FeatureKind::gammatone: return gammatone_bands;
    case FeatureKind::mfcc: return mfcc_coeffs;
    case FeatureKind::logfb: return logfb_bands;
  }
  return 0;
}

nlohmann::json FeatureParams::to_json() const {
  return {{"sample_rate", sample_rate},
          {"frame_len", frame_length_samples(sample_rate)},
          {"hop", hop_length_samples(sample_rate)},
          {"transform_size", kTransformSize},
          {"spectrum_bins", kSpectrumBins},
          {"window", "hann"},
          {"gammatone_bands", gammatone_bands},
          {"gammatone_fmin", gammatone_fmin},
          {"gammatone_fmax", gammatone_fmax},
          {"gammatone_order", 4},
          {"mel_filters", mel_filters},
          {"mfcc_coeffs", mfcc_coeffs},
          {"mfcc_log_floor", mfcc_log_floor},
          {"logfb_bands", logfb_bands},
          {"logfb_fmin", logfb_fmin},
          {"logfb_fmax", logfb_fmax},
          {"background_percentile", background_percentile}};
}

FeatureParams FeatureParams::from_json(const nlohmann::json& j) {
  FeatureParams p;
  p.sample_rate = j.value("sample_rate", p.sample_rate);
  p.gammatone_bands = j.value("gammatone_bands", p.gammatone_bands);
  p.gammatone_fmin = j.value("gammatone_fmin", p.gammatone_fmin);
  p.gammatone_fmax = j.value("gammatone_fmax", p.gammatone_fmax);
  p.mel_filters = j.value("mel_filters", p.mel_filters);
  p.mfcc_coeffs = j.value("mfcc_coeffs", p.mfcc_coeffs);
  p.mfcc_log_floor = j.value("mfcc_log_floor", p.mfcc_log_floor);
  p.logfb_bands = j.value("logfb_bands", p.logfb_bands);
  p.logfb_fmin = j.value("logfb_fmin", p.logfb_fmin);
  p.logfb_fmax = j.value("logfb_fmax", p.logfb_fmax);
  p.background_percentile = j.value("background_percentile", p.background_percentile);
  return p;
}

std::string FeatureParams::digest() const {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a(to_json().dump());
  return os.str();
}

double bin_frequency(int k, int sample_rate) {
  return static_cast<double>(k) * sample_rate / kSpectrumResolution;
}

std::vector<double> power_spectrum(std::span<const float> frame, int expected_len) {
  if (static_cast<int>(frame.size()) != expected_len || frame.size() > kTransformSize) {
    throw DataError("power_spectrum: frame has " + std::to_string(frame.size()) +
                    " samples, expected " + std::to_string(expected_len));
  }
  thread_local SpectrumPlan plan;
  auto& in = plan.input();
  std::fill(in.begin(), in.end(), 0.0);
  const std::size_t n = frame.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                          static_cast<double>(n - 1));
    in[i] = w * frame[i];
  }
  const auto& bins = plan.run();

  // One-sided power normalized so the fine bins sum to the windowed energy.
  constexpr int half = kTransformSize / 2;
  auto fine = [&](int k) {
    const double p = std::norm(bins[static_cast<std::size_t>(k)]) / kTransformSize;
    return (k == 0 || k == half) ? p : 2.0 * p;
  };
  std::vector<double> out(kSpectrumBins);
  for (int k = 0; k < kSpectrumBins - 1; ++k) out[static_cast<std::size_t>(k)] = fine(2 * k) + fine(2 * k + 1);
  out[kSpectrumBins - 1] = fine(half);
  return out;
}

double SpectralFilter::apply(std::span<const double> spectrum) const {
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i] * spectrum[static_cast<std::size_t>(first_bin) + i];
  }
  return acc;
}

std::vector<double> erb_space(double fmin, double fmax, int n) {
  std::vector<double> out(static_cast<std::size_t>(n));
  const double lo = erb_rate(fmin), hi = erb_rate(fmax);
  for (int i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = erb_rate_to_hz(n == 1 ? lo : lo + (hi - lo) * i / (n - 1));
  }
  return out;
}

FeatureExtractor::FeatureExtractor(FeatureParams params)
    : params_(params),
      gammatone_(make_gammatone_bank(params_)),
      mel_(make_mel_bank(params_)),
      logfb_(make_logfb_bank(params_)) {
  if (params_.mfcc_coeffs > params_.mel_filters) {
    throw ConfigError("mfcc_coeffs cannot exceed mel_filters");
  }
}

LowLevelVector FeatureExtractor::gammatone_coeffs(std::span<const double> spectrum) const {
  check_spectrum(spectrum);
  LowLevelVector v{{}, FeatureKind::gammatone, NoiseVariant::with_bg};
  v.values.reserve(gammatone_.size());
  for (const auto& f : gammatone_) v.values.push_back(std::log1p(f.apply(spectrum)));
  return v;
}

LowLevelVector FeatureExtractor::mfcc(std::span<const double> spectrum) const {
  check_spectrum(spectrum);
  const int n = static_cast<int>(mel_.size());
  std::vector<double> log_e(static_cast<std::size_t>(n));
  for (int m = 0; m < n; ++m) {
    log_e[static_cast<std::size_t>(m)] = std::log(std::max(mel_[static_cast<std::size_t>(m)].apply(spectrum),
                                                           params_.mfcc_log_floor));
  }
  // Orthonormal DCT-II.
  LowLevelVector v{{}, FeatureKind::mfcc, NoiseVariant::with_bg};
  v.values.resize(static_cast<std::size_t>(params_.mfcc_coeffs));
  for (int k = 0; k < params_.mfcc_coeffs; ++k) {
    double acc = 0.0;
    for (int m = 0; m < n; ++m) {
      acc += log_e[static_cast<std::size_t>(m)] * std::cos(std::numbers::pi * k * (m + 0.5) / n);
    }
    v.values[static_cast<std::size_t>(k)] = acc * (k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n));
  }
  return v;
}

LowLevelVector FeatureExtractor::log_freq_fb(std::span<const double> spectrum) const {
  check_spectrum(spectrum);
  LowLevelVector v{{}, FeatureKind::logfb, NoiseVariant::with_bg};
  v.values.reserve(logfb_.size());
  for (const auto& f : logfb_) v.values.push_back(std::log1p(f.apply(spectrum)));
  return v;
}

LowLevelVector FeatureExtractor::compute(FeatureKind kind, std::span<const double> spectrum) const {
  switch (kind) {
    case FeatureKind::gammatone: return gammatone_coeffs(spectrum);
    case FeatureKind::mfcc: return mfcc(spectrum);
    case FeatureKind::logfb: return log_freq_fb(spectrum);
  }
  throw ConfigError("unknown feature kind");
}

std::vector<std::vector<double>> subtract_background(
    const std::vector<std::vector<double>>& spectra, double percentile) {
  if (spectra.size() < 8) {
    throw DataError("background estimation needs at least 8 frames, got " +
                    std::to_string(spectra.size()));
  }
  const std::size_t n_frames = spectra.size();
  const std::size_t n_bins = spectra.front().size();
  for (const auto& s : spectra) {
    if (s.size() != n_bins) throw DataError("spectra differ in length");
  }

  std::vector<double> floor(n_bins);
  std::vector<double> column(n_frames);
  const double pos = percentile * static_cast<double>(n_frames - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(lo);
  for (std::size_t b = 0; b < n_bins; ++b) {
    for (std::size_t t = 0; t < n_frames; ++t) column[t] = spectra[t][b];
    std::nth_element(column.begin(), column.begin() + static_cast<std::ptrdiff_t>(lo), column.end());
    const double v_lo = column[lo];
    double v_hi = v_lo;
    if (frac > 0.0) {
      v_hi = *std::min_element(column.begin() + static_cast<std::ptrdiff_t>(lo) + 1, column.end());
    }
    floor[b] = v_lo + frac * (v_hi - v_lo);
  }

  std::vector<std::vector<double>> out(n_frames, std::vector<double>(n_bins));
  for (std::size_t t = 0; t < n_frames; ++t) {
    for (std::size_t b = 0; b < n_bins; ++b) out[t][b] = std::max(spectra[t][b] - floor[b], 0.0);
  }
  return out;
}

SnippetFeatures extract_snippet_features(const AudioClip& clip, const FeatureExtractor& fx) {
  const FeatureParams& p = fx.params();
  if (clip.sample_rate != p.sample_rate) {
    throw DataError(clip.source_id + ": sample rate does not match feature parameters");
  }
  const int frame_len = frame_length_samples(clip.sample_rate);
  const int hop = hop_length_samples(clip.sample_rate);
  const auto starts = segment_starts(clip.samples.size(), clip.sample_rate);
  const auto seg_len = static_cast<std::size_t>(std::llround(kSegmentSeconds * clip.sample_rate));
  const int per_seg = frame_count(seg_len, clip.sample_rate);

  SnippetFeatures out;
  out.snippet_id = clip.source_id;
  out.label = clip.label.value_or(-1);
  out.n_segments = static_cast<int>(starts.size());
  out.frames_per_segment = per_seg;
  out.duration_s = clip.duration_s();

  std::vector<std::vector<double>> spectra;
  spectra.reserve(starts.size() * static_cast<std::size_t>(per_seg));
  for (std::size_t s : starts) {
    for (int t = 0; t < per_seg; ++t) {
      const std::size_t off = s + static_cast<std::size_t>(t) * static_cast<std::size_t>(hop);
      spectra.push_back(power_spectrum(
          std::span<const float>(clip.samples.data() + off, static_cast<std::size_t>(frame_len)),
          frame_len));
    }
  }
  const auto foreground = subtract_background(spectra, p.background_percentile);

  const int total = out.total_frames();
  for (int c = 0; c < kChannels; ++c) {
    out.channels[static_cast<std::size_t>(c)] = FeatureMatrix(total, p.dim(ChannelId{c}.kind()));
  }
  for (int t = 0; t < total; ++t) {
    for (int c = 0; c < kChannels; ++c) {
      const ChannelId ch{c};
      const auto& spec = ch.variant() == NoiseVariant::with_bg ? spectra[static_cast<std::size_t>(t)]
                                                               : foreground[static_cast<std::size_t>(t)];
      const auto v = fx.compute(ch.kind(), spec);
      auto row = out.channels[static_cast<std::size_t>(c)].row(t);
      for (std::size_t i = 0; i < v.values.size(); ++i) row[i] = static_cast<float>(v.values[i]);
    }
  }
  return out;
}

void save_feature_cache(const std::filesystem::path& dir, const SnippetFeatures& feats,
                        const FeatureParams& params) {
  std::filesystem::create_directories(dir);
  nlohmann::json channels = nlohmann::json::array();
  int row_width = 0;
  for (int c = 0; c < kChannels; ++c) {
    const ChannelId ch{c};
    const int dim = feats.channels[static_cast<std::size_t>(c)].cols;
    channels.push_back({{"index", c},
                        {"kind", to_string(ch.kind())},
                        {"variant", to_string(ch.variant())},
                        {"dim", dim},
                        {"offset", row_width}});
    row_width += dim;
  }
  const nlohmann::json sidecar = {{"version", 1},
                                  {"snippet_id", feats.snippet_id},
                                  {"label", feats.label},
                                  {"n_segments", feats.n_segments},
                                  {"frames_per_segment", feats.frames_per_segment},
                                  {"duration_s", feats.duration_s},
                                  {"shape", {feats.total_frames(), row_width}},
                                  {"dtype", "float32-le"},
                                  {"channels", channels},
                                  {"params", params.to_json()},
                                  {"param_digest", params.digest()}};

  const auto bin_path = dir / (feats.snippet_id + ".f32");
  {
    std::ofstream out(bin_path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + bin_path.string());
    std::vector<float> row(static_cast<std::size_t>(row_width));
    for (int t = 0; t < feats.total_frames(); ++t) {
      std::size_t off = 0;
      for (const auto& m : feats.channels) {
        const auto r = m.row(t);
        std::copy(r.begin(), r.end(), row.begin() + static_cast<std::ptrdiff_t>(off));
        off += r.size();
      }
      binio::write_f32(out, row);
    }
    if (!out) throw DataError("write failed for " + bin_path.string());
  }
  // Sidecar last: its presence marks a complete entry.
  std::ofstream js(dir / (feats.snippet_id + ".json"), std::ios::trunc);
  js << sidecar.dump(2) << '\n';
}

std::optional<SnippetFeatures> load_feature_cache(const std::filesystem::path& dir,
                                                  const std::string& snippet_id,
                                                  const FeatureParams& params) {
  const auto json_path = dir / (snippet_id + ".json");
  const auto bin_path = dir / (snippet_id + ".f32");
  if (!std::filesystem::exists(json_path) || !std::filesystem::exists(bin_path)) return std::nullopt;

  nlohmann::json sidecar;
  try {
    std::ifstream js(json_path);
    sidecar = nlohmann::json::parse(js);
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
  if (sidecar.value("param_digest", std::string{}) != params.digest()) return std::nullopt;

  SnippetFeatures feats;
  feats.snippet_id = snippet_id;
  int row_width = 0;
  try {
    feats.label = sidecar.at("label").get<int>();
    feats.n_segments = sidecar.at("n_segments").get<int>();
    feats.frames_per_segment = sidecar.at("frames_per_segment").get<int>();
    feats.duration_s = sidecar.value("duration_s", 0.0);
    for (int c = 0; c < kChannels; ++c) {
      const int dim = sidecar.at("channels").at(static_cast<std::size_t>(c)).at("dim").get<int>();
      if (dim <= 0) return std::nullopt;
      feats.channels[static_cast<std::size_t>(c)] = FeatureMatrix(feats.total_frames(), dim);
      row_width += dim;
    }
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
  if (feats.n_segments <= 0 || feats.frames_per_segment <= 0) return std::nullopt;
  const int total = feats.total_frames();
  if (std::filesystem::file_size(bin_path) !=
      static_cast<std::uintmax_t>(total) * static_cast<std::uintmax_t>(row_width) * sizeof(float)) {
    return std::nullopt;
  }
  std::ifstream in(bin_path, std::ios::binary);
  std::vector<float> row(static_cast<std::size_t>(row_width));
  for (int t = 0; t < total; ++t) {
    binio::read_f32(in, row);
    std::size_t off = 0;
    for (auto& m : feats.channels) {
      auto r = m.row(t);
      std::copy(row.begin() + static_cast<std::ptrdiff_t>(off),
                row.begin() + static_cast<std::ptrdiff_t>(off + r.size()), r.begin());
      off += r.size();
    }
  }
  return feats;
}

}  // namespace asc
