#include "asc/audio.h"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <numbers>

#include "asc/error.h"
#include "asc/random.h"
#include "fftw_lock.h"

namespace asc {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

void put_tag(std::vector<unsigned char>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

}  // namespace

AudioClip load_wav(const std::filesystem::path& path, const WavOptions& opts) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw DataError(path.string() + ": not a RIFF/WAVE file");
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;
  bool have_fmt = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t len = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = std::min<std::size_t>(len, bytes.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (avail < 16) throw DataError(path.string() + ": truncated fmt chunk");
      format = read_u16(bytes.data() + body);
      channels = read_u16(bytes.data() + body + 2);
      rate = read_u32(bytes.data() + body + 4);
      bits = read_u16(bytes.data() + body + 14);
      if (format == kFormatExtensible) {
        if (avail < 26) throw DataError(path.string() + ": truncated extensible fmt chunk");
        format = read_u16(bytes.data() + body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_len = avail;
    }
    pos = body + len + (len & 1);
  }

  if (!have_fmt || data == nullptr) throw DataError(path.string() + ": missing fmt or data chunk");
  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool f32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !f32) {
    throw DataError(path.string() + ": unsupported WAV encoding (format " +
                    std::to_string(format) + ", " + std::to_string(bits) + " bits)");
  }
  if (channels != 1 && channels != 2) {
    throw DataError(path.string() + ": unsupported channel count " + std::to_string(channels));
  }
  if (rate == 0) throw DataError(path.string() + ": zero sample rate");
  if (static_cast<int>(rate) != kSampleRate && !opts.allow_any_rate) {
    throw SampleRateError(path.string() + ": sample rate " + std::to_string(rate) +
                          " Hz, expected 22050 (use --allow-any-rate to accept)");
  }

  const std::size_t bytes_per_sample = bits / 8;
  const std::size_t n_frames = data_len / (bytes_per_sample * channels);
  if (n_frames == 0) throw DataError(path.string() + ": no samples");

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.source_id = path.stem().string();
  clip.samples.resize(n_frames);
  for (std::size_t i = 0; i < n_frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char* p = data + (i * channels + c) * bytes_per_sample;
      if (pcm16) {
        acc += static_cast<std::int16_t>(read_u16(p)) / 32768.0;
      } else {
        std::uint32_t raw = read_u32(p);
        float v;
        std::memcpy(&v, &raw, sizeof v);
        if (!std::isfinite(v)) throw DataError(path.string() + ": non-finite sample");
        acc += std::clamp(v, -1.0f, 1.0f);
      }
    }
    clip.samples[i] = static_cast<float>(acc / channels);
  }
  return clip;
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip, WavEncoding encoding) {
  const std::uint16_t bits = encoding == WavEncoding::pcm16 ? 16 : 32;
  const std::uint16_t format = encoding == WavEncoding::pcm16 ? kFormatPcm : kFormatFloat;
  const std::uint32_t data_len = static_cast<std::uint32_t>(clip.samples.size() * bits / 8);

  std::vector<unsigned char> out;
  out.reserve(44 + data_len);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_len);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, format);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * bits / 8);
  put_u16(out, bits / 8);
  put_u16(out, bits);
  put_tag(out, "data");
  put_u32(out, data_len);
  for (float s : clip.samples) {
    const float v = std::clamp(s, -1.0f, 1.0f);
    if (encoding == WavEncoding::pcm16) {
      const auto q = static_cast<std::int16_t>(std::lround(v * 32767.0f));
      put_u16(out, static_cast<std::uint16_t>(q));
    } else {
      std::uint32_t raw;
      std::memcpy(&raw, &v, sizeof raw);
      put_u32(out, raw);
    }
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("write failed for " + path.string());
}

std::vector<std::size_t> segment_starts(std::size_t n_samples, int sample_rate, double seg_s) {
  const auto seg_len = static_cast<std::size_t>(std::llround(seg_s * sample_rate));
  if (seg_len == 0 || n_samples < seg_len) {
    throw DataError("clip shorter than one " + std::to_string(seg_s) + " s segment");
  }
  std::vector<std::size_t> starts;
  std::size_t s = 0;
  for (; s + seg_len <= n_samples; s += seg_len) starts.push_back(s);
  if (starts.back() + seg_len < n_samples) starts.push_back(n_samples - seg_len);
  return starts;
}

std::vector<Segment> segment_snippet(const AudioClip& clip, double seg_s) {
  const auto seg_len = static_cast<std::size_t>(std::llround(seg_s * clip.sample_rate));
  std::vector<Segment> out;
  for (std::size_t start : segment_starts(clip.samples.size(), clip.sample_rate, seg_s)) {
    Segment seg;
    seg.sample_rate = clip.sample_rate;
    seg.parent_id = clip.source_id;
    seg.start_sample = start;
    seg.start_s = static_cast<double>(start) / clip.sample_rate;
    seg.end_s = static_cast<double>(start + seg_len) / clip.sample_rate;
    seg.samples.assign(clip.samples.begin() + static_cast<std::ptrdiff_t>(start),
                       clip.samples.begin() + static_cast<std::ptrdiff_t>(start + seg_len));
    out.push_back(std::move(seg));
  }
  return out;
}

int frame_length_samples(int sample_rate) { return sample_rate * kFrameMs / 1000; }

int hop_length_samples(int sample_rate) { return sample_rate * kHopMs / 1000; }

int frame_count(std::size_t n_samples, int sample_rate) {
  const auto len = static_cast<std::size_t>(frame_length_samples(sample_rate));
  const auto hop = static_cast<std::size_t>(hop_length_samples(sample_rate));
  if (n_samples < len) return 0;
  return static_cast<int>((n_samples - len) / hop + 1);
}

FrameSet frame_segment(const Segment& seg) {
  FrameSet fs;
  fs.frame_len = frame_length_samples(seg.sample_rate);
  fs.hop = hop_length_samples(seg.sample_rate);
  const int n = frame_count(seg.samples.size(), seg.sample_rate);
  if (n == 0) throw DataError("segment shorter than one 250 ms frame");
  fs.frames.reserve(static_cast<std::size_t>(n));
  for (int t = 0; t < n; ++t) {
    auto first = seg.samples.begin() + static_cast<std::ptrdiff_t>(t) * fs.hop;
    fs.frames.emplace_back(first, first + fs.frame_len);
  }
  return fs;
}

SceneSpec default_scene_spec(int category, int n_categories) {
  static constexpr double kColors[] = {0.0, 1.0, 2.0};
  SceneSpec s;
  s.category = category;
  s.noise_color = kColors[(category / 2) % 3];
  const double lo = 300.0, hi = 6000.0;
  const double ratio = std::pow(hi / lo, 1.0 / (n_categories + 0.6));
  s.event_band_lo = lo * std::pow(ratio, category);
  s.event_band_hi = lo * std::pow(ratio, category + 1.6);
  s.event_rate = 0.35 + 0.1 * (category % 3);
  return s;
}

AudioClip synth_scene(const SceneSpec& spec, double duration_s, std::uint64_t seed) {
  const int rate = kSampleRate;
  const auto n = static_cast<std::size_t>(std::llround(duration_s * rate));
  Rng rng(seed);

  // Per-clip jitter so that instances of one category are not identical.
  const double color = spec.noise_color + rng.uniform(-0.2, 0.2);
  const double noise_rms = spec.noise_level * rng.uniform(0.7, 1.4);

  std::vector<double> noise(n);
  for (auto& v : noise) v = rng.normal();
  {
    const std::size_t n_bins = n / 2 + 1;
    std::vector<std::complex<double>> spec_bins(n_bins);
    auto* bins = reinterpret_cast<fftw_complex*>(spec_bins.data());
    fftw_plan fwd, inv;
    {
      std::lock_guard lock(detail::fftw_planner_mutex());
      fwd = fftw_plan_dft_r2c_1d(static_cast<int>(n), noise.data(), bins, FFTW_ESTIMATE);
      inv = fftw_plan_dft_c2r_1d(static_cast<int>(n), bins, noise.data(), FFTW_ESTIMATE);
    }
    fftw_execute(fwd);
    spec_bins[0] = 0.0;
    for (std::size_t k = 1; k < n_bins; ++k) {
      const double f = std::max(20.0, static_cast<double>(k) * rate / static_cast<double>(n));
      spec_bins[k] *= std::pow(f / 1000.0, -color / 2.0);
    }
    fftw_execute(inv);
    std::lock_guard lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(inv);
  }
  double energy = 0.0;
  for (double v : noise) energy += v * v;
  const double scale = energy > 0.0 ? noise_rms / std::sqrt(energy / static_cast<double>(n)) : 0.0;
  for (auto& v : noise) v *= scale;

  if (spec.event_rate > 0.0) {
    double t = rng.exponential(spec.event_rate);
    const double log_lo = std::log(spec.event_band_lo);
    const double log_hi = std::log(spec.event_band_hi);
    while (t < duration_s) {
      const double freq = std::exp(rng.uniform(log_lo, log_hi));
      const double dur = rng.uniform(0.1, 0.4);
      const double amp = spec.event_level * rng.uniform(0.6, 1.0);
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const auto first = static_cast<std::size_t>(t * rate);
      const auto len = static_cast<std::size_t>(dur * rate);
      for (std::size_t i = 0; i < len && first + i < n; ++i) {
        const double u = static_cast<double>(i) / static_cast<double>(len);
        const double env = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * u);
        const double arg = 2.0 * std::numbers::pi * freq * static_cast<double>(i) / rate + phase;
        noise[first + i] += amp * env * (std::sin(arg) + 0.4 * std::sin(2.0 * arg));
      }
      t += rng.exponential(spec.event_rate);
    }
  }

  AudioClip clip;
  clip.sample_rate = rate;
  clip.label = spec.category;
  clip.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    clip.samples[i] = static_cast<float>(std::clamp(noise[i], -1.0, 1.0));
  }
  return clip;
}

}  // namespace asc
