#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <vector>

namespace asc {

template <typename Real>
using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Real>
using RowVec = Eigen::Matrix<Real, 1, Eigen::Dynamic>;

/// Storage aligned like Eigen's own allocations, so vectorized kernels over
/// mapped buffers split work the same way on every run.
template <typename Real>
using AlignedVector = std::vector<Real, Eigen::aligned_allocator<Real>>;

/// Multi-channel image with shape features x frames x channels. Storage is
/// channel-major, then frame, then feature, so a run of consecutive frames on
/// one channel is one contiguous block.
template <typename Real>
struct Image3 {
  int features = 0;
  int frames = 0;
  int channels = 0;
  AlignedVector<Real> values;

  Image3() = default;
  Image3(int f, int t, int d)
      : features(f), frames(t), channels(d), values(static_cast<std::size_t>(f) * t * d, Real(0)) {}

  std::size_t index(int f, int t, int d) const {
    return (static_cast<std::size_t>(d) * frames + t) * features + f;
  }
  Real& at(int f, int t, int d) { return values[index(f, t, d)]; }
  Real at(int f, int t, int d) const { return values[index(f, t, d)]; }

  const Real* channel_data(int d) const {
    return values.data() + static_cast<std::size_t>(d) * frames * features;
  }

  template <typename Other>
  Image3<Other> cast() const {
    Image3<Other> out;
    out.features = features;
    out.frames = frames;
    out.channels = channels;
    out.values.assign(values.begin(), values.end());
    return out;
  }
};

/// X in [0,1]^{F x T x D}.
using LteTensor = Image3<float>;

}  // namespace asc
