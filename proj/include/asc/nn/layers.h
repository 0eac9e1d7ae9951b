#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>

#include "asc/error.h"
#include "asc/nn/tensor.h"
#include "asc/random.h"

// Differentiable building blocks. Batches are row-major matrices with one
// example per row; dense layers use the row-vector convention y = x W + b.
namespace asc::nn {

enum class Mode { train, eval };

template <typename Real>
using MatRef = Eigen::Ref<const Mat<Real>>;
template <typename Real>
using RowRef = Eigen::Ref<const RowVec<Real>>;

// ---------------------------------------------------------------------------
// Cross-channel temporal convolution

/// One filter of shape features x width slid over time on every channel:
/// o(i, j) = sum_{m,n} x(m, i+n, j) * w(m, n). Result is (T-w+1) x D.
template <typename Real>
Mat<Real> conv_time_channel(const Image3<Real>& x, const MatRef<Real>& filter) {
  const int width = static_cast<int>(filter.cols());
  if (filter.rows() != x.features) throw DataError("filter height must equal the feature count");
  if (width >= x.frames) throw DataError("filter width must be smaller than the frame count");
  const int out_t = x.frames - width + 1;
  Mat<Real> o(out_t, x.channels);
  for (int j = 0; j < x.channels; ++j) {
    const Real* ch = x.channel_data(j);
    for (int i = 0; i < out_t; ++i) {
      Real acc = 0;
      for (int n = 0; n < width; ++n) {
        const Real* col = ch + static_cast<std::size_t>(i + n) * x.features;
        for (int m = 0; m < x.features; ++m) acc += col[m] * filter(m, n);
      }
      o(i, j) = acc;
    }
  }
  return o;
}

// ---------------------------------------------------------------------------
// Activations

template <typename Real>
Mat<Real> relu(const MatRef<Real>& x) {
  return x.cwiseMax(Real(0));
}

/// dL/dx given the pre-activation and dL/dy.
template <typename Real>
Mat<Real> relu_backward(const MatRef<Real>& pre, const MatRef<Real>& grad) {
  return (pre.array() > Real(0)).select(grad, Real(0));
}

template <typename Real>
Real sigmoid(Real x) {
  if (x >= Real(0)) return Real(1) / (Real(1) + std::exp(-x));
  const Real e = std::exp(x);
  return e / (Real(1) + e);
}

template <typename Real>
Mat<Real> sigmoid(const MatRef<Real>& x) {
  return x.unaryExpr([](Real v) { return sigmoid(v); });
}

/// Row-wise softmax with the max logit subtracted.
template <typename Real>
Mat<Real> softmax(const MatRef<Real>& logits) {
  Mat<Real> out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const Real mx = logits.row(r).maxCoeff();
    out.row(r) = (logits.row(r).array() - mx).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

// ---------------------------------------------------------------------------
// 1-max pooling

template <typename Real>
struct PoolResult {
  Real value;
  int row;
  int col;
};

/// Global maximum; ties go to the lexicographically first (row, col).
template <typename Real>
PoolResult<Real> one_max_pool(const MatRef<Real>& map) {
  if (map.size() == 0) throw DataError("1-max pooling of an empty map");
  PoolResult<Real> best{map(0, 0), 0, 0};
  for (int i = 0; i < map.rows(); ++i) {
    for (int j = 0; j < map.cols(); ++j) {
      if (map(i, j) > best.value) best = {map(i, j), i, j};
    }
  }
  return best;
}

template <typename Real>
Mat<Real> one_max_pool_backward(Eigen::Index rows, Eigen::Index cols, const PoolResult<Real>& at,
                                Real grad) {
  Mat<Real> g = Mat<Real>::Zero(rows, cols);
  g(at.row, at.col) = grad;
  return g;
}

// ---------------------------------------------------------------------------
// Dense

template <typename Real>
Mat<Real> dense(const MatRef<Real>& x, const MatRef<Real>& w, const RowRef<Real>& b) {
  if (x.cols() != w.rows() || w.cols() != b.cols()) throw DataError("dense: dimension mismatch");
  Mat<Real> y = x * w;
  y.rowwise() += b;
  return y;
}

/// Accumulates parameter gradients into dw/db and returns dL/dx.
template <typename Real>
Mat<Real> dense_backward(const MatRef<Real>& x, const MatRef<Real>& w, const MatRef<Real>& dy,
                         Eigen::Ref<Mat<Real>> dw, Eigen::Ref<RowVec<Real>> db) {
  dw.noalias() += x.transpose() * dy;
  db += dy.colwise().sum();
  return dy * w.transpose();
}

// ---------------------------------------------------------------------------
// GRU
//
// Gate blocks are packed column-wise as [update | reset | candidate]:
//   W: in x 3H, U: H x 3H, b: 1 x 3H
//   z = sigm(x Wz + h Uz + bz), r = sigm(x Wr + h Ur + br)
//   c = tanh(x Wc + (r . h) Uc + bc),  h' = (1 - z) . h + z . c

template <typename Real>
struct GruStepCache {
  Mat<Real> h_prev, z, r, cand, rh;
};

/// One step given the input projection xw = x W + b (batch x 3H).
template <typename Real>
Mat<Real> gru_step_projected(const MatRef<Real>& xw, const MatRef<Real>& u,
                             const MatRef<Real>& h_prev, GruStepCache<Real>* cache) {
  const Eigen::Index h = u.rows();
  if (u.cols() != 3 * h || xw.cols() != 3 * h || h_prev.cols() != h || xw.rows() != h_prev.rows()) {
    throw DataError("gru_step: dimension mismatch");
  }
  const Mat<Real> hu = h_prev * u.leftCols(2 * h);
  Mat<Real> z = sigmoid<Real>(xw.leftCols(h) + hu.leftCols(h));
  Mat<Real> r = sigmoid<Real>(xw.middleCols(h, h) + hu.rightCols(h));
  Mat<Real> rh = r.cwiseProduct(h_prev);
  Mat<Real> cand = (xw.rightCols(h) + rh * u.rightCols(h)).array().tanh().matrix();
  Mat<Real> out = h_prev + z.cwiseProduct(cand - h_prev);
  if (cache) {
    cache->h_prev = h_prev;
    cache->z = std::move(z);
    cache->r = std::move(r);
    cache->cand = std::move(cand);
    cache->rh = std::move(rh);
  }
  return out;
}

template <typename Real>
Mat<Real> gru_step(const MatRef<Real>& w, const MatRef<Real>& u, const RowRef<Real>& b,
                   const MatRef<Real>& x, const MatRef<Real>& h_prev,
                   GruStepCache<Real>* cache = nullptr) {
  return gru_step_projected<Real>(dense<Real>(x, w, b), u, h_prev, cache);
}

/// Backward through one step. Accumulates into du, writes dL/d(xw) and
/// returns dL/dh_prev.
template <typename Real>
Mat<Real> gru_step_backward(const GruStepCache<Real>& c, const MatRef<Real>& u,
                            const MatRef<Real>& dh, Eigen::Ref<Mat<Real>> du, Mat<Real>& dxw) {
  const Eigen::Index h = u.rows();
  const Mat<Real> dcand = dh.cwiseProduct(c.z);
  const Mat<Real> dz = dh.cwiseProduct(c.cand - c.h_prev);
  Mat<Real> dh_prev = dh - dh.cwiseProduct(c.z);

  const Mat<Real> dac = dcand.array() * (Real(1) - c.cand.array().square());
  du.rightCols(h).noalias() += c.rh.transpose() * dac;
  const Mat<Real> drh = dac * u.rightCols(h).transpose();
  const Mat<Real> dr = drh.cwiseProduct(c.h_prev);
  dh_prev += drh.cwiseProduct(c.r);

  dxw.resize(dh.rows(), 3 * h);
  dxw.leftCols(h) = dz.array() * c.z.array() * (Real(1) - c.z.array());
  dxw.middleCols(h, h) = dr.array() * c.r.array() * (Real(1) - c.r.array());
  dxw.rightCols(h) = dac;
  du.leftCols(2 * h).noalias() += c.h_prev.transpose() * dxw.leftCols(2 * h);
  dh_prev.noalias() += dxw.leftCols(2 * h) * u.leftCols(2 * h).transpose();
  return dh_prev;
}

// ---------------------------------------------------------------------------
// Dropout

/// Inverted-dropout mask: each entry 0 with probability rate, else 1/(1-rate).
template <typename Real>
Mat<Real> dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must be in [0, 1)");
  Mat<Real> mask(rows, cols);
  Rng rng(seed);
  const Real keep = static_cast<Real>(1.0 / (1.0 - rate));
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    mask.data()[i] = rng.uniform() < rate ? Real(0) : keep;
  }
  return mask;
}

template <typename Real>
Mat<Real> dropout(const MatRef<Real>& t, double rate, std::uint64_t seed, Mode mode) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must be in [0, 1)");
  if (mode == Mode::eval || rate == 0.0) return t;
  return t.cwiseProduct(dropout_mask<Real>(t.rows(), t.cols(), rate, seed));
}

// ---------------------------------------------------------------------------
// Loss

/// E = -sum_n log(pred[n, label_n]) + (lambda/2) * theta_sq_norm. Rows of
/// pred must lie on the simplex (tolerance 1e-6).
template <typename Real>
double cross_entropy_l2(const MatRef<Real>& pred, std::span<const int> labels, double theta_sq_norm,
                        double lambda) {
  if (static_cast<std::size_t>(pred.rows()) != labels.size()) {
    throw DataError("cross_entropy: prediction and label counts differ");
  }
  if (lambda < 0.0) throw ConfigError("lambda must be non-negative");
  double e = 0.0;
  for (Eigen::Index n = 0; n < pred.rows(); ++n) {
    const double sum = static_cast<double>(pred.row(n).sum());
    if (std::abs(sum - 1.0) > 1e-6 || pred.row(n).minCoeff() < Real(0)) {
      throw NumericalError("cross_entropy: prediction row " + std::to_string(n) +
                           " is not a probability vector");
    }
    const int y = labels[static_cast<std::size_t>(n)];
    if (y < 0 || y >= pred.cols()) throw DataError("cross_entropy: label out of range");
    e -= std::log(std::max(static_cast<double>(pred(n, y)), std::numeric_limits<double>::min()));
  }
  return e + 0.5 * lambda * theta_sq_norm;
}

}  // namespace asc::nn
