#pragma once

#include <Eigen/Core>

#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "asc/nn/tensor.h"

namespace asc {

/// Ordered list of named parameter blocks. The order is the checkpoint order
/// and the iteration order of the optimizer.
template <typename Real>
class ParamSet {
 public:
  struct Block {
    std::string name;
    std::vector<int> shape;
    AlignedVector<Real> values;

    std::size_t size() const { return values.size(); }
    int rows() const { return shape.empty() ? 0 : shape[0]; }
    int cols() const { return shape.size() < 2 ? 1 : shape[1]; }
  };

  int add(std::string name, std::vector<int> shape) {
    const std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                                          [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
    blocks_.push_back({std::move(name), std::move(shape), AlignedVector<Real>(n, Real(0))});
    return static_cast<int>(blocks_.size()) - 1;
  }

  int size() const { return static_cast<int>(blocks_.size()); }
  Block& operator[](int i) { return blocks_[static_cast<std::size_t>(i)]; }
  const Block& operator[](int i) const { return blocks_[static_cast<std::size_t>(i)]; }
  auto begin() { return blocks_.begin(); }
  auto end() { return blocks_.end(); }
  auto begin() const { return blocks_.begin(); }
  auto end() const { return blocks_.end(); }

  int find(const std::string& name) const {
    for (int i = 0; i < size(); ++i) {
      if (blocks_[static_cast<std::size_t>(i)].name == name) return i;
    }
    return -1;
  }

  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& b : blocks_) n += b.size();
    return n;
  }

  void zero() {
    for (auto& b : blocks_) std::fill(b.values.begin(), b.values.end(), Real(0));
  }

  /// Same block names and shapes, zero-filled.
  ParamSet zeros_like() const {
    ParamSet out = *this;
    out.zero();
    return out;
  }

  double squared_norm() const {
    double acc = 0.0;
    for (const auto& b : blocks_) {
      for (Real v : b.values) acc += static_cast<double>(v) * static_cast<double>(v);
    }
    return acc;
  }

  bool same_layout(const ParamSet& other) const {
    if (other.size() != size()) return false;
    for (int i = 0; i < size(); ++i) {
      if ((*this)[i].name != other[i].name || (*this)[i].shape != other[i].shape) return false;
    }
    return true;
  }

  template <typename Other>
  ParamSet<Other> cast() const {
    ParamSet<Other> out;
    for (const auto& b : blocks_) {
      const int idx = out.add(b.name, b.shape);
      std::copy(b.values.begin(), b.values.end(), out[idx].values.begin());
    }
    return out;
  }

  Eigen::Map<Mat<Real>> matrix(int i) {
    auto& b = (*this)[i];
    return {b.values.data(), b.rows(), b.cols()};
  }
  Eigen::Map<const Mat<Real>> matrix(int i) const {
    const auto& b = (*this)[i];
    return {b.values.data(), b.rows(), b.cols()};
  }
  Eigen::Map<RowVec<Real>> vector(int i) {
    auto& b = (*this)[i];
    return {b.values.data(), static_cast<Eigen::Index>(b.size())};
  }
  Eigen::Map<const RowVec<Real>> vector(int i) const {
    const auto& b = (*this)[i];
    return {b.values.data(), static_cast<Eigen::Index>(b.size())};
  }

 private:
  std::vector<Block> blocks_;
};

}  // namespace asc
