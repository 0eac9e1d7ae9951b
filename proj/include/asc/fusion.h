#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "asc/nn/tensor.h"

namespace asc {

/// Category posterior. Late fusion by max or product leaves it unnormalized.
struct Posterior {
  std::vector<double> values;
  bool normalized = true;

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
};

inline constexpr double kPosteriorFloor = 1e-12;

struct SvmConfig {
  double c_svm = 1.0;
  int epochs = 500;
  std::uint64_t seed = 0;
};

/// One-vs-rest linear SVM over standardized features. Scores are
/// standardized(x) . weights.col(c) + bias[c].
struct LinearSvm {
  int n_classes = 0;
  int dim = 0;
  std::vector<float> mean;
  std::vector<float> inv_std;
  Mat<float> weights;  // dim x n_classes
  std::vector<float> bias;

  std::vector<double> scores(std::span<const float> x) const;
  Mat<double> scores(const Mat<float>& x) const;
};

/// Pegasos-style sub-gradient descent on the L2-regularized hinge loss,
/// lambda = 1 / (c_svm * n), step 1 / (lambda * t), iterate averaging over
/// the second half of training.
LinearSvm train_linear_svm(const Mat<float>& features, std::span<const int> labels, int n_classes,
                           const SvmConfig& cfg = {});

void save_svm(const std::filesystem::path& path, const LinearSvm& svm);
LinearSvm load_svm(const std::filesystem::path& path);

/// Softmax over the one-vs-rest decision scores.
Posterior svm_posterior(const LinearSvm& svm, std::span<const float> feature_row);
Posterior softmax_posterior(std::span<const double> scores);

enum class FusionRule { max, mean, mult };
const char* to_string(FusionRule r);

/// P_c = max(a_c, b_c), (a_c + b_c) / 2 or (a_c * b_c) / 2.
Posterior late_fuse(const Posterior& conv, const Posterior& rec, FusionRule rule);

Posterior normalize(const Posterior& p);

/// Combines segment posteriors of one snippet. mult works in the log domain
/// with entries clipped to kPosteriorFloor; every rule renormalizes. A single
/// posterior is returned unchanged.
Posterior aggregate_segments(std::span<const Posterior> segments, FusionRule rule = FusionRule::mult);

/// Argmax, lowest index on ties.
int predict(std::span<const double> p);
inline int predict(const Posterior& p) { return predict(p.values); }

}  // namespace asc
