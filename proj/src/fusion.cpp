#include "asc/fusion.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "asc/artifact.h"
#include "asc/error.h"
#include "asc/random.h"

namespace asc {

std::vector<double> LinearSvm::scores(std::span<const float> x) const {
  if (static_cast<int>(x.size()) != dim) throw DataError("svm: feature dimension mismatch");
  std::vector<double> s(bias.begin(), bias.end());
  for (int d = 0; d < dim; ++d) {
    const double v = (static_cast<double>(x[static_cast<std::size_t>(d)]) - mean[static_cast<std::size_t>(d)]) *
                     inv_std[static_cast<std::size_t>(d)];
    if (v == 0.0) continue;
    const float* w = weights.data() + static_cast<std::size_t>(d) * n_classes;
    for (int c = 0; c < n_classes; ++c) s[static_cast<std::size_t>(c)] += v * w[c];
  }
  return s;
}

Mat<double> LinearSvm::scores(const Mat<float>& x) const {
  Mat<double> out(x.rows(), n_classes);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const auto s = scores(std::span<const float>(x.data() + i * x.cols(), static_cast<std::size_t>(x.cols())));
    for (int c = 0; c < n_classes; ++c) out(i, c) = s[static_cast<std::size_t>(c)];
  }
  return out;
}

LinearSvm train_linear_svm(const Mat<float>& features, std::span<const int> labels, int n_classes,
                           const SvmConfig& cfg) {
  const auto n = static_cast<int>(features.rows());
  const auto dim = static_cast<int>(features.cols());
  if (n == 0 || static_cast<std::size_t>(n) != labels.size()) {
    throw DataError("svm: features and labels must be non-empty and aligned");
  }
  if (!(cfg.c_svm > 0.0) || cfg.epochs < 1) throw ConfigError("svm: c_svm must be positive, epochs >= 1");
  std::vector<int> present(static_cast<std::size_t>(n_classes), 0);
  for (int y : labels) {
    if (y < 0 || y >= n_classes) throw DataError("svm: label out of range");
    present[static_cast<std::size_t>(y)] = 1;
  }
  if (std::accumulate(present.begin(), present.end(), 0) < 2) {
    throw DataError("svm: training data must contain at least two categories");
  }

  LinearSvm svm;
  svm.n_classes = n_classes;
  svm.dim = dim;
  svm.mean.assign(static_cast<std::size_t>(dim), 0.0f);
  svm.inv_std.assign(static_cast<std::size_t>(dim), 1.0f);
  for (int d = 0; d < dim; ++d) {
    double m = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) m += features(i, d);
    m /= n;
    for (int i = 0; i < n; ++i) sq += (features(i, d) - m) * (features(i, d) - m);
    const double sd = std::sqrt(sq / n);
    svm.mean[static_cast<std::size_t>(d)] = static_cast<float>(m);
    svm.inv_std[static_cast<std::size_t>(d)] = sd > 1e-12 ? static_cast<float>(1.0 / sd) : 1.0f;
  }

  // Standardized design matrix with a trailing constant column for the bias.
  const int da = dim + 1;
  Mat<double> x(n, da);
  for (int i = 0; i < n; ++i) {
    for (int d = 0; d < dim; ++d) {
      x(i, d) = (static_cast<double>(features(i, d)) - svm.mean[static_cast<std::size_t>(d)]) *
                svm.inv_std[static_cast<std::size_t>(d)];
    }
    x(i, dim) = 1.0;
  }

  // w_t = s_t * v with s_t = prod (1 - 1/k) = 1/t for t >= 2, so the
  // per-violation update on v is eta / s = 1 / lambda.
  const double lambda = 1.0 / (cfg.c_svm * n);
  Mat<double> v = Mat<double>::Zero(da, n_classes);
  Mat<double> avg = Mat<double>::Zero(da, n_classes);
  long avg_count = 0;
  const long total = static_cast<long>(cfg.epochs) * n;
  const long avg_from = total / 2;
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  RowVec<double> margin(n_classes);
  long t = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, "svm.shuffle", static_cast<std::uint64_t>(epoch)));
    shuffle(order.begin(), order.end(), rng);
    for (int i : order) {
      ++t;
      const double s_prev = t == 1 ? 0.0 : 1.0 / static_cast<double>(t - 1);
      const double s = 1.0 / static_cast<double>(t);
      margin.noalias() = x.row(i) * v;
      margin *= s_prev;
      if (t == 1) v.setZero();
      const int y = labels[static_cast<std::size_t>(i)];
      for (int c = 0; c < n_classes; ++c) {
        const double sign = c == y ? 1.0 : -1.0;
        if (sign * margin(c) < 1.0) v.col(c) += (sign / lambda) * x.row(i).transpose();
      }
      if (t > avg_from) {
        avg += s * v;
        ++avg_count;
      }
    }
  }
  avg /= static_cast<double>(avg_count);

  svm.weights.resize(dim, n_classes);
  svm.bias.resize(static_cast<std::size_t>(n_classes));
  for (int c = 0; c < n_classes; ++c) {
    for (int d = 0; d < dim; ++d) svm.weights(d, c) = static_cast<float>(avg(d, c));
    svm.bias[static_cast<std::size_t>(c)] = static_cast<float>(avg(dim, c));
  }
  return svm;
}

void save_svm(const std::filesystem::path& path, const LinearSvm& svm) {
  Artifact art;
  art.kind = "linear_svm";
  art.header["n_classes"] = svm.n_classes;
  art.header["dim"] = svm.dim;
  art.add("mean", {svm.dim}, svm.mean);
  art.add("inv_std", {svm.dim}, svm.inv_std);
  art.add("weights", {svm.dim, svm.n_classes},
          std::vector<float>(svm.weights.data(), svm.weights.data() + svm.weights.size()));
  art.add("bias", {svm.n_classes}, svm.bias);
  write_artifact(path, art);
}

LinearSvm load_svm(const std::filesystem::path& path) {
  const Artifact art = read_artifact(path, "linear_svm");
  LinearSvm svm;
  try {
    svm.n_classes = art.header.at("n_classes").get<int>();
    svm.dim = art.header.at("dim").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  svm.mean = art.block("mean").values;
  svm.inv_std = art.block("inv_std").values;
  const auto& w = art.block("weights");
  if (w.shape != std::vector<int>{svm.dim, svm.n_classes} ||
      svm.mean.size() != static_cast<std::size_t>(svm.dim)) {
    throw DataError(path.string() + ": inconsistent svm shapes");
  }
  svm.weights = Eigen::Map<const Mat<float>>(w.values.data(), svm.dim, svm.n_classes);
  svm.bias = art.block("bias").values;
  return svm;
}

Posterior softmax_posterior(std::span<const double> scores) {
  if (scores.empty()) throw DataError("softmax of an empty score vector");
  const double mx = *std::max_element(scores.begin(), scores.end());
  Posterior p;
  p.values.resize(scores.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) sum += p.values[i] = std::exp(scores[i] - mx);
  for (auto& v : p.values) v /= sum;
  return p;
}

Posterior svm_posterior(const LinearSvm& svm, std::span<const float> feature_row) {
  return softmax_posterior(svm.scores(feature_row));
}

const char* to_string(FusionRule r) {
  switch (r) {
    case FusionRule::max: return "max";
    case FusionRule::mean: return "mean";
    case FusionRule::mult: return "mult";
  }
  return "?";
}

Posterior late_fuse(const Posterior& conv, const Posterior& rec, FusionRule rule) {
  if (conv.size() != rec.size() || conv.size() == 0) {
    throw DataError("late_fuse: posteriors must have equal non-zero length");
  }
  Posterior out;
  out.values.resize(conv.size());
  for (std::size_t c = 0; c < conv.size(); ++c) {
    switch (rule) {
      case FusionRule::max: out.values[c] = std::max(conv[c], rec[c]); break;
      case FusionRule::mean: out.values[c] = 0.5 * (conv[c] + rec[c]); break;
      case FusionRule::mult: out.values[c] = 0.5 * (conv[c] * rec[c]); break;
    }
  }
  out.normalized = rule == FusionRule::mean && conv.normalized && rec.normalized;
  return out;
}

Posterior normalize(const Posterior& p) {
  const double sum = std::accumulate(p.values.begin(), p.values.end(), 0.0);
  if (!(sum > 0.0) || !std::isfinite(sum)) throw NumericalError("cannot normalize a posterior with sum " + std::to_string(sum));
  Posterior out{p.values, true};
  for (auto& v : out.values) v /= sum;
  return out;
}

Posterior aggregate_segments(std::span<const Posterior> segments, FusionRule rule) {
  if (segments.empty()) throw DataError("aggregate_segments: no segments");
  const std::size_t C = segments.front().size();
  for (const auto& p : segments) {
    if (p.size() != C || C == 0) throw DataError("aggregate_segments: posterior length mismatch");
  }
  if (segments.size() == 1) return segments.front();

  Posterior out;
  out.values.assign(C, 0.0);
  switch (rule) {
    case FusionRule::mult: {
      for (const auto& p : segments) {
        if (std::all_of(p.values.begin(), p.values.end(), [](double v) { return v <= 0.0; })) {
          throw DataError("aggregate_segments: all-zero posterior under mult");
        }
        for (std::size_t c = 0; c < C; ++c) out.values[c] += std::log(std::max(p[c], kPosteriorFloor));
      }
      const double mx = *std::max_element(out.values.begin(), out.values.end());
      for (auto& v : out.values) v = std::exp(v - mx);
      break;
    }
    case FusionRule::max:
      for (const auto& p : segments) {
        for (std::size_t c = 0; c < C; ++c) out.values[c] = std::max(out.values[c], p[c]);
      }
      break;
    case FusionRule::mean:
      for (const auto& p : segments) {
        for (std::size_t c = 0; c < C; ++c) out.values[c] += p[c] / static_cast<double>(segments.size());
      }
      break;
  }
  return normalize(out);
}

int predict(std::span<const double> p) {
  if (p.empty()) throw DataError("predict: empty posterior");
  std::size_t best = 0;
  for (std::size_t i = 1; i < p.size(); ++i) {
    if (p[i] > p[best]) best = i;
  }
  return static_cast<int>(best);
}

}  // namespace asc
