#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "asc/nn/layers.h"
#include "asc/nn/params.h"
#include "asc/nn/tensor.h"

namespace asc {

enum class ModelKind { cnn, rnn, crnn };
enum class EarlyFusion { sum, max, concat };

const char* to_string(ModelKind k);
const char* to_string(EarlyFusion f);
ModelKind parse_model_kind(const std::string& s);
EarlyFusion parse_early_fusion(const std::string& s);

/// Network shape and regularization. Defaults follow the published setup:
/// three filter widths with 1000 filters each, two GRU layers of 256 units.
struct Architecture {
  ModelKind kind = ModelKind::cnn;
  int n_classes = 19;
  int features = 36;  // F
  int channels = 6;   // D
  std::vector<int> widths{3, 5, 7};
  int filters_per_width = 1000;  // Q
  int hidden = 256;              // H
  int gru_layers = 2;
  int fusion_size = 256;  // M
  EarlyFusion fusion = EarlyFusion::sum;
  double cnn_dropout = 0.5;
  double rnn_dropout = 0.1;
  double fusion_dropout = 0.5;

  int conv_feature_dim() const { return static_cast<int>(widths.size()) * filters_per_width; }
  /// Length of the feature vector handed to the SVM.
  int feature_dim() const;
  int min_frames() const;

  nlohmann::json to_json() const;
  static Architecture from_json(const nlohmann::json& j);
};

template <typename Real>
struct NetOutput {
  Mat<Real> features;    // z^conv, z^rec or z^f (pre-dropout)
  Mat<Real> logits;
  Mat<Real> posteriors;  // softmax rows
};

/// CNN, stacked-GRU RNN, or two-stream C-RNN with a softmax head.
/// Instantiated for float (training) and double (gradient checking).
template <typename Real>
class SceneNet {
 public:
  SceneNet(Architecture arch, std::uint64_t init_seed);
  SceneNet(Architecture arch, ParamSet<Real> params);

  const Architecture& arch() const { return arch_; }
  ParamSet<Real>& params() { return params_; }
  const ParamSet<Real>& params() const { return params_; }

  /// Forward pass over a batch of equally sized tensors. In train mode
  /// dropout masks are derived from dropout_seed.
  NetOutput<Real> forward(std::span<const LteTensor* const> batch, nn::Mode mode,
                          std::uint64_t dropout_seed = 0) const;

  /// Regularized cross-entropy of the batch (summed over examples) and its
  /// gradient, written into grads (same layout as params()).
  double loss_and_gradient(std::span<const LteTensor* const> batch, std::span<const int> labels,
                           double lambda, nn::Mode mode, std::uint64_t dropout_seed,
                           ParamSet<Real>& grads, NetOutput<Real>* out = nullptr) const;

  template <typename Other>
  SceneNet<Other> cast() const {
    return SceneNet<Other>(arch_, params_.template cast<Other>());
  }

 private:
  struct Forward;
  Forward run(std::span<const LteTensor* const> batch, nn::Mode mode, std::uint64_t seed) const;

  Architecture arch_;
  ParamSet<Real> params_;
};

extern template class SceneNet<float>;
extern template class SceneNet<double>;

struct TrainConfig {
  double lambda = 1e-3;
  double learning_rate = 1e-4;
  int batch_size = 64;
  int epochs = 200;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
};

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;
  double train_accuracy = 0.0;  // percent, from train-mode forward passes
};

struct TrainResult {
  std::vector<EpochStats> trace;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Mini-batch Adam on the regularized cross-entropy. Throws DataError if a
/// category is absent and NumericalError if the loss becomes non-finite.
TrainResult train_model(SceneNet<float>& model, std::span<const LteTensor> data,
                        std::span<const int> labels, const TrainConfig& cfg,
                        const EpochCallback& on_epoch = {});

/// Eval-mode feature rows, one per tensor.
Mat<float> extract_features(const SceneNet<float>& model, std::span<const LteTensor> data,
                            int batch_size = 64);

/// Eval-mode softmax posteriors, one row per tensor.
Mat<float> predict_posteriors(const SceneNet<float>& model, std::span<const LteTensor> data,
                              int batch_size = 64);

void save_checkpoint(const std::filesystem::path& path, const SceneNet<float>& model,
                     const nlohmann::json& extra = nlohmann::json::object());
SceneNet<float> load_checkpoint(const std::filesystem::path& path);

/// Glorot-uniform bound for a fan_in x fan_out weight matrix.
double glorot_bound(int fan_in, int fan_out);

}  // namespace asc
