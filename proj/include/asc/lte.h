#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "asc/features.h"
#include "asc/nn/tensor.h"

namespace asc {

/// Binary tree over scene categories. Nodes are stored breadth-first; node n
/// owns meta-class entries 2n (left) and 2n+1 (right) of an LTE vector.
struct LabelTree {
  struct Node {
    std::vector<int> categories;
    std::vector<int> left;
    std::vector<int> right;
    int left_child = -1;   // -1: left side is a single-category leaf
    int right_child = -1;
  };

  int n_categories = 0;
  std::vector<Node> nodes;

  int split_nodes() const { return static_cast<int>(nodes.size()); }
  int meta_classes() const { return 2 * split_nodes(); }

  nlohmann::json to_json() const;
  static LabelTree from_json(const nlohmann::json& j);
  friend bool operator==(const LabelTree&, const LabelTree&) = default;
};

inline bool operator==(const LabelTree::Node& a, const LabelTree::Node& b) {
  return a.categories == b.categories && a.left == b.left && a.right == b.right &&
         a.left_child == b.left_child && a.right_child == b.right_child;
}

/// Recursive 2-means partition of per-category mean vectors.
LabelTree build_label_tree(const std::vector<std::vector<double>>& class_means,
                           int lloyd_iterations = 20);

struct LogisticConfig {
  int iterations = 200;
  double step = 0.1;
  double reg = 1e-3;
};

/// Per-dimension z-scoring fitted on training frames.
struct Standardizer {
  std::vector<float> mean;
  std::vector<float> inv_std;

  static Standardizer fit(const FeatureMatrix& frames);
  void apply(std::span<const float> in, std::span<double> out) const;
};

struct NodeClassifier {
  std::vector<float> weights;
  float bias = 0.0f;
};

struct EmbeddingModel {
  LabelTree tree;
  ChannelId channel;
  int input_dim = 0;
  Standardizer standardizer;
  std::vector<NodeClassifier> node_classifiers;

  int output_dim() const { return tree.meta_classes(); }
};

/// Trains one logistic scorer per split node: left meta-class is label 0,
/// right is label 1, using only frames of the node's member categories.
EmbeddingModel train_node_classifiers(const LabelTree& tree, const FeatureMatrix& frames,
                                      std::span<const int> labels, ChannelId channel,
                                      const LogisticConfig& cfg = {});

/// Standardizes frames, builds the tree on standardized class means and
/// trains its node classifiers.
EmbeddingModel fit_channel_embedding(const FeatureMatrix& frames, std::span<const int> labels,
                                     int n_categories, ChannelId channel,
                                     const LogisticConfig& cfg = {});

/// LTE slice for one frame of one channel: right entry p, left entry 1-p.
std::vector<double> embed_frame(const EmbeddingModel& model, std::span<const float> v);

using ChannelModels = std::array<EmbeddingModel, kChannels>;

/// X for segment `segment` of a snippet: F x frames_per_segment x 6.
LteTensor embed_segment(const ChannelModels& models, const SnippetFeatures& feats, int segment);

std::vector<LteTensor> embed_snippet(const ChannelModels& models, const SnippetFeatures& feats);

/// Fits all six channel models on the frames of the given training snippets.
ChannelModels fit_embeddings(std::span<const SnippetFeatures* const> train, int n_categories,
                             const LogisticConfig& cfg = {});

void save_embedding_model(const std::filesystem::path& path, const EmbeddingModel& model);
EmbeddingModel load_embedding_model(const std::filesystem::path& path);

}  // namespace asc
