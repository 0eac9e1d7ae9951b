#include "asc/lte.h"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <deque>

#include "asc/artifact.h"
#include "asc/error.h"

namespace asc {
namespace {

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return d;
}

std::vector<double> centroid(const std::vector<std::vector<double>>& means,
                             const std::vector<int>& members) {
  std::vector<double> c(means[static_cast<std::size_t>(members.front())].size(), 0.0);
  for (int m : members) {
    const auto& v = means[static_cast<std::size_t>(m)];
    for (std::size_t i = 0; i < c.size(); ++i) c[i] += v[i];
  }
  for (double& x : c) x /= static_cast<double>(members.size());
  return c;
}

/// 2-means split of `members` (sorted ascending). Returns (left, right) with
/// the lowest category id always on the left.
std::pair<std::vector<int>, std::vector<int>> two_means(
    const std::vector<std::vector<double>>& means, const std::vector<int>& members,
    int iterations) {
  if (members.size() == 2) return {{members[0]}, {members[1]}};

  int seed_a = members[0], seed_b = members[1];
  double best = -1.0;
  for (std::size_t i = 0; i < members.size(); ++i) {
    for (std::size_t j = i + 1; j < members.size(); ++j) {
      const double d = squared_distance(means[static_cast<std::size_t>(members[i])],
                                        means[static_cast<std::size_t>(members[j])]);
      if (d > best) {
        best = d;
        seed_a = members[i];
        seed_b = members[j];
      }
    }
  }

  std::vector<double> c0 = means[static_cast<std::size_t>(seed_a)];
  std::vector<double> c1 = means[static_cast<std::size_t>(seed_b)];
  std::vector<int> g0, g1;
  auto assign = [&] {
    std::vector<int> a0, a1;
    for (int m : members) {
      const auto& v = means[static_cast<std::size_t>(m)];
      (squared_distance(v, c0) <= squared_distance(v, c1) ? a0 : a1).push_back(m);
    }
    return std::pair{a0, a1};
  };
  std::tie(g0, g1) = assign();
  for (int it = 0; it < iterations && !g0.empty() && !g1.empty(); ++it) {
    c0 = centroid(means, g0);
    c1 = centroid(means, g1);
    auto [n0, n1] = assign();
    if (n0.empty() || n1.empty() || (n0 == g0 && n1 == g1)) break;
    g0 = std::move(n0);
    g1 = std::move(n1);
  }
  if (g0.empty() || g1.empty()) {
    // Degenerate (coincident means): peel off the lowest id.
    g0 = {members.front()};
    g1.assign(members.begin() + 1, members.end());
  }
  if (g1.front() < g0.front()) std::swap(g0, g1);
  return {g0, g1};
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

nlohmann::json LabelTree::to_json() const {
  nlohmann::json nodes_json = nlohmann::json::array();
  for (const auto& n : nodes) {
    nodes_json.push_back({{"categories", n.categories},
                          {"left", n.left},
                          {"right", n.right},
                          {"left_child", n.left_child},
                          {"right_child", n.right_child}});
  }
  return {{"n_categories", n_categories}, {"nodes", nodes_json}};
}

LabelTree LabelTree::from_json(const nlohmann::json& j) {
  LabelTree t;
  t.n_categories = j.at("n_categories").get<int>();
  for (const auto& n : j.at("nodes")) {
    Node node;
    node.categories = n.at("categories").get<std::vector<int>>();
    node.left = n.at("left").get<std::vector<int>>();
    node.right = n.at("right").get<std::vector<int>>();
    node.left_child = n.at("left_child").get<int>();
    node.right_child = n.at("right_child").get<int>();
    t.nodes.push_back(std::move(node));
  }
  if (t.split_nodes() != t.n_categories - 1) throw DataError("label tree must have C-1 split nodes");
  return t;
}

LabelTree build_label_tree(const std::vector<std::vector<double>>& class_means,
                           int lloyd_iterations) {
  const int n = static_cast<int>(class_means.size());
  if (n < 2) throw DataError("label tree needs at least 2 categories");
  for (const auto& m : class_means) {
    if (m.size() != class_means.front().size()) throw DataError("class means differ in dimension");
    for (double v : m) {
      if (!std::isfinite(v)) throw DataError("non-finite class mean");
    }
  }

  LabelTree tree;
  tree.n_categories = n;
  struct Pending {
    std::vector<int> members;
    int parent;
    bool is_left;
  };
  std::vector<int> all(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;

  std::deque<Pending> queue{{all, -1, true}};
  while (!queue.empty()) {
    Pending p = std::move(queue.front());
    queue.pop_front();
    if (p.members.size() < 2) continue;
    const int idx = tree.split_nodes();
    if (p.parent >= 0) {
      auto& parent = tree.nodes[static_cast<std::size_t>(p.parent)];
      (p.is_left ? parent.left_child : parent.right_child) = idx;
    }
    auto [left, right] = two_means(class_means, p.members, lloyd_iterations);
    LabelTree::Node node;
    node.categories = p.members;
    node.left = left;
    node.right = right;
    tree.nodes.push_back(node);
    queue.push_back({std::move(left), idx, true});
    queue.push_back({std::move(right), idx, false});
  }
  return tree;
}

Standardizer Standardizer::fit(const FeatureMatrix& frames) {
  Standardizer s;
  const auto cols = static_cast<std::size_t>(frames.cols);
  std::vector<double> sum(cols, 0.0), sq(cols, 0.0);
  for (int r = 0; r < frames.rows; ++r) {
    const auto row = frames.row(r);
    for (std::size_t c = 0; c < cols; ++c) {
      sum[c] += row[c];
      sq[c] += static_cast<double>(row[c]) * row[c];
    }
  }
  s.mean.resize(cols);
  s.inv_std.resize(cols);
  const double n = std::max(1, frames.rows);
  for (std::size_t c = 0; c < cols; ++c) {
    const double mu = sum[c] / n;
    const double var = std::max(sq[c] / n - mu * mu, 0.0);
    s.mean[c] = static_cast<float>(mu);
    s.inv_std[c] = static_cast<float>(var > 1e-12 ? 1.0 / std::sqrt(var) : 1.0);
  }
  return s;
}

void Standardizer::apply(std::span<const float> in, std::span<double> out) const {
  for (std::size_t i = 0; i < in.size(); ++i) {
    out[i] = (static_cast<double>(in[i]) - mean[i]) * inv_std[i];
  }
}

EmbeddingModel train_node_classifiers(const LabelTree& tree, const FeatureMatrix& frames,
                                      std::span<const int> labels, ChannelId channel,
                                      const LogisticConfig& cfg) {
  if (labels.size() != static_cast<std::size_t>(frames.rows)) {
    throw DataError("frame and label counts differ");
  }
  for (int c = 0; c < tree.n_categories; ++c) {
    if (std::find(labels.begin(), labels.end(), c) == labels.end()) {
      throw DataError("category " + std::to_string(c) + " has no training frames");
    }
  }

  EmbeddingModel model;
  model.tree = tree;
  model.channel = channel;
  model.input_dim = frames.cols;
  model.standardizer = Standardizer::fit(frames);

  const int dim = frames.cols;
  Eigen::MatrixXd x(frames.rows, dim);
  std::vector<double> buf(static_cast<std::size_t>(dim));
  for (int r = 0; r < frames.rows; ++r) {
    model.standardizer.apply(frames.row(r), buf);
    for (int c = 0; c < dim; ++c) x(r, c) = buf[static_cast<std::size_t>(c)];
  }

  for (const auto& node : tree.nodes) {
    std::vector<int> rows;
    std::vector<double> target;
    for (int r = 0; r < frames.rows; ++r) {
      const int lab = labels[static_cast<std::size_t>(r)];
      if (std::find(node.left.begin(), node.left.end(), lab) != node.left.end()) {
        rows.push_back(r);
        target.push_back(0.0);
      } else if (std::find(node.right.begin(), node.right.end(), lab) != node.right.end()) {
        rows.push_back(r);
        target.push_back(1.0);
      }
    }
    if (rows.empty()) throw DataError("empty training set for a label-tree node");

    const auto n = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd xn(n, dim);
    for (Eigen::Index i = 0; i < n; ++i) xn.row(i) = x.row(rows[static_cast<std::size_t>(i)]);
    const Eigen::Map<const Eigen::VectorXd> y(target.data(), n);

    Eigen::VectorXd w = Eigen::VectorXd::Zero(dim);
    double b = 0.0;
    for (int it = 0; it < cfg.iterations; ++it) {
      Eigen::VectorXd resid = ((xn * w).array() + b).unaryExpr([](double z) { return sigmoid(z); }).matrix() - y;
      const Eigen::VectorXd gw = xn.transpose() * resid / static_cast<double>(n) + cfg.reg * w;
      const double gb = resid.mean();
      w -= cfg.step * gw;
      b -= cfg.step * gb;
    }
    NodeClassifier clf;
    clf.weights.resize(static_cast<std::size_t>(dim));
    for (int c = 0; c < dim; ++c) clf.weights[static_cast<std::size_t>(c)] = static_cast<float>(w(c));
    clf.bias = static_cast<float>(b);
    model.node_classifiers.push_back(std::move(clf));
  }
  return model;
}

EmbeddingModel fit_channel_embedding(const FeatureMatrix& frames, std::span<const int> labels,
                                     int n_categories, ChannelId channel,
                                     const LogisticConfig& cfg) {
  const Standardizer s = Standardizer::fit(frames);
  const auto dim = static_cast<std::size_t>(frames.cols);
  std::vector<std::vector<double>> means(static_cast<std::size_t>(n_categories),
                                         std::vector<double>(dim, 0.0));
  std::vector<int> counts(static_cast<std::size_t>(n_categories), 0);
  std::vector<double> buf(dim);
  for (int r = 0; r < frames.rows; ++r) {
    const int lab = labels[static_cast<std::size_t>(r)];
    if (lab < 0 || lab >= n_categories) throw DataError("frame label out of range");
    s.apply(frames.row(r), buf);
    auto& m = means[static_cast<std::size_t>(lab)];
    for (std::size_t c = 0; c < dim; ++c) m[c] += buf[c];
    ++counts[static_cast<std::size_t>(lab)];
  }
  for (int k = 0; k < n_categories; ++k) {
    if (counts[static_cast<std::size_t>(k)] == 0) {
      throw DataError("category " + std::to_string(k) + " has no training frames");
    }
    for (double& v : means[static_cast<std::size_t>(k)]) v /= counts[static_cast<std::size_t>(k)];
  }
  return train_node_classifiers(build_label_tree(means), frames, labels, channel, cfg);
}

std::vector<double> embed_frame(const EmbeddingModel& model, std::span<const float> v) {
  if (static_cast<int>(v.size()) != model.input_dim) {
    throw DataError("embed_frame: vector has dimension " + std::to_string(v.size()) +
                    ", model expects " + std::to_string(model.input_dim));
  }
  std::vector<double> z(v.size());
  model.standardizer.apply(v, z);
  std::vector<double> out(static_cast<std::size_t>(model.output_dim()));
  for (std::size_t n = 0; n < model.node_classifiers.size(); ++n) {
    const auto& clf = model.node_classifiers[n];
    double a = clf.bias;
    for (std::size_t i = 0; i < z.size(); ++i) a += clf.weights[i] * z[i];
    // Rounded to a multiple of 2^-24: p and 1 - p are then exact in float32
    // and the pair still sums to exactly 1 after the tensor cast.
    const double p = std::round(sigmoid(a) * 0x1.0p24) * 0x1.0p-24;
    out[2 * n] = 1.0 - p;
    out[2 * n + 1] = p;
  }
  return out;
}

LteTensor embed_segment(const ChannelModels& models, const SnippetFeatures& feats, int segment) {
  if (segment < 0 || segment >= feats.n_segments) throw DataError("segment index out of range");
  const int f_dim = models[0].output_dim();
  const int frames = feats.frames_per_segment;
  LteTensor x(f_dim, frames, kChannels);
  for (int c = 0; c < kChannels; ++c) {
    const auto& model = models[static_cast<std::size_t>(c)];
    if (model.channel.index != c || model.node_classifiers.empty()) {
      throw DataError("missing embedding model for channel " + std::to_string(c));
    }
    if (model.output_dim() != f_dim) throw DataError("channel models disagree on F");
    const auto& mat = feats.channels[static_cast<std::size_t>(c)];
    for (int t = 0; t < frames; ++t) {
      const auto e = embed_frame(model, mat.row(segment * frames + t));
      for (int f = 0; f < f_dim; ++f) x.at(f, t, c) = static_cast<float>(e[static_cast<std::size_t>(f)]);
    }
  }
  return x;
}

std::vector<LteTensor> embed_snippet(const ChannelModels& models, const SnippetFeatures& feats) {
  std::vector<LteTensor> out;
  out.reserve(static_cast<std::size_t>(feats.n_segments));
  for (int s = 0; s < feats.n_segments; ++s) out.push_back(embed_segment(models, feats, s));
  return out;
}

ChannelModels fit_embeddings(std::span<const SnippetFeatures* const> train, int n_categories,
                             const LogisticConfig& cfg) {
  if (train.empty()) throw DataError("no training snippets for the embedding");
  ChannelModels models;
  for (int c = 0; c < kChannels; ++c) {
    int rows = 0;
    for (const auto* s : train) rows += s->total_frames();
    const int cols = train.front()->channels[static_cast<std::size_t>(c)].cols;
    FeatureMatrix frames(rows, cols);
    std::vector<int> labels;
    labels.reserve(static_cast<std::size_t>(rows));
    int r = 0;
    for (const auto* s : train) {
      const auto& m = s->channels[static_cast<std::size_t>(c)];
      if (m.cols != cols) throw DataError("snippets disagree on feature dimension");
      std::copy(m.data.begin(), m.data.end(),
                frames.data.begin() + static_cast<std::ptrdiff_t>(r) * cols);
      r += m.rows;
      labels.insert(labels.end(), static_cast<std::size_t>(m.rows), s->label);
    }
    models[static_cast<std::size_t>(c)] = fit_channel_embedding(frames, labels, n_categories, ChannelId{c}, cfg);
  }
  return models;
}

void save_embedding_model(const std::filesystem::path& path, const EmbeddingModel& model) {
  Artifact art;
  art.kind = "lte_embedding";
  art.header["tree"] = model.tree.to_json();
  art.header["channel"] = model.channel.index;
  art.header["channel_kind"] = to_string(model.channel.kind());
  art.header["channel_variant"] = to_string(model.channel.variant());
  art.header["input_dim"] = model.input_dim;
  const int dim = model.input_dim;
  art.add("standardizer.mean", {dim}, model.standardizer.mean);
  art.add("standardizer.inv_std", {dim}, model.standardizer.inv_std);
  std::vector<float> w, b;
  for (const auto& clf : model.node_classifiers) {
    w.insert(w.end(), clf.weights.begin(), clf.weights.end());
    b.push_back(clf.bias);
  }
  const int nodes = static_cast<int>(model.node_classifiers.size());
  art.add("nodes.weights", {nodes, dim}, std::move(w));
  art.add("nodes.bias", {nodes}, std::move(b));
  write_artifact(path, art);
}

EmbeddingModel load_embedding_model(const std::filesystem::path& path) {
  const Artifact art = read_artifact(path, "lte_embedding");
  EmbeddingModel model;
  try {
    model.tree = LabelTree::from_json(art.header.at("tree"));
    model.channel = ChannelId{art.header.at("channel").get<int>()};
    model.input_dim = art.header.at("input_dim").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  model.standardizer.mean = art.block("standardizer.mean").values;
  model.standardizer.inv_std = art.block("standardizer.inv_std").values;
  const auto& w = art.block("nodes.weights");
  const auto& b = art.block("nodes.bias");
  const auto dim = static_cast<std::size_t>(model.input_dim);
  for (std::size_t n = 0; n < b.values.size(); ++n) {
    NodeClassifier clf;
    clf.weights.assign(w.values.begin() + static_cast<std::ptrdiff_t>(n * dim),
                       w.values.begin() + static_cast<std::ptrdiff_t>((n + 1) * dim));
    clf.bias = b.values[n];
    model.node_classifiers.push_back(std::move(clf));
  }
  if (static_cast<int>(model.node_classifiers.size()) != model.tree.split_nodes()) {
    throw DataError(path.string() + ": classifier count does not match tree");
  }
  return model;
}

}  // namespace asc
