#include "asc/models.h"

#include <algorithm>
#include <cmath>
#include <type_traits>

#include "asc/artifact.h"
#include "asc/error.h"
#include "asc/nn/adam.h"
#include "asc/random.h"

namespace asc {

using nn::Mode;

const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::cnn: return "cnn";
    case ModelKind::rnn: return "rnn";
    case ModelKind::crnn: return "crnn";
  }
  return "?";
}

const char* to_string(EarlyFusion f) {
  switch (f) {
    case EarlyFusion::sum: return "sum";
    case EarlyFusion::max: return "max";
    case EarlyFusion::concat: return "concat";
  }
  return "?";
}

ModelKind parse_model_kind(const std::string& s) {
  if (s == "cnn") return ModelKind::cnn;
  if (s == "rnn") return ModelKind::rnn;
  if (s == "crnn") return ModelKind::crnn;
  throw ConfigError("unknown model kind '" + s + "'");
}

EarlyFusion parse_early_fusion(const std::string& s) {
  if (s == "sum") return EarlyFusion::sum;
  if (s == "max") return EarlyFusion::max;
  if (s == "concat") return EarlyFusion::concat;
  throw ConfigError("unknown early fusion '" + s + "'");
}

int Architecture::feature_dim() const {
  switch (kind) {
    case ModelKind::cnn: return conv_feature_dim();
    case ModelKind::rnn: return hidden;
    case ModelKind::crnn: return fusion == EarlyFusion::concat ? 2 * fusion_size : fusion_size;
  }
  return 0;
}

int Architecture::min_frames() const {
  if (kind == ModelKind::rnn) return 1;
  return *std::max_element(widths.begin(), widths.end()) + 1;
}

nlohmann::json Architecture::to_json() const {
  return {{"kind", to_string(kind)},
          {"n_classes", n_classes},
          {"features", features},
          {"channels", channels},
          {"widths", widths},
          {"filters_per_width", filters_per_width},
          {"hidden", hidden},
          {"gru_layers", gru_layers},
          {"fusion_size", fusion_size},
          {"fusion", to_string(fusion)},
          {"cnn_dropout", cnn_dropout},
          {"rnn_dropout", rnn_dropout},
          {"fusion_dropout", fusion_dropout}};
}

Architecture Architecture::from_json(const nlohmann::json& j) {
  Architecture a;
  a.kind = parse_model_kind(j.at("kind").get<std::string>());
  a.n_classes = j.at("n_classes").get<int>();
  a.features = j.at("features").get<int>();
  a.channels = j.at("channels").get<int>();
  a.widths = j.at("widths").get<std::vector<int>>();
  a.filters_per_width = j.at("filters_per_width").get<int>();
  a.hidden = j.at("hidden").get<int>();
  a.gru_layers = j.at("gru_layers").get<int>();
  a.fusion_size = j.at("fusion_size").get<int>();
  a.fusion = parse_early_fusion(j.at("fusion").get<std::string>());
  a.cnn_dropout = j.at("cnn_dropout").get<double>();
  a.rnn_dropout = j.at("rnn_dropout").get<double>();
  a.fusion_dropout = j.at("fusion_dropout").get<double>();
  return a;
}

double glorot_bound(int fan_in, int fan_out) { return std::sqrt(6.0 / (fan_in + fan_out)); }

namespace {

bool has_cnn(const Architecture& a) { return a.kind != ModelKind::rnn; }
bool has_rnn(const Architecture& a) { return a.kind != ModelKind::cnn; }

std::string cnn_prefix(const Architecture& a) { return a.kind == ModelKind::crnn ? "cnn." : ""; }
std::string rnn_prefix(const Architecture& a) { return a.kind == ModelKind::crnn ? "rnn." : ""; }

template <typename Real>
ParamSet<Real> make_layout(const Architecture& a) {
  if (a.n_classes < 2 || a.features < 1 || a.channels < 1) {
    throw ConfigError("architecture needs at least 2 classes and non-empty inputs");
  }
  ParamSet<Real> p;
  if (has_cnn(a)) {
    for (int w : a.widths) {
      p.add(cnn_prefix(a) + "conv.w" + std::to_string(w), {w * a.features, a.filters_per_width});
      p.add(cnn_prefix(a) + "conv.b" + std::to_string(w), {a.filters_per_width});
    }
  }
  if (has_rnn(a)) {
    int in = a.features * a.channels;
    for (int l = 1; l <= a.gru_layers; ++l) {
      const std::string base = rnn_prefix(a) + "gru" + std::to_string(l);
      p.add(base + ".W", {in, 3 * a.hidden});
      p.add(base + ".U", {a.hidden, 3 * a.hidden});
      p.add(base + ".b", {3 * a.hidden});
      in = a.hidden;
    }
    p.add(rnn_prefix(a) + "out.W", {a.hidden, a.hidden});
    p.add(rnn_prefix(a) + "out.b", {a.hidden});
  }
  if (a.kind == ModelKind::crnn) {
    p.add("fuse.conv.W", {a.conv_feature_dim(), a.fusion_size});
    p.add("fuse.conv.b", {a.fusion_size});
    p.add("fuse.rec.W", {a.hidden, a.fusion_size});
    p.add("fuse.rec.b", {a.fusion_size});
  }
  p.add("head.W", {a.feature_dim(), a.n_classes});
  p.add("head.b", {a.n_classes});
  return p;
}

struct Layout {
  std::vector<int> conv_w, conv_b;
  std::vector<int> gru_w, gru_u, gru_b;
  int out_w = -1, out_b = -1;
  int fc_w = -1, fc_b = -1, fr_w = -1, fr_b = -1;
  int head_w = -1, head_b = -1;
};

template <typename Real>
Layout index_layout(const Architecture& a, const ParamSet<Real>& p) {
  auto need = [&](const std::string& name) {
    const int i = p.find(name);
    if (i < 0) throw DataError("parameter block '" + name + "' missing");
    return i;
  };
  Layout l;
  if (has_cnn(a)) {
    for (int w : a.widths) {
      l.conv_w.push_back(need(cnn_prefix(a) + "conv.w" + std::to_string(w)));
      l.conv_b.push_back(need(cnn_prefix(a) + "conv.b" + std::to_string(w)));
    }
  }
  if (has_rnn(a)) {
    for (int k = 1; k <= a.gru_layers; ++k) {
      const std::string base = rnn_prefix(a) + "gru" + std::to_string(k);
      l.gru_w.push_back(need(base + ".W"));
      l.gru_u.push_back(need(base + ".U"));
      l.gru_b.push_back(need(base + ".b"));
    }
    l.out_w = need(rnn_prefix(a) + "out.W");
    l.out_b = need(rnn_prefix(a) + "out.b");
  }
  if (a.kind == ModelKind::crnn) {
    l.fc_w = need("fuse.conv.W");
    l.fc_b = need("fuse.conv.b");
    l.fr_w = need("fuse.rec.W");
    l.fr_b = need("fuse.rec.b");
  }
  l.head_w = need("head.W");
  l.head_b = need("head.b");
  return l;
}

struct ConvArg {
  int i = 0;
  int j = 0;
  bool active = false;
};

}  // namespace

template <typename Real>
struct SceneNet<Real>::Forward {
  int batch = 0;
  int frames = 0;
  std::vector<AlignedVector<Real>> input_storage;
  std::vector<const Real*> inputs;

  // conv_arg[g][b * Q + q]
  std::vector<std::vector<ConvArg>> conv_arg;
  Mat<Real> z_conv;

  Mat<Real> seq_in;  // row t * B + b
  std::vector<Mat<Real>> layer_out;
  std::vector<std::vector<nn::GruStepCache<Real>>> gru_cache;
  Mat<Real> h_last;
  Mat<Real> z_rec;

  Mat<Real> mask_conv, mask_rec, mask_fusion, mask_head;
  Mat<Real> zc_in, zr_in;  // transform inputs (after stream dropout)
  Mat<Real> tc, tr;        // sigmoid transforms
  Mat<Real> z_f;

  Mat<Real> head_in;
  NetOutput<Real> out;
};

template <typename Real>
SceneNet<Real>::SceneNet(Architecture arch, std::uint64_t init_seed)
    : arch_(std::move(arch)), params_(make_layout<Real>(arch_)) {
  for (auto& block : params_) {
    if (block.shape.size() != 2) continue;  // biases start at zero
    const double a = glorot_bound(block.shape[0], block.shape[1]);
    Rng rng(derive_seed(init_seed, block.name));
    for (auto& v : block.values) v = static_cast<Real>(rng.uniform(-a, a));
  }
}

template <typename Real>
SceneNet<Real>::SceneNet(Architecture arch, ParamSet<Real> params)
    : arch_(std::move(arch)), params_(std::move(params)) {
  if (!params_.same_layout(make_layout<Real>(arch_))) {
    throw DataError("parameter layout does not match the architecture");
  }
}

template <typename Real>
typename SceneNet<Real>::Forward SceneNet<Real>::run(std::span<const LteTensor* const> batch,
                                                     Mode mode, std::uint64_t seed) const {
  const Architecture& a = arch_;
  const Layout l = index_layout(a, params_);
  if (batch.empty()) throw DataError("empty batch");
  const int frames = batch.front()->frames;
  for (const auto* x : batch) {
    if (x->features != a.features || x->channels != a.channels || x->frames != frames) {
      throw DataError("input tensor shape does not match the architecture or the batch");
    }
  }
  if (frames < a.min_frames()) {
    throw DataError("input has " + std::to_string(frames) + " frames; model needs at least " +
                    std::to_string(a.min_frames()));
  }

  Forward f;
  f.batch = static_cast<int>(batch.size());
  f.frames = frames;
  const int B = f.batch;
  const int F = a.features;
  const int D = a.channels;
  const int T = frames;
  for (const auto* x : batch) {
    if constexpr (std::is_same_v<Real, float>) {
      f.inputs.push_back(x->values.data());
    } else {
      f.input_storage.emplace_back(x->values.begin(), x->values.end());
      f.inputs.push_back(f.input_storage.back().data());
    }
  }
  const bool train = mode == Mode::train;

  if (has_cnn(a)) {
    const int Q = a.filters_per_width;
    const int G = static_cast<int>(a.widths.size());
    f.z_conv.setZero(B, G * Q);
    f.conv_arg.assign(static_cast<std::size_t>(G), std::vector<ConvArg>(static_cast<std::size_t>(B * Q)));
    for (int g = 0; g < G; ++g) {
      const int w = a.widths[static_cast<std::size_t>(g)];
      const int out_t = T - w + 1;
      const auto W = params_.matrix(l.conv_w[static_cast<std::size_t>(g)]);
      const auto bias = params_.vector(l.conv_b[static_cast<std::size_t>(g)]);
      Mat<Real> o(out_t, Q);
      std::vector<Real> best(static_cast<std::size_t>(Q));
      for (int b = 0; b < B; ++b) {
        auto* args = f.conv_arg[static_cast<std::size_t>(g)].data() + static_cast<std::size_t>(b) * Q;
        for (int j = 0; j < D; ++j) {
          const Real* ch = f.inputs[static_cast<std::size_t>(b)] + static_cast<std::size_t>(j) * T * F;
          Eigen::Map<const Mat<Real>, 0, Eigen::OuterStride<>> patches(ch, out_t, w * F,
                                                                      Eigen::OuterStride<>(F));
          o.noalias() = patches * W;
          for (int i = 0; i < out_t; ++i) {
            const Real* row = o.data() + static_cast<std::size_t>(i) * Q;
            if (i == 0 && j == 0) {
              for (int q = 0; q < Q; ++q) {
                best[static_cast<std::size_t>(q)] = row[q];
                args[q] = {0, 0, false};
              }
              continue;
            }
            for (int q = 0; q < Q; ++q) {
              // Lexicographic (i, j) tie rule: on equality only a smaller i wins.
              if (row[q] > best[static_cast<std::size_t>(q)] ||
                  (row[q] == best[static_cast<std::size_t>(q)] && i < args[q].i)) {
                best[static_cast<std::size_t>(q)] = row[q];
                args[q].i = i;
                args[q].j = j;
              }
            }
          }
        }
        for (int q = 0; q < Q; ++q) {
          const Real pre = best[static_cast<std::size_t>(q)] + bias(q);
          args[q].active = pre > Real(0);
          f.z_conv(b, g * Q + q) = args[q].active ? pre : Real(0);
        }
      }
    }
  }

  if (has_rnn(a)) {
    const int H = a.hidden;
    f.seq_in.resize(static_cast<Eigen::Index>(T) * B, F * D);
    for (int t = 0; t < T; ++t) {
      for (int b = 0; b < B; ++b) {
        Real* row = f.seq_in.data() + (static_cast<std::size_t>(t) * B + b) * F * D;
        const Real* x = f.inputs[static_cast<std::size_t>(b)];
        for (int d = 0; d < D; ++d) {
          const Real* src = x + (static_cast<std::size_t>(d) * T + t) * F;
          std::copy(src, src + F, row + static_cast<std::size_t>(d) * F);
        }
      }
    }
    f.layer_out.resize(static_cast<std::size_t>(a.gru_layers));
    f.gru_cache.assign(static_cast<std::size_t>(a.gru_layers),
                       std::vector<nn::GruStepCache<Real>>(static_cast<std::size_t>(T)));
    const Mat<Real>* in = &f.seq_in;
    for (int k = 0; k < a.gru_layers; ++k) {
      const auto W = params_.matrix(l.gru_w[static_cast<std::size_t>(k)]);
      const auto U = params_.matrix(l.gru_u[static_cast<std::size_t>(k)]);
      const auto bias = params_.vector(l.gru_b[static_cast<std::size_t>(k)]);
      const Mat<Real> xw = nn::dense<Real>(*in, W, bias);
      Mat<Real>& out = f.layer_out[static_cast<std::size_t>(k)];
      out.resize(static_cast<Eigen::Index>(T) * B, H);
      Mat<Real> h = Mat<Real>::Zero(B, H);
      for (int t = 0; t < T; ++t) {
        h = nn::gru_step_projected<Real>(xw.middleRows(static_cast<Eigen::Index>(t) * B, B), U, h,
                                         &f.gru_cache[static_cast<std::size_t>(k)][static_cast<std::size_t>(t)]);
        out.middleRows(static_cast<Eigen::Index>(t) * B, B) = h;
      }
      in = &out;
    }
    f.h_last = f.layer_out.back().bottomRows(B);
    f.z_rec = nn::dense<Real>(f.h_last, params_.matrix(l.out_w), params_.vector(l.out_b));
  }

  auto maybe_mask = [&](const Mat<Real>& src, double rate, const char* name, Mat<Real>& mask) {
    if (!train || rate == 0.0) {
      mask.resize(0, 0);
      return src;
    }
    mask = nn::dropout_mask<Real>(src.rows(), src.cols(), rate, derive_seed(seed, name));
    return Mat<Real>(src.cwiseProduct(mask));
  };

  switch (a.kind) {
    case ModelKind::cnn:
      f.out.features = f.z_conv;
      f.head_in = maybe_mask(f.z_conv, a.cnn_dropout, "dropout.conv", f.mask_head);
      break;
    case ModelKind::rnn:
      f.out.features = f.z_rec;
      f.head_in = maybe_mask(f.z_rec, a.rnn_dropout, "dropout.rec", f.mask_head);
      break;
    case ModelKind::crnn: {
      f.zc_in = maybe_mask(f.z_conv, a.cnn_dropout, "dropout.conv", f.mask_conv);
      f.zr_in = maybe_mask(f.z_rec, a.rnn_dropout, "dropout.rec", f.mask_rec);
      f.tc = nn::sigmoid<Real>(nn::dense<Real>(f.zc_in, params_.matrix(l.fc_w), params_.vector(l.fc_b)));
      f.tr = nn::sigmoid<Real>(nn::dense<Real>(f.zr_in, params_.matrix(l.fr_w), params_.vector(l.fr_b)));
      const int M = a.fusion_size;
      switch (a.fusion) {
        case EarlyFusion::sum: f.z_f = f.tc + f.tr; break;
        case EarlyFusion::max: f.z_f = f.tc.cwiseMax(f.tr); break;
        case EarlyFusion::concat:
          f.z_f.resize(B, 2 * M);
          f.z_f.leftCols(M) = f.tc;
          f.z_f.rightCols(M) = f.tr;
          break;
      }
      f.out.features = f.z_f;
      f.head_in = maybe_mask(f.z_f, a.fusion_dropout, "dropout.fusion", f.mask_head);
      break;
    }
  }

  f.out.logits = nn::dense<Real>(f.head_in, params_.matrix(l.head_w), params_.vector(l.head_b));
  f.out.posteriors = nn::softmax<Real>(f.out.logits);
  return f;
}

template <typename Real>
NetOutput<Real> SceneNet<Real>::forward(std::span<const LteTensor* const> batch, Mode mode,
                                        std::uint64_t dropout_seed) const {
  return std::move(run(batch, mode, dropout_seed).out);
}

template <typename Real>
double SceneNet<Real>::loss_and_gradient(std::span<const LteTensor* const> batch,
                                         std::span<const int> labels, double lambda, Mode mode,
                                         std::uint64_t dropout_seed, ParamSet<Real>& grads,
                                         NetOutput<Real>* out) const {
  const Architecture& a = arch_;
  if (labels.size() != batch.size()) throw DataError("label count does not match the batch");
  if (!grads.same_layout(params_)) grads = params_.zeros_like();
  else grads.zero();

  Forward f = run(batch, mode, dropout_seed);
  const Layout l = index_layout(a, params_);
  const int B = f.batch;

  // Cross-entropy from logits (log-sum-exp) and its gradient p - y.
  double loss = 0.0;
  Mat<Real> dlogits = f.out.posteriors;
  for (int n = 0; n < B; ++n) {
    const int y = labels[static_cast<std::size_t>(n)];
    if (y < 0 || y >= a.n_classes) throw DataError("label out of range");
    const auto row = f.out.logits.row(n);
    const double mx = static_cast<double>(row.maxCoeff());
    double se = 0.0;
    for (Eigen::Index c = 0; c < row.size(); ++c) se += std::exp(static_cast<double>(row(c)) - mx);
    loss += mx + std::log(se) - static_cast<double>(row(y));
    dlogits(n, y) -= Real(1);
  }
  loss += 0.5 * lambda * params_.squared_norm();

  auto gw_head = grads.matrix(l.head_w);
  auto gb_head = grads.vector(l.head_b);
  Mat<Real> dfeat = nn::dense_backward<Real>(f.head_in, params_.matrix(l.head_w), dlogits, gw_head, gb_head);
  if (f.mask_head.size() > 0) dfeat = dfeat.cwiseProduct(f.mask_head);

  Mat<Real> dz_conv, dz_rec;
  switch (a.kind) {
    case ModelKind::cnn: dz_conv = std::move(dfeat); break;
    case ModelKind::rnn: dz_rec = std::move(dfeat); break;
    case ModelKind::crnn: {
      const int M = a.fusion_size;
      Mat<Real> dtc, dtr;
      switch (a.fusion) {
        case EarlyFusion::sum:
          dtc = dfeat;
          dtr = dfeat;
          break;
        case EarlyFusion::max:
          // Ties route to the convolutional stream.
          dtc = ((f.tc.array() >= f.tr.array()).template cast<Real>() * dfeat.array()).matrix();
          dtr = dfeat - dtc;
          break;
        case EarlyFusion::concat:
          dtc = dfeat.leftCols(M);
          dtr = dfeat.rightCols(M);
          break;
      }
      const Mat<Real> dac = dtc.array() * f.tc.array() * (Real(1) - f.tc.array());
      const Mat<Real> dar = dtr.array() * f.tr.array() * (Real(1) - f.tr.array());
      auto gw_c = grads.matrix(l.fc_w);
      auto gb_c = grads.vector(l.fc_b);
      auto gw_r = grads.matrix(l.fr_w);
      auto gb_r = grads.vector(l.fr_b);
      dz_conv = nn::dense_backward<Real>(f.zc_in, params_.matrix(l.fc_w), dac, gw_c, gb_c);
      dz_rec = nn::dense_backward<Real>(f.zr_in, params_.matrix(l.fr_w), dar, gw_r, gb_r);
      if (f.mask_conv.size() > 0) dz_conv = dz_conv.cwiseProduct(f.mask_conv);
      if (f.mask_rec.size() > 0) dz_rec = dz_rec.cwiseProduct(f.mask_rec);
      break;
    }
  }

  if (has_cnn(a)) {
    const int Q = a.filters_per_width;
    const int F = a.features;
    const int T = f.frames;
    for (std::size_t g = 0; g < a.widths.size(); ++g) {
      const int w = a.widths[g];
      auto dW = grads.matrix(l.conv_w[g]);
      auto db = grads.vector(l.conv_b[g]);
      for (int b = 0; b < B; ++b) {
        const ConvArg* args = f.conv_arg[g].data() + static_cast<std::size_t>(b) * Q;
        const Real* x = f.inputs[static_cast<std::size_t>(b)];
        for (int q = 0; q < Q; ++q) {
          if (!args[q].active) continue;
          const Real gq = dz_conv(b, static_cast<Eigen::Index>(g) * Q + q);
          if (gq == Real(0)) continue;
          const Real* patch = x + (static_cast<std::size_t>(args[q].j) * T + args[q].i) * F;
          for (int r = 0; r < w * F; ++r) dW(r, q) += gq * patch[r];
          db(q) += gq;
        }
      }
    }
  }

  if (has_rnn(a)) {
    const int T = f.frames;
    const int H = a.hidden;
    auto gw_out = grads.matrix(l.out_w);
    auto gb_out = grads.vector(l.out_b);
    Mat<Real> dh_last = nn::dense_backward<Real>(f.h_last, params_.matrix(l.out_w), dz_rec, gw_out, gb_out);
    Mat<Real> dout = Mat<Real>::Zero(static_cast<Eigen::Index>(T) * B, H);
    dout.bottomRows(B) = dh_last;
    for (int k = a.gru_layers - 1; k >= 0; --k) {
      const auto ks = static_cast<std::size_t>(k);
      const auto W = params_.matrix(l.gru_w[ks]);
      const auto U = params_.matrix(l.gru_u[ks]);
      Mat<Real> dxw_all(static_cast<Eigen::Index>(T) * B, 3 * H);
      Mat<Real> dh = Mat<Real>::Zero(B, H);
      Mat<Real> dxw;
      auto gu = grads.matrix(l.gru_u[ks]);
      for (int t = T - 1; t >= 0; --t) {
        dh += dout.middleRows(static_cast<Eigen::Index>(t) * B, B);
        dh = nn::gru_step_backward<Real>(f.gru_cache[ks][static_cast<std::size_t>(t)], U, dh, gu, dxw);
        dxw_all.middleRows(static_cast<Eigen::Index>(t) * B, B) = dxw;
      }
      const Mat<Real>& in = k == 0 ? f.seq_in : f.layer_out[ks - 1];
      grads.matrix(l.gru_w[ks]).noalias() += in.transpose() * dxw_all;
      grads.vector(l.gru_b[ks]) += dxw_all.colwise().sum();
      if (k > 0) dout.noalias() = dxw_all * W.transpose();
    }
  }

  if (lambda != 0.0) {
    for (int b = 0; b < params_.size(); ++b) {
      auto& g = grads[b].values;
      const auto& p = params_[b].values;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += static_cast<Real>(lambda) * p[i];
    }
  }
  if (out) *out = std::move(f.out);
  return loss;
}

template class SceneNet<float>;
template class SceneNet<double>;

nlohmann::json TrainConfig::to_json() const {
  return {{"lambda", lambda},
          {"learning_rate", learning_rate},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"seed", seed}};
}

TrainResult train_model(SceneNet<float>& model, std::span<const LteTensor> data,
                        std::span<const int> labels, const TrainConfig& cfg,
                        const EpochCallback& on_epoch) {
  const int C = model.arch().n_classes;
  if (data.size() != labels.size() || data.empty()) {
    throw DataError("training data and labels must be non-empty and aligned");
  }
  if (cfg.batch_size < 1 || cfg.epochs < 0 || !(cfg.learning_rate > 0.0) || cfg.lambda < 0.0) {
    throw ConfigError("invalid training configuration");
  }
  std::vector<int> counts(static_cast<std::size_t>(C), 0);
  for (int y : labels) {
    if (y < 0 || y >= C) throw DataError("training label out of range");
    ++counts[static_cast<std::size_t>(y)];
  }
  for (int c = 0; c < C; ++c) {
    if (counts[static_cast<std::size_t>(c)] == 0) {
      throw DataError("category " + std::to_string(c) + " missing from training data");
    }
  }

  nn::AdamState<float> adam;
  adam.lr = cfg.learning_rate;
  ParamSet<float> grads = model.params().zeros_like();
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainResult result;
  long step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
    shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::vector<const LteTensor*> batch;
    std::vector<int> batch_labels;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      batch.clear();
      batch_labels.clear();
      for (std::size_t i = start; i < stop; ++i) {
        batch.push_back(&data[order[i]]);
        batch_labels.push_back(labels[order[i]]);
      }
      NetOutput<float> out;
      const double loss = model.loss_and_gradient(
          batch, batch_labels, cfg.lambda, nn::Mode::train,
          derive_seed(cfg.seed, "dropout", static_cast<std::uint64_t>(step)), grads, &out);
      if (!std::isfinite(loss)) {
        throw NumericalError("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                             ", step " + std::to_string(step));
      }
      nn::adam_step(model.params(), grads, adam);
      ++step;
      loss_sum += loss;
      for (Eigen::Index n = 0; n < out.posteriors.rows(); ++n) {
        Eigen::Index arg;
        out.posteriors.row(n).maxCoeff(&arg);
        if (arg == batch_labels[static_cast<std::size_t>(n)]) ++correct;
      }
    }
    EpochStats stats{epoch, loss_sum / static_cast<double>(data.size()),
                     100.0 * static_cast<double>(correct) / static_cast<double>(data.size())};
    result.trace.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return result;
}

namespace {

template <typename Fn>
Mat<float> batched_eval(const SceneNet<float>& model, std::span<const LteTensor> data,
                        int batch_size, int cols, Fn pick) {
  Mat<float> out(static_cast<Eigen::Index>(data.size()), cols);
  std::vector<const LteTensor*> batch;
  for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t stop = std::min(data.size(), start + static_cast<std::size_t>(batch_size));
    batch.clear();
    for (std::size_t i = start; i < stop; ++i) batch.push_back(&data[i]);
    const auto res = model.forward(batch, nn::Mode::eval);
    out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(stop - start)) = pick(res);
  }
  return out;
}

}  // namespace

Mat<float> extract_features(const SceneNet<float>& model, std::span<const LteTensor> data,
                            int batch_size) {
  return batched_eval(model, data, batch_size, model.arch().feature_dim(),
                      [](const NetOutput<float>& r) { return r.features; });
}

Mat<float> predict_posteriors(const SceneNet<float>& model, std::span<const LteTensor> data,
                              int batch_size) {
  return batched_eval(model, data, batch_size, model.arch().n_classes,
                      [](const NetOutput<float>& r) { return r.posteriors; });
}

void save_checkpoint(const std::filesystem::path& path, const SceneNet<float>& model,
                     const nlohmann::json& extra) {
  Artifact art;
  art.kind = "scene_net";
  art.header = extra;
  art.header["architecture"] = model.arch().to_json();
  for (const auto& b : model.params()) art.add(b.name, b.shape, {b.values.begin(), b.values.end()});
  write_artifact(path, art);
}

SceneNet<float> load_checkpoint(const std::filesystem::path& path) {
  const Artifact art = read_artifact(path, "scene_net");
  Architecture arch;
  try {
    arch = Architecture::from_json(art.header.at("architecture"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  ParamSet<float> params;
  for (const auto& b : art.blocks) {
    const int i = params.add(b.name, b.shape);
    params[i].values.assign(b.values.begin(), b.values.end());
  }
  return SceneNet<float>(arch, std::move(params));
}

}  // namespace asc
