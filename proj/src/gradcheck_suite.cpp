#include "asc/gradcheck_suite.h"

#include "asc/nn/layers.h"
#include "asc/random.h"

namespace asc {

using nn::GradCheckResult;

Architecture tiny_architecture(ModelKind kind, EarlyFusion fusion) {
  Architecture a;
  a.kind = kind;
  a.fusion = fusion;
  a.n_classes = 3;
  a.features = 2 * (a.n_classes - 1);
  a.channels = 6;
  a.filters_per_width = 4;
  a.hidden = 8;
  a.fusion_size = 8;
  return a;
}

namespace {

constexpr int kTinyFrames = 12;
constexpr int kTinyBatch = 3;

Mat<double> random_mat(Rng& rng, int r, int c, double scale = 1.0) {
  Mat<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.uniform(-1.0, 1.0);
  return m;
}

void fill(ParamSet<double>& p, Rng& rng, double scale) {
  for (auto& b : p) {
    for (auto& v : b.values) v = scale * rng.uniform(-1.0, 1.0);
  }
}

void append_rows(std::vector<GradCheckRow>& rows, const std::string& target, const GradCheckResult& r,
                 double tol) {
  for (const auto& b : r.blocks) rows.push_back({target, b.name, b.checked, b.max_rel_error, b.max_rel_error < tol});
}

GradCheckResult check_dense(const GradCheckSuiteOptions& o, bool with_sigmoid) {
  Rng rng(derive_seed(o.seed, with_sigmoid ? "gc.sigmoid" : "gc.dense"));
  const Mat<double> x = random_mat(rng, 4, 5);
  const Mat<double> c = random_mat(rng, 4, 3);
  ParamSet<double> p;
  p.add("W", {5, 3});
  p.add("b", {3});
  fill(p, rng, 0.5);
  auto forward = [&] {
    Mat<double> y = nn::dense<double>(x, p.matrix(0), p.vector(1));
    return with_sigmoid ? nn::sigmoid<double>(y) : y;
  };
  auto loss = [&] { return forward().cwiseProduct(c).sum(); };
  ParamSet<double> g = p.zeros_like();
  Mat<double> dy = c;
  if (with_sigmoid) {
    const Mat<double> s = forward();
    dy = (c.array() * s.array() * (1.0 - s.array())).matrix();
  }
  auto gw = g.matrix(0);
  auto gb = g.vector(1);
  nn::dense_backward<double>(x, p.matrix(0), dy, gw, gb);
  return nn::grad_check(loss, p, g, o.eps, o.coords_per_block, o.seed);
}

GradCheckResult check_softmax_ce(const GradCheckSuiteOptions& o) {
  Rng rng(derive_seed(o.seed, "gc.softmax"));
  const std::vector<int> labels{0, 2, 1, 2};
  ParamSet<double> p;
  p.add("logits", {4, 3});
  fill(p, rng, 2.0);
  auto loss = [&] {
    return nn::cross_entropy_l2<double>(nn::softmax<double>(p.matrix(0)), labels, 0.0, 0.0);
  };
  ParamSet<double> g = p.zeros_like();
  g.matrix(0) = nn::softmax<double>(p.matrix(0));
  for (std::size_t n = 0; n < labels.size(); ++n) g.matrix(0)(static_cast<Eigen::Index>(n), labels[n]) -= 1.0;
  return nn::grad_check(loss, p, g, o.eps, o.coords_per_block, o.seed);
}

GradCheckResult check_gru(const GradCheckSuiteOptions& o) {
  Rng rng(derive_seed(o.seed, "gc.gru"));
  constexpr int B = 3, I = 5, H = 4, T = 4;
  std::vector<Mat<double>> xs;
  for (int t = 0; t < T; ++t) xs.push_back(random_mat(rng, B, I));
  const Mat<double> c = random_mat(rng, B, H);
  ParamSet<double> p;
  p.add("W", {I, 3 * H});
  p.add("U", {H, 3 * H});
  p.add("b", {3 * H});
  fill(p, rng, 0.6);
  auto run = [&](std::vector<nn::GruStepCache<double>>* caches) {
    Mat<double> h = Mat<double>::Zero(B, H);
    for (int t = 0; t < T; ++t) {
      h = nn::gru_step<double>(p.matrix(0), p.matrix(1), p.vector(2), xs[static_cast<std::size_t>(t)], h,
                               caches ? &(*caches)[static_cast<std::size_t>(t)] : nullptr);
    }
    return h;
  };
  auto loss = [&] { return run(nullptr).cwiseProduct(c).sum(); };
  std::vector<nn::GruStepCache<double>> caches(T);
  run(&caches);
  ParamSet<double> g = p.zeros_like();
  auto gu = g.matrix(1);
  Mat<double> dh = c;
  Mat<double> dxw;
  for (int t = T - 1; t >= 0; --t) {
    dh = nn::gru_step_backward<double>(caches[static_cast<std::size_t>(t)], p.matrix(1), dh, gu, dxw);
    g.matrix(0).noalias() += xs[static_cast<std::size_t>(t)].transpose() * dxw;
    g.vector(2) += dxw.colwise().sum();
  }
  if (o.corrupt_gru) g.matrix(1) *= -1.0;
  return nn::grad_check(loss, p, g, o.eps, o.coords_per_block, o.seed);
}

}  // namespace

GradCheckResult check_architecture(const Architecture& arch, const GradCheckSuiteOptions& opts) {
  SceneNet<double> net(arch, derive_seed(opts.seed, "gc.init"));
  Rng rng(derive_seed(opts.seed, "gc.inputs"));
  // Larger-than-Glorot weights keep activations away from flat regions.
  fill(net.params(), rng, 0.5);
  std::vector<LteTensor> xs;
  std::vector<int> labels;
  for (int n = 0; n < kTinyBatch; ++n) {
    LteTensor x(arch.features, kTinyFrames, arch.channels);
    for (auto& v : x.values) v = static_cast<float>(rng.uniform());
    xs.push_back(std::move(x));
    labels.push_back(n % arch.n_classes);
  }
  std::vector<const LteTensor*> batch;
  for (const auto& x : xs) batch.push_back(&x);
  const double lambda = 1e-3;
  const std::uint64_t dseed = derive_seed(opts.seed, "gc.dropout");
  ParamSet<double> grads = net.params().zeros_like();
  net.loss_and_gradient(batch, labels, lambda, nn::Mode::train, dseed, grads);
  if (opts.corrupt_gru) {
    for (auto& b : grads) {
      if (b.name.find("gru") != std::string::npos && b.name.ends_with(".U")) {
        for (auto& v : b.values) v = -v;
      }
    }
  }
  ParamSet<double> scratch = grads.zeros_like();
  auto loss = [&] { return net.loss_and_gradient(batch, labels, lambda, nn::Mode::train, dseed, scratch); };
  return nn::grad_check(loss, net.params(), grads, opts.eps, opts.coords_per_block, opts.seed);
}

std::vector<GradCheckRow> run_gradcheck_suite(const GradCheckSuiteOptions& opts) {
  std::vector<GradCheckRow> rows;
  append_rows(rows, "dense", check_dense(opts, false), opts.tolerance);
  append_rows(rows, "dense+sigmoid", check_dense(opts, true), opts.tolerance);
  append_rows(rows, "softmax+cross-entropy", check_softmax_ce(opts), opts.tolerance);
  append_rows(rows, "gru (4 steps)", check_gru(opts), opts.tolerance);
  append_rows(rows, "cnn", check_architecture(tiny_architecture(ModelKind::cnn), opts), opts.tolerance);
  append_rows(rows, "rnn", check_architecture(tiny_architecture(ModelKind::rnn), opts), opts.tolerance);
  for (EarlyFusion f : {EarlyFusion::sum, EarlyFusion::max, EarlyFusion::concat}) {
    append_rows(rows, std::string("crnn-") + to_string(f),
                check_architecture(tiny_architecture(ModelKind::crnn, f), opts), opts.tolerance);
  }
  return rows;
}

}  // namespace asc
