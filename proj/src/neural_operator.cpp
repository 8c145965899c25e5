#include "nod/neural_operator.hpp"

#include <Eigen/Dense>

#include <cmath>

#include "nod/errors.hpp"
#include "nod/image.hpp"

namespace nod::op {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ECMap = Eigen::Map<const EMat>;

void OperatorConfig::validate() const {
  if (latent_dim < 1) throw config_error("operator: latent_dim must be >= 1");
  if (num_layers < 1) throw config_error("operator: num_layers must be >= 1");
  if (encoder_blocks < 1 || encoder_channels < 1)
    throw config_error("operator: encoder configuration must be positive");
  if (head_hidden < 1) throw config_error("operator: head_hidden must be >= 1");
  if (!(max_scale > 1.0)) throw config_error("operator: max_scale must be > 1");
}

TargetGrid make_target_grid(int lr_h, int lr_w, int out_h, int out_w) {
  if (lr_h < 1 || lr_w < 1 || out_h < 1 || out_w < 1)
    throw internal_error("make_target_grid: empty grid");
  TargetGrid t;
  t.h = out_h;
  t.w = out_w;
  const int p = out_h * out_w;
  t.src_index = std::make_shared<std::vector<int>>(static_cast<size_t>(p));
  t.extras = Tensor({p, 4});
  t.coords = Tensor({p, 2});
  const double cell_h = 2.0 / out_h, cell_w = 2.0 / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double ty = -1.0 + (y + 0.5) * cell_h;
    int sy = static_cast<int>((ty + 1.0) * 0.5 * lr_h);
    sy = std::min(lr_h - 1, std::max(0, sy));
    const double sy_center = -1.0 + (sy + 0.5) * 2.0 / lr_h;
    for (int x = 0; x < out_w; ++x) {
      const double tx = -1.0 + (x + 0.5) * cell_w;
      int sx = static_cast<int>((tx + 1.0) * 0.5 * lr_w);
      sx = std::min(lr_w - 1, std::max(0, sx));
      const double sx_center = -1.0 + (sx + 0.5) * 2.0 / lr_w;
      const int i = y * out_w + x;
      (*t.src_index)[static_cast<size_t>(i)] = sy * lr_w + sx;
      // Offsets in LR-cell units so their scale is resolution independent.
      t.extras.at2(i, 0) = (ty - sy_center) * lr_h * 0.5;
      t.extras.at2(i, 1) = (tx - sx_center) * lr_w * 0.5;
      t.extras.at2(i, 2) = cell_h;
      t.extras.at2(i, 3) = cell_w;
      t.coords.at2(i, 0) = ty;
      t.coords.at2(i, 1) = tx;
    }
  }
  return t;
}

AttentionWeights AttentionWeights::random(int d, Rng& rng) {
  AttentionWeights w;
  w.wq = nn::init_uniform_fan_in(rng, {d, d}, d);
  w.wk = nn::init_uniform_fan_in(rng, {d, d}, d);
  w.wv = nn::init_uniform_fan_in(rng, {d, d}, d);
  w.k_gamma = Tensor::full({d}, 1.0);
  w.k_beta = Tensor::zeros({d});
  w.v_gamma = Tensor::full({d}, 1.0);
  w.v_beta = Tensor::zeros({d});
  return w;
}

namespace {

// Row-wise layer norm with affine parameters (pure tensor version).
Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       double eps = 1e-5) {
  const int p = x.dim(0), d = x.dim(1);
  Tensor out({p, d});
  for (int i = 0; i < p; ++i) {
    double mean = 0.0;
    for (int j = 0; j < d; ++j) mean += x.at2(i, j);
    mean /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      const double c = x.at2(i, j) - mean;
      var += c * c;
    }
    var /= d;
    const double is = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < d; ++j)
      out.at2(i, j) = (x.at2(i, j) - mean) * is * gamma[j] + beta[j];
  }
  return out;
}

Tensor matmul_plain(const Tensor& a, const Tensor& b) {
  Tensor out({a.dim(0), b.dim(1)});
  ECMap ma(a.data(), a.dim(0), a.dim(1));
  ECMap mb(b.data(), b.dim(0), b.dim(1));
  Eigen::Map<EMat>(out.data(), out.dim(0), out.dim(1)).noalias() = ma * mb;
  return out;
}

}  // namespace

Tensor galerkin_attention(const Tensor& phi, const AttentionWeights& w, GalerkinOrder order) {
  if (phi.rank() != 2) throw internal_error("galerkin_attention: phi must be [P,D]");
  const int p = phi.dim(0);
  const Tensor q = matmul_plain(phi, w.wq);
  const Tensor k = layer_norm_rows(matmul_plain(phi, w.wk), w.k_gamma, w.k_beta);
  const Tensor v = layer_norm_rows(matmul_plain(phi, w.wv), w.v_gamma, w.v_beta);
  Tensor out;
  if (order == GalerkinOrder::LinearCost) {
    Tensor ktv({k.dim(1), v.dim(1)});
    ECMap mk(k.data(), k.dim(0), k.dim(1));
    ECMap mv(v.data(), v.dim(0), v.dim(1));
    Eigen::Map<EMat>(ktv.data(), ktv.dim(0), ktv.dim(1)).noalias() = mk.transpose() * mv;
    out = matmul_plain(q, ktv);
  } else {
    Tensor qkt({p, p});
    ECMap mq(q.data(), q.dim(0), q.dim(1));
    ECMap mk(k.data(), k.dim(0), k.dim(1));
    Eigen::Map<EMat>(qkt.data(), p, p).noalias() = mq * mk.transpose();
    out = matmul_plain(qkt, v);
  }
  return scaled(out, 1.0 / static_cast<double>(p));
}

Tensor softmax_kernel_integral(const Tensor& phi, const AttentionWeights& w) {
  if (phi.rank() != 2) throw internal_error("softmax_kernel_integral: phi must be [P,D]");
  const int p = phi.dim(0), d = phi.dim(1);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  const Tensor q = matmul_plain(phi, w.wq);
  const Tensor k = matmul_plain(phi, w.wk);
  const Tensor v = matmul_plain(phi, w.wv);
  // scores[i][j] = <q_i, k_j> / sqrt(d); weights normalize each column over
  // its rows (the denominator runs over queries).
  Tensor scores({p, p});
  {
    ECMap mq(q.data(), p, d);
    ECMap mk(k.data(), p, d);
    Eigen::Map<EMat>(scores.data(), p, p).noalias() = mq * mk.transpose() * inv_sqrt_d;
  }
  Tensor weights({p, p});
  for (int j = 0; j < p; ++j) {
    double mx = scores.at2(0, j);
    for (int i = 1; i < p; ++i) mx = std::max(mx, scores.at2(i, j));
    double denom = 0.0;
    for (int i = 0; i < p; ++i) denom += std::exp(scores.at2(i, j) - mx);
    for (int i = 0; i < p; ++i) weights.at2(i, j) = std::exp(scores.at2(i, j) - mx) / denom;
  }
  return matmul_plain(weights, v);
}

Tensor softmax_kernel_integral_reference(const Tensor& phi, const AttentionWeights& w) {
  const int p = phi.dim(0), d = phi.dim(1);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  auto project = [&](const Tensor& m, int row) {
    std::vector<double> out(static_cast<size_t>(d), 0.0);
    for (int j = 0; j < d; ++j)
      for (int l = 0; l < d; ++l) out[static_cast<size_t>(j)] += phi.at2(row, l) * m.at2(l, j);
    return out;
  };
  auto dot = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += a[static_cast<size_t>(j)] * b[static_cast<size_t>(j)];
    return s;
  };
  std::vector<std::vector<double>> qs, ks, vs;
  for (int i = 0; i < p; ++i) {
    qs.push_back(project(w.wq, i));
    ks.push_back(project(w.wk, i));
    vs.push_back(project(w.wv, i));
  }
  Tensor out({p, d});
  for (int target = 0; target < p; ++target) {
    for (int i = 0; i < p; ++i) {
      double mx = -1e300;
      for (int j = 0; j < p; ++j) mx = std::max(mx, dot(qs[static_cast<size_t>(j)], ks[static_cast<size_t>(i)]) * inv_sqrt_d);
      double denom = 0.0;
      for (int j = 0; j < p; ++j)
        denom += std::exp(dot(qs[static_cast<size_t>(j)], ks[static_cast<size_t>(i)]) * inv_sqrt_d - mx);
      const double num = std::exp(dot(qs[static_cast<size_t>(target)], ks[static_cast<size_t>(i)]) * inv_sqrt_d - mx);
      const double kw = num / denom;
      for (int j = 0; j < d; ++j) out.at2(target, j) += kw * vs[static_cast<size_t>(i)][static_cast<size_t>(j)];
    }
  }
  return out;
}

EdsrEncoder EdsrEncoder::make(nn::ParamRegistry& reg, Rng& rng, const std::string& name,
                              int in_ch, int channels, int num_blocks) {
  EdsrEncoder e;
  e.head = nn::Conv2d::make(reg, rng, name + ".head", in_ch, channels, 3, 1, 1);
  for (int b = 0; b < num_blocks; ++b) {
    const std::string bn = name + ".block" + std::to_string(b);
    e.blocks.push_back({nn::Conv2d::make(reg, rng, bn + ".conv0", channels, channels, 3, 1, 1),
                        nn::Conv2d::make(reg, rng, bn + ".conv1", channels, channels, 3, 1, 1)});
  }
  e.tail = nn::Conv2d::make(reg, rng, name + ".tail", channels, channels, 3, 1, 1);
  return e;
}

nn::Val EdsrEncoder::forward(nn::Graph& g, const nn::ParamCtx& ctx, nn::Val x) const {
  nn::Val h0 = head(g, ctx, x);
  nn::Val h = h0;
  for (const auto& b : blocks) h = g.add(h, b[1](g, ctx, g.relu(b[0](g, ctx, h))));
  return g.add(tail(g, ctx, h), h0);
}

GalerkinLayer GalerkinLayer::make(nn::ParamRegistry& reg, Rng& rng, const std::string& name,
                                  int d) {
  GalerkinLayer l;
  l.wq = nn::Linear::make(reg, rng, name + ".wq", d, d, /*bias=*/false);
  l.wk = nn::Linear::make(reg, rng, name + ".wk", d, d, /*bias=*/false);
  l.wv = nn::Linear::make(reg, rng, name + ".wv", d, d, /*bias=*/false);
  l.ln_k = nn::LayerNorm::make(reg, name + ".ln_k", d);
  l.ln_v = nn::LayerNorm::make(reg, name + ".ln_v", d);
  l.ffn1 = nn::Linear::make(reg, rng, name + ".ffn1", d, d);
  l.ffn2 = nn::Linear::make(reg, rng, name + ".ffn2", d, d);
  return l;
}

nn::Val GalerkinLayer::forward(nn::Graph& g, const nn::ParamCtx& ctx, nn::Val phi) const {
  const int p = phi->value.dim(0);
  nn::Val q = wq(g, ctx, phi);
  nn::Val k = ln_k(g, ctx, wk(g, ctx, phi));
  nn::Val v = ln_v(g, ctx, wv(g, ctx, phi));
  nn::Val ktv = g.matmul(k, v, /*trans_a=*/true, /*trans_b=*/false);  // [D,D]
  nn::Val attn = g.scale(g.matmul(q, ktv), 1.0 / static_cast<double>(p));
  nn::Val h = g.add(attn, phi);
  nn::Val f = ffn2(g, ctx, g.gelu(ffn1(g, ctx, h)));
  return g.add(phi, f);
}

void NeuralOperator::build(Rng& rng) {
  cfg.validate();
  encoder = EdsrEncoder::make(params, rng, "encoder", 3, cfg.encoder_channels, cfg.encoder_blocks);
  lift = nn::Linear::make(params, rng, "lift", cfg.encoder_channels + 4, cfg.latent_dim);
  layers.clear();
  for (int i = 0; i < cfg.num_layers; ++i)
    layers.push_back(GalerkinLayer::make(params, rng, "layer" + std::to_string(i), cfg.latent_dim));
  head1 = nn::Linear::make(params, rng, "head1", cfg.latent_dim, cfg.head_hidden);
  head2 = nn::Linear::make(params, rng, "head2", cfg.head_hidden, 3);
}

nn::Val NeuralOperator::forward_graph(nn::Graph& g, nn::GradSink* sink, const Tensor& lr,
                                      int out_h, int out_w) const {
  if (lr.rank() != 3 || lr.dim(0) != 3) throw internal_error("operator: LR must be [3,H,W]");
  nn::ParamCtx ctx{&params, sink};
  nn::Val x = g.leaf(lr);
  nn::Val feats = encoder.forward(g, ctx, x);
  const TargetGrid grid = make_target_grid(lr.dim(1), lr.dim(2), out_h, out_w);
  nn::Val pts = g.gather_points(feats, grid.src_index, grid.extras);
  nn::Val phi = lift(g, ctx, pts);
  for (const auto& l : layers) phi = l.forward(g, ctx, phi);
  nn::Val rgb = head2(g, ctx, g.gelu(head1(g, ctx, phi)));
  nn::Val img = g.points_to_image(rgb, out_h, out_w);
  nn::Val skip = g.leaf(img::bicubic_resize(lr, out_h, out_w));
  return g.add(img, skip);
}

Tensor NeuralOperator::apply(const Tensor& lr, double s, bool allow_extrapolation) const {
  if (!(s > 1.0)) throw numeric_error("apply_operator: scale must be > 1");
  if (!allow_extrapolation && s > cfg.max_scale + 1e-9)
    throw numeric_error("apply_operator: scale above max_scale " + std::to_string(cfg.max_scale));
  const auto [oh, ow] = img::scaled_size(lr.dim(1), lr.dim(2), s);
  nn::Graph g;
  return forward_graph(g, nullptr, lr, oh, ow)->value;
}

Tensor NeuralOperator::encode(const Tensor& lr) const {
  nn::Graph g;
  nn::ParamCtx ctx{&params, nullptr};
  return encoder.forward(g, ctx, g.leaf(lr))->value;
}

Tensor apply_operator(const NeuralOperator& op, const Tensor& lr, double s,
                      bool allow_extrapolation) {
  return op.apply(lr, s, allow_extrapolation);
}

}  // namespace nod::op
