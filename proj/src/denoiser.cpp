#include "nod/denoiser.hpp"

#include <cmath>

#include "nod/errors.hpp"

namespace nod::den {

std::vector<int> DenoiserConfig::resolved_mults() const {
  if (!channel_mults.empty()) return channel_mults;
  std::vector<int> m(static_cast<size_t>(depth) + 1);
  for (int i = 0; i <= depth; ++i) m[static_cast<size_t>(i)] = std::min(1 << i, 4);
  return m;
}

void DenoiserConfig::validate() const {
  if (base_channels < 1) throw config_error("denoiser: base_channels must be >= 1");
  if (depth < 1) throw config_error("denoiser: depth must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw config_error("denoiser: dropout outside [0,1)");
  if (gamma_embed_dim < 2 || gamma_embed_dim % 2 != 0)
    throw config_error("denoiser: gamma_embed_dim must be even and >= 2");
  if (groups < 1) throw config_error("denoiser: groups must be >= 1");
  const auto mults = resolved_mults();
  if (static_cast<int>(mults.size()) != depth + 1)
    throw config_error("denoiser: channel_mults must have depth+1 entries");
  for (int m : mults) {
    if (m < 1) throw config_error("denoiser: channel multipliers must be >= 1");
    if ((base_channels * m) % groups != 0)
      throw config_error("denoiser: channels must be divisible by groups");
  }
}

ResBlock ResBlock::make(nn::ParamRegistry& reg, Rng& rng, const std::string& name, int in_ch,
                        int out_ch, int emb_dim, int groups, double dropout) {
  ResBlock b;
  b.dropout = dropout;
  b.gn1 = nn::GroupNorm::make(reg, name + ".gn1", in_ch, groups);
  b.conv1 = nn::Conv2d::make(reg, rng, name + ".conv1", in_ch, out_ch, 3, 1, 1);
  b.emb = nn::Linear::make(reg, rng, name + ".emb", emb_dim, out_ch);
  b.gn2 = nn::GroupNorm::make(reg, name + ".gn2", out_ch, groups);
  b.conv2 = nn::Conv2d::make(reg, rng, name + ".conv2", out_ch, out_ch, 3, 1, 1);
  if (in_ch != out_ch) b.skip = nn::Conv2d::make(reg, rng, name + ".skip", in_ch, out_ch, 1, 1, 0);
  return b;
}

nn::Val ResBlock::forward(nn::Graph& g, const nn::ParamCtx& ctx, nn::Val x, nn::Val emb_vec,
                          Rng* drop_rng, bool train) const {
  nn::Val h = conv1(g, ctx, g.silu(gn1(g, ctx, x)));
  const int out_ch = h->value.dim(0);
  nn::Val bias = g.reshape(emb(g, ctx, g.silu(emb_vec)), {out_ch});
  h = g.add_channel_bias(h, bias);
  h = g.silu(gn2(g, ctx, h));
  if (train && dropout > 0.0) {
    if (drop_rng == nullptr) throw internal_error("ResBlock: train mode needs a dropout rng");
    h = g.dropout(h, dropout, *drop_rng, true);
  }
  h = conv2(g, ctx, h);
  nn::Val s = skip ? (*skip)(g, ctx, x) : x;
  return g.add(h, s);
}

void UNetDenoiser::build(Rng& rng) {
  cfg.validate();
  const auto mults = cfg.resolved_mults();
  const int e = cfg.gamma_embed_dim;
  emb_in = nn::Linear::make(params, rng, "emb_in", e, e);
  stem = nn::Conv2d::make(params, rng, "stem", 6, cfg.base_channels * mults[0], 3, 1, 1);
  downs.clear();
  ups.clear();
  for (int i = 0; i < cfg.depth; ++i) {
    const int ch = cfg.base_channels * mults[static_cast<size_t>(i)];
    const int ch_next = cfg.base_channels * mults[static_cast<size_t>(i) + 1];
    const std::string name = "down" + std::to_string(i);
    Down d{ResBlock::make(params, rng, name + ".res", ch, ch, e, cfg.groups, cfg.dropout),
           nn::Conv2d::make(params, rng, name + ".down", ch, ch_next, 3, 2, 1)};
    downs.push_back(std::move(d));
  }
  const int mid_ch = cfg.base_channels * mults[static_cast<size_t>(cfg.depth)];
  mid = ResBlock::make(params, rng, "mid.res", mid_ch, mid_ch, e, cfg.groups, cfg.dropout);
  for (int i = cfg.depth - 1; i >= 0; --i) {
    const int ch = cfg.base_channels * mults[static_cast<size_t>(i)];
    const int ch_in = cfg.base_channels * mults[static_cast<size_t>(i) + 1];
    const std::string name = "up" + std::to_string(i);
    Up u{nn::Conv2d::make(params, rng, name + ".conv", ch_in, ch, 3, 1, 1),
         ResBlock::make(params, rng, name + ".res", 2 * ch, ch, e, cfg.groups, cfg.dropout)};
    ups.push_back(std::move(u));
  }
  out_norm = nn::GroupNorm::make(params, "out_norm", cfg.base_channels * mults[0], cfg.groups);
  out_conv = nn::Conv2d::make(params, rng, "out_conv", cfg.base_channels * mults[0], 3, 3, 1, 1,
                              /*zero_init=*/true);
}

Tensor UNetDenoiser::gamma_features(double gamma, int dim) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw numeric_error("embed_gamma: gamma outside (0,1]");
  const int half = dim / 2;
  Tensor f({1, dim});
  const double x = std::log(gamma);
  // Frequencies spaced geometrically over [0.1, 20]; log(gamma) spans a few
  // tens of units for the schedules in use, so phases stay well resolved.
  for (int k = 0; k < half; ++k) {
    const double frac = half == 1 ? 0.0 : static_cast<double>(k) / (half - 1);
    const double freq = 0.1 * std::pow(200.0, frac);
    f.at2(0, k) = std::sin(freq * x);
    f.at2(0, half + k) = std::cos(freq * x);
  }
  return f;
}

Tensor UNetDenoiser::embed_gamma(double gamma) const {
  nn::Graph g;
  nn::ParamCtx ctx{&params, nullptr};
  nn::Val e0 = g.leaf(gamma_features(gamma, cfg.gamma_embed_dim));
  return emb_in(g, ctx, e0)->value.reshaped({cfg.gamma_embed_dim});
}

nn::Val UNetDenoiser::predict_graph(nn::Graph& g, nn::GradSink* sink, nn::Val y, nn::Val zt,
                                    double gamma, bool train, Rng* drop_rng) const {
  nn::ParamCtx ctx{&params, sink};
  const Tensor& zv = zt->value;
  if (zv.rank() != 3 || y->value.rank() != 3)
    throw internal_error("predict_noise: inputs must be [C,H,W]");
  if (y->value.dim(1) != zv.dim(1) || y->value.dim(2) != zv.dim(2))
    throw internal_error("predict_noise: y/zt spatial shape mismatch");
  const int div = 1 << cfg.depth;
  if (zv.dim(1) % div != 0 || zv.dim(2) % div != 0)
    throw internal_error("predict_noise: spatial size not divisible by 2^depth");

  nn::Val emb_vec = emb_in(g, ctx, g.leaf(gamma_features(gamma, cfg.gamma_embed_dim)));
  nn::Val h = stem(g, ctx, g.concat_channels(y, zt));
  std::vector<nn::Val> skips;
  for (const auto& d : downs) {
    h = d.block.forward(g, ctx, h, emb_vec, drop_rng, train);
    skips.push_back(h);
    h = d.down(g, ctx, h);
  }
  h = mid.forward(g, ctx, h, emb_vec, drop_rng, train);
  for (size_t i = 0; i < ups.size(); ++i) {
    const auto& u = ups[i];
    h = u.up(g, ctx, g.upsample_nearest2(h));
    h = g.concat_channels(h, skips[skips.size() - 1 - i]);
    h = u.block.forward(g, ctx, h, emb_vec, drop_rng, train);
  }
  return out_conv(g, ctx, g.silu(out_norm(g, ctx, h)));
}

Tensor UNetDenoiser::predict(const Tensor& y, const Tensor& zt, double gamma) const {
  nn::Graph g;
  return predict_graph(g, nullptr, g.leaf(y), g.leaf(zt), gamma, /*train=*/false, nullptr)->value;
}

Tensor predict_noise(const UNetDenoiser& net, const Tensor& y, const Tensor& zt, double gamma) {
  if (y.rank() != 3 || zt.rank() != 3 || y.dim(0) != 3 || zt.dim(0) != 3)
    throw internal_error("predict_noise: want [3,H,W] inputs");
  if (!y.same_shape(zt)) throw internal_error("predict_noise: y/zt shape mismatch");
  return net.predict(y, zt, gamma);
}

}  // namespace nod::den
