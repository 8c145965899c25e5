#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nod/nn.hpp"
#include "nod/tensor.hpp"

namespace nod::den {

struct DenoiserConfig {
  int base_channels = 16;
  int depth = 3;                        // number of down/up levels
  std::vector<int> channel_mults = {};  // per resolution level; defaults to 1,2,4,...
  double dropout = 0.2;
  int gamma_embed_dim = 64;
  int groups = 8;

  std::vector<int> resolved_mults() const;  // length depth + 1
  void validate() const;
};

// Residual block with group norm, SiLU, additive gamma-embedding bias and
// dropout before the second conv. Channel changes go through a 1x1 skip.
struct ResBlock {
  nn::GroupNorm gn1, gn2;
  nn::Conv2d conv1, conv2;
  nn::Linear emb;
  std::optional<nn::Conv2d> skip;
  double dropout = 0.0;

  static ResBlock make(nn::ParamRegistry& reg, Rng& rng, const std::string& name, int in_ch,
                       int out_ch, int emb_dim, int groups, double dropout);
  nn::Val forward(nn::Graph& g, const nn::ParamCtx& ctx, nn::Val x, nn::Val emb_vec,
                  Rng* drop_rng, bool train) const;
};

// Noise-prediction U-Net G(y, z_t, gamma): consumes the 6-channel
// concatenation of the prior and the noisy image; gamma conditions every
// residual block through a learned embedding.
struct UNetDenoiser {
  DenoiserConfig cfg;
  nn::ParamRegistry params;

  nn::Linear emb_in;  // learned map over the sinusoidal log-gamma features
  nn::Conv2d stem;
  struct Down {
    ResBlock block;
    nn::Conv2d down;  // stride-2
  };
  std::vector<Down> downs;
  ResBlock mid;
  struct Up {
    nn::Conv2d up;  // 3x3 after nearest x2
    ResBlock block;
  };
  std::vector<Up> ups;
  nn::GroupNorm out_norm;
  nn::Conv2d out_conv;  // zero-init

  void build(Rng& rng);

  // Sinusoidal features of log(gamma) at geometrically spaced frequencies.
  static Tensor gamma_features(double gamma, int dim);
  // The learned gamma embedding (deterministic given parameters).
  Tensor embed_gamma(double gamma) const;

  // Training/inference graph. y and zt enter as constants; set sink to
  // collect parameter gradients. Dropout draws from drop_rng in train mode.
  nn::Val predict_graph(nn::Graph& g, nn::GradSink* sink, nn::Val y, nn::Val zt, double gamma,
                        bool train, Rng* drop_rng) const;

  // Evaluation-mode prediction (dropout disabled).
  Tensor predict(const Tensor& y, const Tensor& zt, double gamma) const;
};

// Spec-level wrapper with the shape/divisibility checks.
Tensor predict_noise(const UNetDenoiser& net, const Tensor& y, const Tensor& zt, double gamma);

}  // namespace nod::den
