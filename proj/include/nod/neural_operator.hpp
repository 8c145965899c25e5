#pragma once

#include <memory>
#include <string>
#include <vector>

#include "nod/nn.hpp"
#include "nod/tensor.hpp"

namespace nod::op {

struct OperatorConfig {
  int latent_dim = 32;       // d_r
  int num_layers = 3;        // kernel-integral layers
  int encoder_blocks = 4;    // residual blocks in the encoder
  int encoder_channels = 32;
  int head_hidden = 128;     // hidden width of the output MLP
  double max_scale = 8.0;    // M; training scales are drawn from (1, M]

  void validate() const;
};

// Latent field phi on a target grid: per-cell features, cell-center
// coordinates in [-1,1]^2 and the cell size. n_f == values.dim(0).
struct LatentField {
  Tensor values;  // [P, d_r]
  Tensor coords;  // [P, 2] (y, x)
  double cell_h = 0.0, cell_w = 0.0;
  int n_f = 0;
};

// Geometry for lifting LR features onto a target grid: per-target-cell
// nearest LR cell plus (offset, cell size) extras fed to the lift map.
struct TargetGrid {
  int h = 0, w = 0;
  std::shared_ptr<std::vector<int>> src_index;  // flat index into the LR grid
  Tensor extras;                                 // [P, 4] = (dy, dx, cell_h, cell_w)
  Tensor coords;                                 // [P, 2] cell centers
};

TargetGrid make_target_grid(int lr_h, int lr_w, int out_h, int out_w);

// Attention projection matrices (right-multiplying row vectors) plus the
// normalization affine parameters for keys and values.
struct AttentionWeights {
  Tensor wq, wk, wv;              // [D, D]
  Tensor k_gamma, k_beta;         // [D]
  Tensor v_gamma, v_beta;         // [D]

  static AttentionWeights random(int d, Rng& rng);
};

enum class GalerkinOrder { LinearCost, QuadraticCost };

// Galerkin attention out = Q (K~^T V~) / n_f on phi [P,D]. LinearCost
// evaluates K~^T V~ first (O(P D^2)); QuadraticCost materializes Q K~^T
// (O(P^2 D), small instances only). Both orders agree to rounding.
Tensor galerkin_attention(const Tensor& phi, const AttentionWeights& w,
                          GalerkinOrder order = GalerkinOrder::LinearCost);

// Softmax kernel integral (test oracle; the production path does not use
// softmax). The denominator sums exp(<q_j, k_i>) over queries j exactly as
// the kernel is defined. O(P^2).
Tensor softmax_kernel_integral(const Tensor& phi, const AttentionWeights& w);
// Scalar-loop evaluation of the same kernel, kept free of shared code.
Tensor softmax_kernel_integral_reference(const Tensor& phi, const AttentionWeights& w);

// EDSR-style encoder: 3x3 head, residual conv-relu-conv blocks, 3x3 tail
// with a global skip; no resampling, so output spatial size == input.
struct EdsrEncoder {
  nn::Conv2d head;
  std::vector<std::array<nn::Conv2d, 2>> blocks;
  nn::Conv2d tail;

  static EdsrEncoder make(nn::ParamRegistry& reg, Rng& rng, const std::string& name,
                          int in_ch, int channels, int num_blocks);
  nn::Val forward(nn::Graph& g, const nn::ParamCtx& ctx, nn::Val x) const;
};

// One kernel-integral layer: phi + FFN(attention(phi) + phi).
struct GalerkinLayer {
  nn::Linear wq, wk, wv;  // no bias
  nn::LayerNorm ln_k, ln_v;
  nn::Linear ffn1, ffn2;

  static GalerkinLayer make(nn::ParamRegistry& reg, Rng& rng, const std::string& name, int d);
  nn::Val forward(nn::Graph& g, const nn::ParamCtx& ctx, nn::Val phi) const;
};

// The conditioning network F: LR image + scale -> continuous prior at the
// target resolution. encoder -> lift -> kernel-integral layers -> per-pixel
// MLP, plus a bicubic skip on the RGB output.
struct NeuralOperator {
  OperatorConfig cfg;
  nn::ParamRegistry params;
  EdsrEncoder encoder;
  nn::Linear lift;
  std::vector<GalerkinLayer> layers;
  nn::Linear head1, head2;

  void build(Rng& rng);

  // Training/inference graph; sink == nullptr freezes the parameters.
  nn::Val forward_graph(nn::Graph& g, nn::GradSink* sink, const Tensor& lr,
                        int out_h, int out_w) const;

  // Inference at scale s; target size is round(lr_size * s) per axis.
  Tensor apply(const Tensor& lr, double s, bool allow_extrapolation = false) const;

  // Encoder features at LR resolution (ablation conditioning + tests).
  Tensor encode(const Tensor& lr) const;
};

// Spec-level entry point; validates s in (1, M] unless extrapolation is
// explicitly allowed (out-of-distribution evaluation).
Tensor apply_operator(const NeuralOperator& op, const Tensor& lr, double s,
                      bool allow_extrapolation = false);

}  // namespace nod::op
