#pragma once

#include <string>
#include <vector>

#include "nod/autograd.hpp"
#include "nod/rng.hpp"
#include "nod/tensor.hpp"

namespace nod::nn {

// Flat, ordered store of named parameter tensors plus their Adam moments.
// Canonical names ("encoder.head.w", ...) key the checkpoint format.
class ParamRegistry {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    Tensor m, v;  // Adam moments; sized on first optimizer step
  };

  int add(std::string name, Tensor init);
  int find(const std::string& name) const;  // -1 when absent

  Tensor& value(int i) { return entries_[static_cast<size_t>(i)].value; }
  const Tensor& value(int i) const { return entries_[static_cast<size_t>(i)].value; }
  Entry& entry(int i) { return entries_[static_cast<size_t>(i)]; }
  const Entry& entry(int i) const { return entries_[static_cast<size_t>(i)]; }
  size_t size() const { return entries_.size(); }
  int64_t total_elements() const;

 private:
  std::vector<Entry> entries_;
};

// Binds a registry to the gradient sink used for the current pass. A null
// sink turns every parameter into a frozen constant.
struct ParamCtx {
  const ParamRegistry* reg = nullptr;
  GradSink* sink = nullptr;

  Val operator()(Graph& g, int idx) const { return g.param(reg->value(idx), sink, idx); }
};

// Initializers. Weight scale follows the usual fan-in uniform rule.
Tensor init_uniform_fan_in(Rng& rng, std::vector<int> shape, int fan_in);

struct Conv2d {
  int w = -1, b = -1;
  int stride = 1, pad = 1;

  static Conv2d make(ParamRegistry& reg, Rng& rng, const std::string& name, int in_ch,
                     int out_ch, int ksize, int stride, int pad, bool zero_init = false);
  Val operator()(Graph& g, const ParamCtx& ctx, Val x) const {
    return g.conv2d(x, ctx(g, w), ctx(g, b), stride, pad);
  }
};

struct Linear {
  int w = -1, b = -1;  // b == -1 means no bias

  static Linear make(ParamRegistry& reg, Rng& rng, const std::string& name, int in_dim,
                     int out_dim, bool bias = true, bool zero_init = false);
  Val operator()(Graph& g, const ParamCtx& ctx, Val x) const {
    return g.linear(x, ctx(g, w), b >= 0 ? ctx(g, b) : Val());
  }
};

struct LayerNorm {
  int g_ = -1, b_ = -1;

  static LayerNorm make(ParamRegistry& reg, const std::string& name, int dim);
  Val operator()(Graph& g, const ParamCtx& ctx, Val x) const {
    return g.layer_norm(x, ctx(g, g_), ctx(g, b_));
  }
};

struct GroupNorm {
  int g_ = -1, b_ = -1;
  int groups = 1;

  static GroupNorm make(ParamRegistry& reg, const std::string& name, int channels, int groups);
  Val operator()(Graph& g, const ParamCtx& ctx, Val x) const {
    return g.group_norm(x, groups, ctx(g, g_), ctx(g, b_));
  }
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with optional global-norm gradient clipping. One instance per
// trainable registry; `step` counts optimizer updates for bias correction.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void update(ParamRegistry& reg, const GradSink& sink, double lr, double clip_norm);

  int64_t step() const { return step_; }
  void set_step(int64_t s) { step_ = s; }

 private:
  AdamConfig cfg_;
  int64_t step_ = 0;
};

// Global L2 norm over every non-empty gradient in the sink.
double grad_norm(const GradSink& sink);

}  // namespace nod::nn
