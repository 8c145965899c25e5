#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "nod/rng.hpp"
#include "nod/tensor.hpp"

namespace nod::nn {

// Reverse-mode autodiff over a per-forward-pass tape. Ops are coarse
// (convolution, matmul, normalization, ...) with hand-written backward
// rules; the tape is the creation order, so backward() is a single reverse
// sweep. A Graph is single-threaded and lives for one forward/backward pass.

struct Node;
using Val = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // lazily allocated, same shape as value
  bool needs_grad = false;
  std::function<void()> backprop;  // propagates this->grad into parents

  void ensure_grad() {
    if (grad.empty()) grad = Tensor::zeros(value.shape());
  }
};

// Per-parameter gradient accumulator, index-aligned with a ParamRegistry.
struct GradSink {
  std::vector<Tensor> grads;

  explicit GradSink(size_t n) : grads(n) {}

  void accumulate(int idx, const Tensor& g) {
    Tensor& dst = grads[static_cast<size_t>(idx)];
    if (dst.empty()) {
      dst = g;
    } else {
      for (int64_t i = 0; i < g.numel(); ++i) dst[i] += g[i];
    }
  }

  void clear() {
    for (auto& g : grads) g = Tensor();
  }
};

class Graph {
 public:
  // Constant input; set needs_grad to differentiate w.r.t. it (the gradient
  // is then read from the returned node after backward()).
  Val leaf(Tensor value, bool needs_grad = false);

  // Trainable parameter: gradients accumulate into sink->grads[index].
  // A null sink makes the parameter a plain constant (inference mode).
  Val param(const Tensor& value, GradSink* sink, int index);

  // Elementwise and broadcast arithmetic.
  Val add(Val a, Val b);
  Val sub(Val a, Val b);
  Val mul(Val a, Val b);
  Val scale(Val a, double s);
  // x: [C,H,W], bias: [C] or [1,C] broadcast over spatial positions.
  Val add_channel_bias(Val x, Val bias);

  // matmul with optional transposes: op(a) [m,k] x op(b) [k,n] -> [m,n].
  Val matmul(Val a, Val b, bool trans_a = false, bool trans_b = false);
  // x: [P,Din], w: [Din,Dout], b: [Dout] or empty Val.
  Val linear(Val x, Val w, Val b);

  // x: [C,H,W], w: [OC,C,kh,kw], b: [OC] or empty Val. Zero padding.
  Val conv2d(Val x, Val w, Val b, int stride, int pad);

  // Row-wise layer norm. x: [P,D], gamma/beta: [D].
  Val layer_norm(Val x, Val gamma, Val beta, double eps = 1e-5);
  // Group norm over [C,H,W]; channels per group = C/groups.
  Val group_norm(Val x, int groups, Val gamma, Val beta, double eps = 1e-5);

  Val relu(Val x);
  Val silu(Val x);
  Val gelu(Val x);

  // Inverted dropout; identity when !enabled or rate == 0.
  Val dropout(Val x, double rate, Rng& rng, bool enabled);

  Val upsample_nearest2(Val x);                  // [C,H,W] -> [C,2H,2W]
  Val concat_channels(Val a, Val b);             // [Ca,H,W] + [Cb,H,W]
  Val reshape(Val x, std::vector<int> shape);    // same data, new shape
  Val points_to_image(Val x, int h, int w);      // [P,D] -> [D,h,w], P == h*w

  // Gathers per-point source features plus fixed extra features:
  // feat [C,hs,ws], src_index [P] (flat spatial index into feat),
  // extras [P,E] constant -> output [P, C+E].
  Val gather_points(Val feat, std::shared_ptr<std::vector<int>> src_index, Tensor extras);

  Val mean_all(Val x);                 // -> [1]
  Val mean_abs_diff(Val a, Val b);     // -> [1]

  // Backward from a scalar node. Seeds d(loss)/d(loss) = 1.
  void backward(const Val& loss);

  size_t size() const { return tape_.size(); }

 private:
  Val make(Tensor value, std::vector<Val> parents);
  std::vector<Val> tape_;
};

}  // namespace nod::nn
