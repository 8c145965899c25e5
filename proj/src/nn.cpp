#include "nod/nn.hpp"

#include <cmath>

namespace nod::nn {

int ParamRegistry::add(std::string name, Tensor init) {
  if (find(name) >= 0) throw internal_error("duplicate parameter name: " + name);
  entries_.push_back(Entry{std::move(name), std::move(init), Tensor(), Tensor()});
  return static_cast<int>(entries_.size()) - 1;
}

int ParamRegistry::find(const std::string& name) const {
  for (size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].name == name) return static_cast<int>(i);
  return -1;
}

int64_t ParamRegistry::total_elements() const {
  int64_t n = 0;
  for (const auto& e : entries_) n += e.value.numel();
  return n;
}

Tensor init_uniform_fan_in(Rng& rng, std::vector<int> shape, int fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

Conv2d Conv2d::make(ParamRegistry& reg, Rng& rng, const std::string& name, int in_ch, int out_ch,
                    int ksize, int stride, int pad, bool zero_init) {
  Conv2d c;
  c.stride = stride;
  c.pad = pad;
  const int fan_in = in_ch * ksize * ksize;
  Tensor w = zero_init ? Tensor::zeros({out_ch, in_ch, ksize, ksize})
                       : init_uniform_fan_in(rng, {out_ch, in_ch, ksize, ksize}, fan_in);
  c.w = reg.add(name + ".w", std::move(w));
  c.b = reg.add(name + ".b", Tensor::zeros({out_ch}));
  return c;
}

Linear Linear::make(ParamRegistry& reg, Rng& rng, const std::string& name, int in_dim,
                    int out_dim, bool bias, bool zero_init) {
  Linear l;
  Tensor w = zero_init ? Tensor::zeros({in_dim, out_dim})
                       : init_uniform_fan_in(rng, {in_dim, out_dim}, in_dim);
  l.w = reg.add(name + ".w", std::move(w));
  if (bias) l.b = reg.add(name + ".b", Tensor::zeros({out_dim}));
  return l;
}

LayerNorm LayerNorm::make(ParamRegistry& reg, const std::string& name, int dim) {
  LayerNorm n;
  n.g_ = reg.add(name + ".g", Tensor::full({dim}, 1.0));
  n.b_ = reg.add(name + ".b", Tensor::zeros({dim}));
  return n;
}

GroupNorm GroupNorm::make(ParamRegistry& reg, const std::string& name, int channels, int groups) {
  if (channels % groups != 0)
    throw internal_error("GroupNorm: channels " + std::to_string(channels) +
                         " not divisible by groups " + std::to_string(groups));
  GroupNorm n;
  n.groups = groups;
  n.g_ = reg.add(name + ".g", Tensor::full({channels}, 1.0));
  n.b_ = reg.add(name + ".b", Tensor::zeros({channels}));
  return n;
}

double grad_norm(const GradSink& sink) {
  double sq = 0.0;
  for (const auto& g : sink.grads)
    for (int64_t i = 0; i < g.numel(); ++i) sq += g[i] * g[i];
  return std::sqrt(sq);
}

void Adam::update(ParamRegistry& reg, const GradSink& sink, double lr, double clip_norm) {
  if (sink.grads.size() != reg.size()) throw internal_error("Adam: sink/registry size mismatch");
  double scale = 1.0;
  if (clip_norm > 0.0) {
    const double norm = grad_norm(sink);
    if (norm > clip_norm) scale = clip_norm / norm;
  }
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (size_t i = 0; i < reg.size(); ++i) {
    const Tensor& g = sink.grads[i];
    if (g.empty()) continue;
    auto& e = reg.entry(static_cast<int>(i));
    if (e.m.empty()) e.m = Tensor::zeros(e.value.shape());
    if (e.v.empty()) e.v = Tensor::zeros(e.value.shape());
    for (int64_t j = 0; j < g.numel(); ++j) {
      const double gj = g[j] * scale;
      e.m[j] = cfg_.beta1 * e.m[j] + (1.0 - cfg_.beta1) * gj;
      e.v[j] = cfg_.beta2 * e.v[j] + (1.0 - cfg_.beta2) * gj * gj;
      const double mhat = e.m[j] / bc1;
      const double vhat = e.v[j] / bc2;
      e.value[j] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace nod::nn
