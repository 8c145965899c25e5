#include "nod/autograd.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace nod::nn {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

Val Graph::make(Tensor value, std::vector<Val> parents) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const auto& p : parents) n->needs_grad = n->needs_grad || p->needs_grad;
  tape_.push_back(n);
  return n;
}

Val Graph::leaf(Tensor value, bool needs_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->needs_grad = needs_grad;
  tape_.push_back(n);
  return n;
}

Val Graph::param(const Tensor& value, GradSink* sink, int index) {
  auto n = std::make_shared<Node>();
  n->value = value;
  if (sink != nullptr) {
    n->needs_grad = true;
    Node* self = n.get();
    n->backprop = [self, sink, index]() { sink->accumulate(index, self->grad); };
  }
  tape_.push_back(n);
  return n;
}

Val Graph::add(Val a, Val b) {
  check_same_shape(a->value, b->value, "add");
  Tensor out(a->value.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] + b->value[i];
  Val n = make(std::move(out), {a, b});
  if (n->needs_grad) {
    Node* self = n.get();
    n->backprop = [self, a, b]() {
      if (a->needs_grad) {
        a->ensure_grad();
        for (int64_t i = 0; i < self->grad.numel(); ++i) a->grad[i] += self->grad[i];
      }
      if (b->needs_grad) {
        b->ensure_grad();
        for (int64_t i = 0; i < self->grad.numel(); ++i) b->grad[i] += self->grad[i];
      }
    };
  }
  return n;
}

Val Graph::sub(Val a, Val b) {
  check_same_shape(a->value, b->value, "sub");
  Tensor out(a->value.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] - b->value[i];
  Val n = make(std::move(out), {a, b});
  if (n->needs_grad) {
    Node* self = n.get();
    n->backprop = [self, a, b]() {
      if (a->needs_grad) {
        a->ensure_grad();
        for (int64_t i = 0; i < self->grad.numel(); ++i) a->grad[i] += self->grad[i];
      }
      if (b->needs_grad) {
        b->ensure_grad();
        for (int64_t i = 0; i < self->grad.numel(); ++i) b->grad[i] -= self->grad[i];
      }
    };
  }
  return n;
}

Val Graph::mul(Val a, Val b) {
  check_same_shape(a->value, b->value, "mul");
  Tensor out(a->value.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] * b->value[i];
  Val n = make(std::move(out), {a, b});
  if (n->needs_grad) {
    Node* self = n.get();
    n->backprop = [self, a, b]() {
      if (a->needs_grad) {
        a->ensure_grad();
        for (int64_t i = 0; i < self->grad.numel(); ++i)
          a->grad[i] += self->grad[i] * b->value[i];
      }
      if (b->needs_grad) {
        b->ensure_grad();
        for (int64_t i = 0; i < self->grad.numel(); ++i)
          b->grad[i] += self->grad[i] * a->value[i];
      }
    };
  }
  return n;
}

Val Graph::scale(Val a, double s) {
  Tensor out(a->value.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] * s;
  Val n = make(std::move(out), {a});
  if (n->needs_grad) {
    Node* self = n.get();
    n->backprop = [self, a, s]() {
      a->ensure_grad();
      for (int64_t i = 0; i < self->grad.numel(); ++i) a->grad[i] += self->grad[i] * s;
    };
  }
  return n;
}

Val Graph::add_channel_bias(Val x, Val bias) {
  const Tensor& xv = x->value;
  if (xv.rank() != 3) throw internal_error("add_channel_bias: x must be [C,H,W]");
  const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  if (bias->value.numel() != c) throw internal_error("add_channel_bias: bias size mismatch");
  Tensor out(xv.shape());
  const int64_t hw = static_cast<int64_t>(h) * w;
  for (int ci = 0; ci < c; ++ci) {
    const double b = bias->value[ci];
    for (int64_t i = 0; i < hw; ++i) out[ci * hw + i] = xv[ci * hw + i] + b;
  }
  Val n = make(std::move(out), {x, bias});
  if (n->needs_grad) {
    Node* self = n.get();
    n->backprop = [self, x, bias, c, hw]() {
      if (x->needs_grad) {
        x->ensure_grad();
        for (int64_t i = 0; i < self->grad.numel(); ++i) x->grad[i] += self->grad[i];
      }
      if (bias->needs_grad) {
        bias->ensure_grad();
        for (int ci = 0; ci < c; ++ci) {
          double s = 0.0;
          for (int64_t i = 0; i < hw; ++i) s += self->grad[ci * hw + i];
          bias->grad[ci] += s;
        }
      }
    };
  }
  return n;
}

Val Graph::matmul(Val a, Val b, bool trans_a, bool trans_b) {
  const Tensor& av = a->value;
  const Tensor& bv = b->value;
  if (av.rank() != 2 || bv.rank() != 2) throw internal_error("matmul: rank-2 operands required");
  const int m = trans_a ? av.dim(1) : av.dim(0);
  const int k = trans_a ? av.dim(0) : av.dim(1);
  const int kb = trans_b ? bv.dim(1) : bv.dim(0);
  const int nn = trans_b ? bv.dim(0) : bv.dim(1);
  if (k != kb) throw internal_error("matmul: inner dimension mismatch");

  Tensor out({m, nn});
  {
    ECMap ma(av.data(), av.dim(0), av.dim(1));
    ECMap mb(bv.data(), bv.dim(0), bv.dim(1));
    EMap mo(out.data(), m, nn);
    if (!trans_a && !trans_b)
      mo.noalias() = ma * mb;
    else if (trans_a && !trans_b)
      mo.noalias() = ma.transpose() * mb;
    else if (!trans_a && trans_b)
      mo.noalias() = ma * mb.transpose();
    else
      mo.noalias() = ma.transpose() * mb.transpose();
  }
  Val n = make(std::move(out), {a, b});
  if (n->needs_grad) {
    Node* self = n.get();
    n->backprop = [self, a, b, trans_a, trans_b, m, nn]() {
      ECMap g(self->grad.data(), m, nn);
      ECMap ma(a->value.data(), a->value.dim(0), a->value.dim(1));
      ECMap mb(b->value.data(), b->value.dim(0), b->value.dim(1));
      if (a->needs_grad) {
        a->ensure_grad();
        EMap ga(a->grad.data(), a->value.dim(0), a->value.dim(1));
        if (!trans_a && !trans_b)
          ga.noalias() += g * mb.transpose();
        else if (trans_a && !trans_b)
          ga.noalias() += mb * g.transpose();
        else if (!trans_a && trans_b)
          ga.noalias() += g * mb;
        else
          ga.noalias() += mb.transpose() * g.transpose();
      }
      if (b->needs_grad) {
        b->ensure_grad();
        EMap gb(b->grad.data(), b->value.dim(0), b->value.dim(1));
        if (!trans_a && !trans_b)
          gb.noalias() += ma.transpose() * g;
        else if (trans_a && !trans_b)
          gb.noalias() += ma * g;
        else if (!trans_a && trans_b)
          gb.noalias() += g.transpose() * ma;
        else
          gb.noalias() += g.transpose() * ma.transpose();
      }
    };
  }
  return n;
}

Val Graph::linear(Val x, Val w, Val b) {
  Val y = matmul(x, w, false, false);
  if (!b) return y;
  const int p = y->value.dim(0), d = y->value.dim(1);
  if (b->value.numel() != d) throw internal_error("linear: bias size mismatch");
  Tensor out(y->value.shape());
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < d; ++j) out.at2(i, j) = y->value.at2(i, j) + b->value[j];
  Val n = make(std::move(out), {y, b});
  if (n->needs_grad) {
    Node* self = n.get();
    n->backprop = [self, y, b, p, d]() {
      if (y->needs_grad) {
        y->ensure_grad();
        for (int64_t i = 0; i < self->grad.numel(); ++i) y->grad[i] += self->grad[i];
      }
      if (b->needs_grad) {
        b->ensure_grad();
        for (int i = 0; i < p; ++i)
          for (int j = 0; j < d; ++j) b->grad[j] += self->grad.at2(i, j);
      }
    };
  }
  return n;
}

Val Graph::conv2d(Val x, Val w, Val b, int stride, int pad) {
  const Tensor& xv = x->value;
  const Tensor& wv = w->value;
  if (xv.rank() != 3 || wv.rank() != 4) throw internal_error("conv2d: bad operand ranks");
  const int c = xv.dim(0), h = xv.dim(1), ww = xv.dim(2);
  const int oc = wv.dim(0), kc = wv.dim(1), kh = wv.dim(2), kw = wv.dim(3);
  if (kc != c) throw internal_error("conv2d: channel mismatch");
  const int oh = (h + 2 * pad - kh) / stride + 1;
  const int ow = (ww + 2 * pad - kw) / stride + 1;
  if (oh <= 0 || ow <= 0) throw internal_error("conv2d: empty output");
  const int K = c * kh * kw;
  const int P = oh * ow;

  // im2col; kept alive for the backward GEMMs.
  auto cols = std::make_shared<Tensor>(Tensor::zeros({K, P}));
  {
    double* cd = cols->data();
    for (int ci = 0; ci < c; ++ci) {
      for (int ki = 0; ki < kh; ++ki) {
        for (int kj = 0; kj < kw; ++kj) {
          const int row = (ci * kh + ki) * kw + kj;
          double* dst = cd + static_cast<int64_t>(row) * P;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride - pad + ki;
            if (iy < 0 || iy >= h) continue;
            const double* src = xv.data() + (static_cast<int64_t>(ci) * h + iy) * ww;
            double* drow = dst + static_cast<int64_t>(oy) * ow;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * stride - pad + kj;
              if (ix >= 0 && ix < ww) drow[ox] = src[ix];
            }
          }
        }
      }
    }
  }

  Tensor out({oc, oh, ow});
  {
    ECMap mw(wv.data(), oc, K);
    ECMap mc(cols->data(), K, P);
    EMap mo(out.data(), oc, P);
    mo.noalias() = mw * mc;
  }
  if (b) {
    if (b->value.numel() != oc) throw internal_error("conv2d: bias size mismatch");
    for (int o = 0; o < oc; ++o) {
      const double bv = b->value[o];
      for (int64_t i = 0; i < P; ++i) out[static_cast<int64_t>(o) * P + i] += bv;
    }
  }

  std::vector<Val> parents = b ? std::vector<Val>{x, w, b} : std::vector<Val>{x, w};
  Val n = make(std::move(out), parents);
  if (n->needs_grad) {
    Node* self = n.get();
    n->backprop = [self, x, w, b, cols, c, h, ww, oc, kh, kw, oh, ow, stride, pad, K, P]() {
      ECMap g(self->grad.data(), oc, P);
      if (w->needs_grad) {
        w->ensure_grad();
        EMap gw(w->grad.data(), oc, K);
        ECMap mc(cols->data(), K, P);
        gw.noalias() += g * mc.transpose();
      }
      if (b && b->needs_grad) {
        b->ensure_grad();
        for (int o = 0; o < oc; ++o) {
          double s = 0.0;
          for (int64_t i = 0; i < P; ++i) s += self->grad[static_cast<int64_t>(o) * P + i];
          b->grad[o] += s;
        }
      }
      if (x->needs_grad) {
        x->ensure_grad();
        Tensor dcols({K, P});
        {
          ECMap mw(w->value.data(), oc, K);
          EMap mdc(dcols.data(), K, P);
          mdc.noalias() = mw.transpose() * g;
        }
        // col2im scatter-add, sequential and deterministic.
        for (int ci = 0; ci < c; ++ci) {
          for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
              const int row = (ci * kh + ki) * kw + kj;
              const double* src = dcols.data() + static_cast<int64_t>(row) * P;
              for (int oy = 0; oy < oh; ++oy) {
                const int iy = oy * stride - pad + ki;
                if (iy < 0 || iy >= h) continue;
                double* dst = x->grad.data() + (static_cast<int64_t>(ci) * h + iy) * ww;
                const double* srow = src + static_cast<int64_t>(oy) * ow;
                for (int ox = 0; ox < ow; ++ox) {
                  const int ix = ox * stride - pad + kj;
                  if (ix >= 0 && ix < ww) dst[ix] += srow[ox];
                }
              }
            }
          }
        }
      }
    };
  }
  return n;
}

Val Graph::layer_norm(Val x, Val gamma, Val beta, double eps) {
  const Tensor& xv = x->value;
  if (xv.rank() != 2) throw internal_error("layer_norm: x must be [P,D]");
  const int p = xv.dim(0), d = xv.dim(1);
  if (gamma->value.numel() != d || beta->value.numel() != d)
    throw internal_error("layer_norm: affine size mismatch");

  auto xhat = std::make_shared<Tensor>(Tensor::zeros({p, d}));
  auto inv_std = std::make_shared<Tensor>(Tensor::zeros({p}));
  Tensor out({p, d});
  for (int i = 0; i < p; ++i) {
    double mean = 0.0;
    for (int j = 0; j < d; ++j) mean += xv.at2(i, j);
    mean /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      const double c = xv.at2(i, j) - mean;
      var += c * c;
    }
    var /= d;
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (int j = 0; j < d; ++j) {
      const double xh = (xv.at2(i, j) - mean) * is;
      xhat->at2(i, j) = xh;
      out.at2(i, j) = xh * gamma->value[j] + beta->value[j];
    }
  }
  Val n = make(std::move(out), {x, gamma, beta});
  if (n->needs_grad) {
    Node* self = n.get();
    n->backprop = [self, x, gamma, beta, xhat, inv_std, p, d]() {
      if (gamma->needs_grad) {
        gamma->ensure_grad();
        for (int i = 0; i < p; ++i)
          for (int j = 0; j < d; ++j) gamma->grad[j] += self->grad.at2(i, j) * xhat->at2(i, j);
      }
      if (beta->needs_grad) {
        beta->ensure_grad();
        for (int i = 0; i < p; ++i)
          for (int j = 0; j < d; ++j) beta->grad[j] += self->grad.at2(i, j);
      }
      if (x->needs_grad) {
        x->ensure_grad();
        for (int i = 0; i < p; ++i) {
          double mean_dxh = 0.0, mean_dxh_xh = 0.0;
          for (int j = 0; j < d; ++j) {
            const double dxh = self->grad.at2(i, j) * gamma->value[j];
            mean_dxh += dxh;
            mean_dxh_xh += dxh * xhat->at2(i, j);
          }
          mean_dxh /= d;
          mean_dxh_xh /= d;
          const double is = (*inv_std)[i];
          for (int j = 0; j < d; ++j) {
            const double dxh = self->grad.at2(i, j) * gamma->value[j];
            x->grad.at2(i, j) += is * (dxh - mean_dxh - xhat->at2(i, j) * mean_dxh_xh);
          }
        }
      }
    };
  }
  return n;
}

Val Graph::group_norm(Val x, int groups, Val gamma, Val beta, double eps) {
  const Tensor& xv = x->value;
  if (xv.rank() != 3) throw internal_error("group_norm: x must be [C,H,W]");
  const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  if (c % groups != 0) throw internal_error("group_norm: channels not divisible by groups");
  if (gamma->value.numel() != c || beta->value.numel() != c)
    throw internal_error("group_norm: affine size mismatch");
  const int cpg = c / groups;
  const int64_t hw = static_cast<int64_t>(h) * w;
  const int64_t gsize = cpg * hw;

  auto xhat = std::make_shared<Tensor>(Tensor::zeros(xv.shape()));
  auto inv_std = std::make_shared<Tensor>(Tensor::zeros({groups}));
  Tensor out(xv.shape());
  for (int g = 0; g < groups; ++g) {
    const int64_t base = static_cast<int64_t>(g) * gsize;
    double mean = 0.0;
    for (int64_t i = 0; i < gsize; ++i) mean += xv[base + i];
    mean /= static_cast<double>(gsize);
    double var = 0.0;
    for (int64_t i = 0; i < gsize; ++i) {
      const double d0 = xv[base + i] - mean;
      var += d0 * d0;
    }
    var /= static_cast<double>(gsize);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[g] = is;
    for (int ci = 0; ci < cpg; ++ci) {
      const int ch = g * cpg + ci;
      const double ga = gamma->value[ch], be = beta->value[ch];
      for (int64_t i = 0; i < hw; ++i) {
        const int64_t idx = base + ci * hw + i;
        const double xh = (xv[idx] - mean) * is;
        (*xhat)[idx] = xh;
        out[idx] = xh * ga + be;
      }
    }
  }
  Val n = make(std::move(out), {x, gamma, beta});
  if (n->needs_grad) {
    Node* self = n.get();
    n->backprop = [self, x, gamma, beta, xhat, inv_std, groups, cpg, hw, gsize]() {
      if (gamma->needs_grad || beta->needs_grad) {
        if (gamma->needs_grad) gamma->ensure_grad();
        if (beta->needs_grad) beta->ensure_grad();
        const int c = groups * cpg;
        for (int ch = 0; ch < c; ++ch) {
          double sg = 0.0, sb = 0.0;
          const int64_t base = static_cast<int64_t>(ch) * hw;
          for (int64_t i = 0; i < hw; ++i) {
            sg += self->grad[base + i] * (*xhat)[base + i];
            sb += self->grad[base + i];
          }
          if (gamma->needs_grad) gamma->grad[ch] += sg;
          if (beta->needs_grad) beta->grad[ch] += sb;
        }
      }
      if (x->needs_grad) {
        x->ensure_grad();
        for (int g = 0; g < groups; ++g) {
          const int64_t base = static_cast<int64_t>(g) * gsize;
          double mean_dxh = 0.0, mean_dxh_xh = 0.0;
          for (int ci = 0; ci < cpg; ++ci) {
            const double ga = gamma->value[g * cpg + ci];
            for (int64_t i = 0; i < hw; ++i) {
              const int64_t idx = base + ci * hw + i;
              const double dxh = self->grad[idx] * ga;
              mean_dxh += dxh;
              mean_dxh_xh += dxh * (*xhat)[idx];
            }
          }
          mean_dxh /= static_cast<double>(gsize);
          mean_dxh_xh /= static_cast<double>(gsize);
          const double is = (*inv_std)[g];
          for (int ci = 0; ci < cpg; ++ci) {
            const double ga = gamma->value[g * cpg + ci];
            for (int64_t i = 0; i < hw; ++i) {
              const int64_t idx = base + ci * hw + i;
              const double dxh = self->grad[idx] * ga;
              x->grad[idx] += is * (dxh - mean_dxh - (*xhat)[idx] * mean_dxh_xh);
            }
          }
        }
      }
    };
  }
  return n;
}

Val Graph::relu(Val x) {
  Tensor out(x->value.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = x->value[i] > 0.0 ? x->value[i] : 0.0;
  Val n = make(std::move(out), {x});
  if (n->needs_grad) {
    Node* self = n.get();
    n->backprop = [self, x]() {
      x->ensure_grad();
      for (int64_t i = 0; i < self->grad.numel(); ++i)
        if (x->value[i] > 0.0) x->grad[i] += self->grad[i];
    };
  }
  return n;
}

Val Graph::silu(Val x) {
  Tensor out(x->value.shape());
  for (int64_t i = 0; i < out.numel(); ++i) {
    const double s = 1.0 / (1.0 + std::exp(-x->value[i]));
    out[i] = x->value[i] * s;
  }
  Val n = make(std::move(out), {x});
  if (n->needs_grad) {
    Node* self = n.get();
    n->backprop = [self, x]() {
      x->ensure_grad();
      for (int64_t i = 0; i < self->grad.numel(); ++i) {
        const double s = 1.0 / (1.0 + std::exp(-x->value[i]));
        x->grad[i] += self->grad[i] * s * (1.0 + x->value[i] * (1.0 - s));
      }
    };
  }
  return n;
}

Val Graph::gelu(Val x) {
  constexpr double kInvSqrt2 = 0.7071067811865475244;
  constexpr double kInvSqrt2Pi = 0.3989422804014326779;
  Tensor out(x->value.shape());
  for (int64_t i = 0; i < out.numel(); ++i)
    out[i] = 0.5 * x->value[i] * (1.0 + std::erf(x->value[i] * kInvSqrt2));
  Val n = make(std::move(out), {x});
  if (n->needs_grad) {
    Node* self = n.get();
    n->backprop = [self, x]() {
      x->ensure_grad();
      for (int64_t i = 0; i < self->grad.numel(); ++i) {
        const double v = x->value[i];
        const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        x->grad[i] += self->grad[i] * (cdf + v * pdf);
      }
    };
  }
  return n;
}

Val Graph::dropout(Val x, double rate, Rng& rng, bool enabled) {
  if (!enabled || rate == 0.0) return x;
  if (rate < 0.0 || rate >= 1.0) throw internal_error("dropout: rate out of [0,1)");
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<Tensor>(Tensor::zeros(x->value.shape()));
  Tensor out(x->value.shape());
  for (int64_t i = 0; i < out.numel(); ++i) {
    const double m = rng.uniform01() < rate ? 0.0 : keep_scale;
    (*mask)[i] = m;
    out[i] = x->value[i] * m;
  }
  Val n = make(std::move(out), {x});
  if (n->needs_grad) {
    Node* self = n.get();
    n->backprop = [self, x, mask]() {
      x->ensure_grad();
      for (int64_t i = 0; i < self->grad.numel(); ++i) x->grad[i] += self->grad[i] * (*mask)[i];
    };
  }
  return n;
}

Val Graph::upsample_nearest2(Val x) {
  const Tensor& xv = x->value;
  if (xv.rank() != 3) throw internal_error("upsample_nearest2: x must be [C,H,W]");
  const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  Tensor out({c, 2 * h, 2 * w});
  for (int ci = 0; ci < c; ++ci)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        const double v = xv.at3(ci, i, j);
        out.at3(ci, 2 * i, 2 * j) = v;
        out.at3(ci, 2 * i, 2 * j + 1) = v;
        out.at3(ci, 2 * i + 1, 2 * j) = v;
        out.at3(ci, 2 * i + 1, 2 * j + 1) = v;
      }
  Val n = make(std::move(out), {x});
  if (n->needs_grad) {
    Node* self = n.get();
    n->backprop = [self, x, c, h, w]() {
      x->ensure_grad();
      for (int ci = 0; ci < c; ++ci)
        for (int i = 0; i < h; ++i)
          for (int j = 0; j < w; ++j)
            x->grad.at3(ci, i, j) += self->grad.at3(ci, 2 * i, 2 * j) +
                                     self->grad.at3(ci, 2 * i, 2 * j + 1) +
                                     self->grad.at3(ci, 2 * i + 1, 2 * j) +
                                     self->grad.at3(ci, 2 * i + 1, 2 * j + 1);
    };
  }
  return n;
}

Val Graph::concat_channels(Val a, Val b) {
  const Tensor& av = a->value;
  const Tensor& bv = b->value;
  if (av.rank() != 3 || bv.rank() != 3 || av.dim(1) != bv.dim(1) || av.dim(2) != bv.dim(2))
    throw internal_error("concat_channels: spatial shape mismatch");
  const int ca = av.dim(0), cb = bv.dim(0), h = av.dim(1), w = av.dim(2);
  Tensor out({ca + cb, h, w});
  const int64_t na = av.numel(), nb = bv.numel();
  for (int64_t i = 0; i < na; ++i) out[i] = av[i];
  for (int64_t i = 0; i < nb; ++i) out[na + i] = bv[i];
  Val n = make(std::move(out), {a, b});
  if (n->needs_grad) {
    Node* self = n.get();
    n->backprop = [self, a, b, na, nb]() {
      if (a->needs_grad) {
        a->ensure_grad();
        for (int64_t i = 0; i < na; ++i) a->grad[i] += self->grad[i];
      }
      if (b->needs_grad) {
        b->ensure_grad();
        for (int64_t i = 0; i < nb; ++i) b->grad[i] += self->grad[na + i];
      }
    };
  }
  return n;
}

Val Graph::reshape(Val x, std::vector<int> shape) {
  Tensor out = x->value.reshaped(shape);
  Val n = make(std::move(out), {x});
  if (n->needs_grad) {
    Node* self = n.get();
    n->backprop = [self, x]() {
      x->ensure_grad();
      for (int64_t i = 0; i < self->grad.numel(); ++i) x->grad[i] += self->grad[i];
    };
  }
  return n;
}

Val Graph::points_to_image(Val x, int h, int w) {
  const Tensor& xv = x->value;
  if (xv.rank() != 2 || xv.dim(0) != h * w)
    throw internal_error("points_to_image: P != h*w");
  const int p = xv.dim(0), d = xv.dim(1);
  Tensor out({d, h, w});
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < d; ++j) out[static_cast<int64_t>(j) * p + i] = xv.at2(i, j);
  Val n = make(std::move(out), {x});
  if (n->needs_grad) {
    Node* self = n.get();
    n->backprop = [self, x, p, d]() {
      x->ensure_grad();
      for (int i = 0; i < p; ++i)
        for (int j = 0; j < d; ++j) x->grad.at2(i, j) += self->grad[static_cast<int64_t>(j) * p + i];
    };
  }
  return n;
}

Val Graph::gather_points(Val feat, std::shared_ptr<std::vector<int>> src_index, Tensor extras) {
  const Tensor& fv = feat->value;
  if (fv.rank() != 3) throw internal_error("gather_points: feat must be [C,H,W]");
  const int c = fv.dim(0);
  const int64_t hw = static_cast<int64_t>(fv.dim(1)) * fv.dim(2);
  const int p = static_cast<int>(src_index->size());
  if (extras.rank() != 2 || extras.dim(0) != p)
    throw internal_error("gather_points: extras shape mismatch");
  const int e = extras.dim(1);

  Tensor out({p, c + e});
  for (int i = 0; i < p; ++i) {
    const int s = (*src_index)[static_cast<size_t>(i)];
    for (int ci = 0; ci < c; ++ci) out.at2(i, ci) = fv[static_cast<int64_t>(ci) * hw + s];
    for (int j = 0; j < e; ++j) out.at2(i, c + j) = extras.at2(i, j);
  }
  Val n = make(std::move(out), {feat});
  if (n->needs_grad) {
    Node* self = n.get();
    n->backprop = [self, feat, src_index, c, hw, p]() {
      feat->ensure_grad();
      for (int i = 0; i < p; ++i) {
        const int s = (*src_index)[static_cast<size_t>(i)];
        for (int ci = 0; ci < c; ++ci)
          feat->grad[static_cast<int64_t>(ci) * hw + s] += self->grad.at2(i, ci);
      }
    };
  }
  return n;
}

Val Graph::mean_all(Val x) {
  const int64_t n_el = x->value.numel();
  double s = 0.0;
  for (int64_t i = 0; i < n_el; ++i) s += x->value[i];
  Tensor out({1});
  out[0] = s / static_cast<double>(n_el);
  Val n = make(std::move(out), {x});
  if (n->needs_grad) {
    Node* self = n.get();
    n->backprop = [self, x, n_el]() {
      x->ensure_grad();
      const double g = self->grad[0] / static_cast<double>(n_el);
      for (int64_t i = 0; i < n_el; ++i) x->grad[i] += g;
    };
  }
  return n;
}

Val Graph::mean_abs_diff(Val a, Val b) {
  check_same_shape(a->value, b->value, "mean_abs_diff");
  const int64_t n_el = a->value.numel();
  double s = 0.0;
  for (int64_t i = 0; i < n_el; ++i) s += std::fabs(a->value[i] - b->value[i]);
  Tensor out({1});
  out[0] = s / static_cast<double>(n_el);
  Val n = make(std::move(out), {a, b});
  if (n->needs_grad) {
    Node* self = n.get();
    n->backprop = [self, a, b, n_el]() {
      const double g = self->grad[0] / static_cast<double>(n_el);
      if (a->needs_grad) a->ensure_grad();
      if (b->needs_grad) b->ensure_grad();
      for (int64_t i = 0; i < n_el; ++i) {
        const double d = a->value[i] - b->value[i];
        const double sg = d > 0.0 ? g : (d < 0.0 ? -g : 0.0);
        if (a->needs_grad) a->grad[i] += sg;
        if (b->needs_grad) b->grad[i] -= sg;
      }
    };
  }
  return n;
}

void Graph::backward(const Val& loss) {
  if (loss->value.numel() != 1) throw internal_error("backward: loss must be scalar");
  loss->ensure_grad();
  loss->grad[0] = 1.0;
  for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
    Node& n = **it;
    if (!n.needs_grad || n.grad.empty() || !n.backprop) continue;
    n.backprop();
  }
}

}  // namespace nod::nn
