#pragma once

#include <functional>

#include "nod/rng.hpp"
#include "nod/schedule.hpp"
#include "nod/tensor.hpp"

namespace nod::diffusion {

// Noise predictor in evaluation mode: (prior y, noisy z_t, gamma) -> eps_hat.
using DenoiseFn = std::function<Tensor(const Tensor& y, const Tensor& zt, double gamma)>;

// One step of the forward chain: sqrt(a)*z_prev + sqrt(1-a)*eps.
Tensor forward_step(const Tensor& z_prev, double alpha_t, const Tensor& eps);

// Closed-form marginal: sqrt(g)*z0 + sqrt(1-g)*eps, g in (0, 1].
Tensor forward_marginal(const Tensor& z0, double gamma, const Tensor& eps);

struct PosteriorParams {
  Tensor mu;
  double sigma2 = 0.0;
};

// Gaussian posterior q(z_{t-1} | z0, z_t) for 1 <= t <= T. With gamma_0 = 1
// the variance at t = 1 is exactly zero and mu collapses onto z0.
PosteriorParams posterior_params(const Tensor& z0, const Tensor& zt,
                                 const NoiseSchedule& schedule, int t);

// Per-sample noise realization used by the training loss; factored out so
// the plain and autograd training paths consume randomness identically.
struct NoiseDraw {
  double gamma = 0.0;
  int t = 0;
  Tensor eps;
  Tensor zt;
};

NoiseDraw make_noise_draw(const Tensor& z0, const NoiseSchedule& schedule, Rng& rng);

// Draws (gamma, t) and eps, forms z_t, and returns mean |denoiser(...) - eps|.
double training_step_loss(const DenoiseFn& denoiser, const Tensor& y, const Tensor& z0,
                          const NoiseSchedule& schedule, Rng& rng);

// Reverse update over one segment with effective retention alpha_eff
// (= gamma_t / gamma_{t_next}); eps == nullptr means the deterministic
// final step. Conditioning gamma is gamma_t of the segment start.
Tensor reverse_segment(const Tensor& zt, const Tensor& eps_hat, double alpha_eff,
                       double gamma_t, const Tensor* eps);

// Single-step reverse update at timestep t; noise is forced to zero at t = 1.
Tensor reverse_step(const Tensor& eps_hat, const Tensor& zt, const NoiseSchedule& schedule,
                    int t, const Tensor* eps);

// Full conditional sampler: z_T ~ N(0, I), reverse updates along the plan
// (skipped segments use the effective alpha), final output clamped to [-1,1].
Tensor sample(const DenoiseFn& denoiser, const Tensor& y, const InferencePlan& plan, Rng& rng);

}  // namespace nod::diffusion
