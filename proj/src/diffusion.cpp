#include "nod/diffusion.hpp"

#include <cmath>

#include "nod/errors.hpp"

namespace nod::diffusion {

Tensor forward_step(const Tensor& z_prev, double alpha_t, const Tensor& eps) {
  if (!(alpha_t > 0.0 && alpha_t < 1.0)) throw numeric_error("forward_step: alpha outside (0,1)");
  check_same_shape(z_prev, eps, "forward_step");
  return add_scaled(z_prev, std::sqrt(alpha_t), eps, std::sqrt(1.0 - alpha_t));
}

Tensor forward_marginal(const Tensor& z0, double gamma, const Tensor& eps) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw numeric_error("forward_marginal: gamma outside (0,1]");
  check_same_shape(z0, eps, "forward_marginal");
  return add_scaled(z0, std::sqrt(gamma), eps, std::sqrt(1.0 - gamma));
}

PosteriorParams posterior_params(const Tensor& z0, const Tensor& zt,
                                 const NoiseSchedule& schedule, int t) {
  if (t < 1 || t > schedule.T) throw numeric_error("posterior_params: t out of [1, T]");
  check_same_shape(z0, zt, "posterior_params");
  const double alpha_t = schedule.alpha_at(t);
  const double gamma_t = schedule.gamma_at(t);
  const double gamma_prev = schedule.gamma_at(t - 1);
  const double denom = 1.0 - gamma_t;
  if (denom <= 0.0) throw numeric_error("posterior_params: gamma_t == 1");
  PosteriorParams p;
  const double c0 = std::sqrt(gamma_prev) * (1.0 - alpha_t) / denom;
  const double ct = std::sqrt(alpha_t) * (1.0 - gamma_prev) / denom;
  p.mu = add_scaled(z0, c0, zt, ct);
  p.sigma2 = (1.0 - gamma_prev) * (1.0 - alpha_t) / denom;
  return p;
}

NoiseDraw make_noise_draw(const Tensor& z0, const NoiseSchedule& schedule, Rng& rng) {
  NoiseDraw d;
  const GammaDraw g = sample_gamma(schedule, rng);
  d.gamma = g.gamma;
  d.t = g.t;
  d.eps = Tensor::randn(z0.shape(), rng);
  d.zt = forward_marginal(z0, d.gamma, d.eps);
  return d;
}

double training_step_loss(const DenoiseFn& denoiser, const Tensor& y, const Tensor& z0,
                          const NoiseSchedule& schedule, Rng& rng) {
  if (y.dim(1) != z0.dim(1) || y.dim(2) != z0.dim(2))
    throw internal_error("training_step_loss: y/z0 spatial mismatch");
  const NoiseDraw d = make_noise_draw(z0, schedule, rng);
  const Tensor pred = denoiser(y, d.zt, d.gamma);
  return mean_abs_difference(pred, d.eps);
}

Tensor reverse_segment(const Tensor& zt, const Tensor& eps_hat, double alpha_eff,
                       double gamma_t, const Tensor* eps) {
  check_same_shape(zt, eps_hat, "reverse_segment");
  if (!(alpha_eff > 0.0 && alpha_eff < 1.0))
    throw numeric_error("reverse_segment: alpha_eff outside (0,1)");
  if (!(gamma_t > 0.0 && gamma_t < 1.0))
    throw numeric_error("reverse_segment: gamma_t outside (0,1)");
  const double mean_scale = 1.0 / std::sqrt(alpha_eff);
  const double eps_coeff = (1.0 - alpha_eff) / std::sqrt(1.0 - gamma_t);
  Tensor out = add_scaled(zt, mean_scale, eps_hat, -mean_scale * eps_coeff);
  if (eps != nullptr) {
    check_same_shape(zt, *eps, "reverse_segment noise");
    const double sigma = std::sqrt(1.0 - alpha_eff);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += sigma * (*eps)[i];
  }
  return out;
}

Tensor reverse_step(const Tensor& eps_hat, const Tensor& zt, const NoiseSchedule& schedule,
                    int t, const Tensor* eps) {
  if (t < 1 || t > schedule.T) throw numeric_error("reverse_step: t out of [1, T]");
  if (t == 1) eps = nullptr;  // no noise on the final step
  return reverse_segment(zt, eps_hat, schedule.alpha_at(t), schedule.gamma_at(t), eps);
}

Tensor sample(const DenoiseFn& denoiser, const Tensor& y, const InferencePlan& plan, Rng& rng) {
  if (plan.schedule == nullptr || plan.steps.empty()) throw internal_error("sample: empty plan");
  const NoiseSchedule& s = *plan.schedule;
  Tensor z = Tensor::randn(y.shape(), rng);
  const size_t K = plan.steps.size();
  for (size_t i = 0; i < K; ++i) {
    const int t = plan.steps[i];
    const int t_next = i + 1 < K ? plan.steps[i + 1] : 0;
    const double gamma_t = s.gamma_at(t);
    const double alpha_eff = gamma_t / s.gamma_at(t_next);
    const Tensor eps_hat = denoiser(y, z, gamma_t);
    if (i + 1 < K) {
      const Tensor eps = Tensor::randn(z.shape(), rng);
      z = reverse_segment(z, eps_hat, alpha_eff, gamma_t, &eps);
    } else {
      z = reverse_segment(z, eps_hat, alpha_eff, gamma_t, nullptr);
    }
  }
  return clamped(z, -1.0, 1.0);
}

}  // namespace nod::diffusion
