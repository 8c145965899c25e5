#pragma once

#include <string>
#include <vector>

#include "nod/rng.hpp"

namespace nod {

// Diffusion noise schedule: per-step retention alpha_t and its running
// product gamma_t, with the convention gamma_0 = 1 so the t = 1 posterior
// collapses onto the clean image. Immutable after construction.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> alpha;  // alpha[t-1] = alpha_t, t = 1..T
  std::vector<double> gamma;  // gamma[t-1] = prod_{i<=t} alpha_i

  double alpha_at(int t) const;  // t in [1, T]
  double gamma_at(int t) const;  // t in [0, T]; gamma_at(0) == 1
};

enum class ScheduleKind { Constant, LinearBeta };

ScheduleKind schedule_kind_from_string(const std::string& s);
std::string to_string(ScheduleKind k);

struct ScheduleParams {
  double alpha = 0.98;        // Constant family
  double beta_start = 1e-6;   // LinearBeta family
  double beta_end = 1e-2;
};

// Builds a schedule; rejects T < 1 and parameters that put any alpha_t
// outside (0,1).
NoiseSchedule make_schedule(ScheduleKind kind, int T, const ScheduleParams& params = {});

struct GammaDraw {
  double gamma = 0.0;
  int t = 0;
};

// Continuous noise-level draw for training: t uniform over {1..T}, then
// gamma uniform over (gamma_t, gamma_{t-1}).
GammaDraw sample_gamma(const NoiseSchedule& schedule, Rng& rng);

// Descending timestep subsequence for accelerated inference. Endpoints are
// always included: steps.front() == T and steps.back() == 1.
struct InferencePlan {
  std::vector<int> steps;
  const NoiseSchedule* schedule = nullptr;
};

// K indices uniformly spaced over [1, T]. Requires 1 <= K <= T and, when
// T >= 2, K >= 2 so both endpoints fit.
InferencePlan inference_subsequence(const NoiseSchedule& schedule, int K);

}  // namespace nod
