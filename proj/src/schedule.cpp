#include "nod/schedule.hpp"

#include <cmath>

#include "nod/errors.hpp"

namespace nod {

double NoiseSchedule::alpha_at(int t) const {
  if (t < 1 || t > T) throw internal_error("alpha_at: t out of range");
  return alpha[static_cast<size_t>(t) - 1];
}

double NoiseSchedule::gamma_at(int t) const {
  if (t < 0 || t > T) throw internal_error("gamma_at: t out of range");
  return t == 0 ? 1.0 : gamma[static_cast<size_t>(t) - 1];
}

ScheduleKind schedule_kind_from_string(const std::string& s) {
  if (s == "constant") return ScheduleKind::Constant;
  if (s == "linear-beta") return ScheduleKind::LinearBeta;
  throw config_error("unknown schedule kind: " + s);
}

std::string to_string(ScheduleKind k) {
  return k == ScheduleKind::Constant ? "constant" : "linear-beta";
}

NoiseSchedule make_schedule(ScheduleKind kind, int T, const ScheduleParams& params) {
  if (T < 1) throw config_error("schedule: T must be >= 1");
  NoiseSchedule s;
  s.T = T;
  s.alpha.resize(static_cast<size_t>(T));
  s.gamma.resize(static_cast<size_t>(T));
  for (int t = 1; t <= T; ++t) {
    double a = 0.0;
    switch (kind) {
      case ScheduleKind::Constant:
        a = params.alpha;
        break;
      case ScheduleKind::LinearBeta: {
        const double frac = T == 1 ? 0.0 : static_cast<double>(t - 1) / (T - 1);
        const double beta = params.beta_start + (params.beta_end - params.beta_start) * frac;
        a = 1.0 - beta;
        break;
      }
    }
    if (!(a > 0.0 && a < 1.0))
      throw config_error("schedule: alpha_" + std::to_string(t) + " = " + std::to_string(a) +
                         " outside (0,1)");
    s.alpha[static_cast<size_t>(t) - 1] = a;
    s.gamma[static_cast<size_t>(t) - 1] = (t == 1 ? 1.0 : s.gamma[static_cast<size_t>(t) - 2]) * a;
  }
  return s;
}

GammaDraw sample_gamma(const NoiseSchedule& schedule, Rng& rng) {
  if (schedule.T < 1) throw config_error("sample_gamma: invalid schedule");
  const int t = static_cast<int>(rng.uniform_int(1, schedule.T));
  const double hi = schedule.gamma_at(t - 1);
  const double lo = schedule.gamma_at(t);
  return GammaDraw{rng.uniform(lo, hi), t};
}

InferencePlan inference_subsequence(const NoiseSchedule& schedule, int K) {
  const int T = schedule.T;
  if (K < 1 || K > T) throw config_error("inference_subsequence: K out of [1, T]");
  if (T >= 2 && K < 2)
    throw config_error("inference_subsequence: K must be >= 2 so both endpoints are included");
  InferencePlan plan;
  plan.schedule = &schedule;
  plan.steps.resize(static_cast<size_t>(K));
  if (K == 1) {
    plan.steps[0] = T;  // only possible when T == 1
    return plan;
  }
  for (int j = 0; j < K; ++j) {
    const double u = 1.0 + static_cast<double>(T - 1) * j / (K - 1);
    plan.steps[static_cast<size_t>(K - 1 - j)] = static_cast<int>(std::llround(u));
  }
  return plan;
}

}  // namespace nod
