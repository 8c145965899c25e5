#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "nod/data.hpp"
#include "nod/denoiser.hpp"
#include "nod/neural_operator.hpp"
#include "nod/schedule.hpp"

namespace nod {

// Per-phase optimizer settings. Either max_iters or epochs must be set
// (epochs are converted to iterations once the dataset size is known).
struct PhaseTrainConfig {
  int batch_size = 1;
  int64_t max_iters = 0;
  int64_t epochs = 0;
  double lr_init = 1e-4;
  double lr_min = 2e-6;
  int64_t warm_iters = 0;  // constant-lr window before the decay
  double clip_norm = 1.0;
  int64_t log_every = 50;
  int64_t eval_every = 500;
  int64_t checkpoint_every = 1000;

  void validate(const std::string& where) const;
  int64_t resolved_iters(size_t train_images) const;
};

struct TrainSection {
  PhaseTrainConfig op;    // phase 1: operator pretraining
  PhaseTrainConfig diff;  // phase 2: denoiser training
};

struct SampleConfig {
  int steps = 50;
};

struct ScheduleSection {
  ScheduleKind kind = ScheduleKind::LinearBeta;
  int steps = 2000;  // T
  ScheduleParams params;
};

// The full run configuration: JSON document with sections
// {data, schedule, operator, denoiser, train, sample} plus profile and seed.
struct RunConfig {
  std::string profile = "toy";
  uint64_t seed = 0;
  data::DatasetConfig data;
  ScheduleSection schedule;
  op::OperatorConfig op;
  den::DenoiserConfig den;
  TrainSection train;
  SampleConfig sample;

  NoiseSchedule make_noise_schedule() const {
    return make_schedule(schedule.kind, schedule.steps, schedule.params);
  }
};

// Built-in defaults. "toy" targets desk-scale CPU runs; "paper" carries the
// published protocol values (T=2000, batch 64/10, lr 1e-4 -> 2e-6, 0.1M
// warm iterations, ~1M diffusion iterations, 256px crops, M = 8).
RunConfig default_config(const std::string& profile);

// Parses and validates a config document. Unknown keys anywhere are
// rejected. Values start from the profile defaults and are overridden by
// whatever the document sets.
RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::string& path);

// Fully resolved round-trippable form.
nlohmann::json to_json(const RunConfig& cfg);

}  // namespace nod
