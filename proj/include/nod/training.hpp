#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nod/checkpoint.hpp"
#include "nod/config.hpp"
#include "nod/data.hpp"
#include "nod/denoiser.hpp"
#include "nod/diffusion.hpp"
#include "nod/neural_operator.hpp"

namespace nod::train {

enum class ConditionMode { Bicubic, Encoder, NeurOp };

ConditionMode condition_mode_from_string(const std::string& s);
std::string to_string(ConditionMode m);

// Produces the prior y fed to the denoiser. bicubic: upsampled LR;
// encoder: frozen encoder features, nearest-upsampled, through a learned
// 1x1 projection (the only trainable part); neurop: the full operator.
// The operator is passed per call and may be null for the bicubic mode.
struct Conditioner {
  ConditionMode mode = ConditionMode::NeurOp;
  nn::ParamRegistry proj_params;  // encoder mode only
  nn::Conv2d proj;

  void build(Rng& rng, int encoder_channels);
  bool trainable() const { return mode == ConditionMode::Encoder; }

  Tensor prior(const op::NeuralOperator* oper, const Tensor& lr, double s, int out_h,
               int out_w, bool allow_extrapolation = false) const;
  nn::Val prior_graph(nn::Graph& g, nn::GradSink* sink, const op::NeuralOperator* oper,
                      const Tensor& lr, double s, int out_h, int out_w) const;
};

// Learning-rate schedule: constant lr_init for the warm window, then cosine
// decay to lr_min at max_iters. `iter` must lie in [0, max_iters].
double lr_at(const PhaseTrainConfig& cfg, int64_t iter);
double lr_at(const PhaseTrainConfig& cfg, int64_t iter, int64_t max_iters);

struct TrainStats {
  std::vector<double> losses;  // one entry per iteration
  std::string final_checkpoint;
};

// Phase 1: minimizes L1(operator(lr, s), hr) with Adam. Writes periodic and
// final checkpoints plus a JSONL training log under out_dir. A non-finite
// loss aborts with the offending iteration, batch indices and seed.
TrainStats train_operator(const RunConfig& cfg, const data::Dataset& dataset,
                          const std::string& out_dir, const std::string& resume_path = "");

// Phase 2: freezes the operator (hash-checked) and trains the denoiser
// (plus the encoder-mode projection) on the noise-prediction L1 loss.
// operator_ckpt may be empty only for the bicubic mode.
TrainStats train_diffusion(const RunConfig& cfg, const data::Dataset& dataset,
                           const std::string& operator_ckpt, ConditionMode mode,
                           const std::string& out_dir, const std::string& resume_path = "");

// Everything needed to run inference from a diffusion checkpoint.
struct SrModel {
  RunConfig config;
  NoiseSchedule schedule;
  op::NeuralOperator oper;
  den::UNetDenoiser denoiser;
  Conditioner cond;
  bool has_operator = false;
};

SrModel load_sr_model(const std::string& diffusion_ckpt_path);

// Conditional sampling at scale s with K uniformly spaced steps.
Tensor sample_sr(const SrModel& model, const Tensor& lr, double s, int steps, uint64_t seed,
                 bool allow_extrapolation = false);

// Loads just the operator from a phase-1 (or phase-2) checkpoint.
struct OperatorModel {
  RunConfig config;
  op::NeuralOperator oper;
};

OperatorModel load_operator_model(const std::string& ckpt_path);

}  // namespace nod::train
