#include "nod/training.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "nod/errors.hpp"
#include "nod/image.hpp"
#include "nod/metrics.hpp"

namespace fs = std::filesystem;

namespace nod::train {

namespace {

// Stream tags keep every random draw a pure function of (seed, coordinates).
constexpr uint64_t kPhaseOp = 1;
constexpr uint64_t kPhaseDiff = 2;
constexpr uint64_t kPhaseSample = 3;
constexpr uint64_t kPhaseInit = 100;

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::string batch_str(const std::vector<size_t>& idx) {
  std::string s;
  for (size_t i : idx) {
    if (!s.empty()) s += ",";
    s += std::to_string(i);
  }
  return s;
}

}  // namespace

ConditionMode condition_mode_from_string(const std::string& s) {
  if (s == "bicubic") return ConditionMode::Bicubic;
  if (s == "encoder") return ConditionMode::Encoder;
  if (s == "neurop") return ConditionMode::NeurOp;
  throw config_error("unknown condition mode: " + s + " (want bicubic|encoder|neurop)");
}

std::string to_string(ConditionMode m) {
  switch (m) {
    case ConditionMode::Bicubic: return "bicubic";
    case ConditionMode::Encoder: return "encoder";
    case ConditionMode::NeurOp: return "neurop";
  }
  return "?";
}

void Conditioner::build(Rng& rng, int encoder_channels) {
  if (mode == ConditionMode::Encoder)
    proj = nn::Conv2d::make(proj_params, rng, "proj", encoder_channels, 3, 1, 1, 0);
}

Tensor Conditioner::prior(const op::NeuralOperator* oper, const Tensor& lr, double s, int out_h,
                          int out_w, bool allow_extrapolation) const {
  switch (mode) {
    case ConditionMode::Bicubic:
      return clamped(img::bicubic_resize(lr, out_h, out_w), -1.0, 1.0);
    case ConditionMode::Encoder: {
      if (oper == nullptr) throw checkpoint_error("encoder conditioning needs an operator");
      const Tensor up = img::nearest_resize(oper->encode(lr), out_h, out_w);
      nn::Graph g;
      nn::ParamCtx ctx{&proj_params, nullptr};
      return proj(g, ctx, g.leaf(up))->value;
    }
    case ConditionMode::NeurOp: {
      if (oper == nullptr) throw checkpoint_error("neurop conditioning needs an operator");
      Tensor y = oper->apply(lr, s, allow_extrapolation);
      if (y.dim(1) != out_h || y.dim(2) != out_w)
        throw internal_error("conditioner: operator output size mismatch");
      return y;
    }
  }
  throw internal_error("conditioner: bad mode");
}

nn::Val Conditioner::prior_graph(nn::Graph& g, nn::GradSink* sink,
                                 const op::NeuralOperator* oper, const Tensor& lr, double s,
                                 int out_h, int out_w) const {
  if (mode != ConditionMode::Encoder)
    return g.leaf(prior(oper, lr, s, out_h, out_w));
  if (oper == nullptr) throw checkpoint_error("encoder conditioning needs an operator");
  const Tensor up = img::nearest_resize(oper->encode(lr), out_h, out_w);
  nn::ParamCtx ctx{&proj_params, sink};
  return proj(g, ctx, g.leaf(up));
}

double lr_at(const PhaseTrainConfig& cfg, int64_t iter) {
  if (cfg.max_iters <= 0) throw config_error("lr_at: max_iters not resolved");
  return lr_at(cfg, iter, cfg.max_iters);
}

double lr_at(const PhaseTrainConfig& cfg, int64_t iter, int64_t max_iters) {
  if (iter < 0 || iter > max_iters) throw config_error("lr_at: iter outside [0, max_iters]");
  if (iter < cfg.warm_iters) return cfg.lr_init;
  const double span = static_cast<double>(max_iters - cfg.warm_iters);
  const double frac = span <= 0.0 ? 1.0 : static_cast<double>(iter - cfg.warm_iters) / span;
  return cfg.lr_min + 0.5 * (cfg.lr_init - cfg.lr_min) * (1.0 + std::cos(M_PI * frac));
}

namespace {

std::string save_operator_checkpoint(const std::string& dir, const std::string& name,
                                     const RunConfig& cfg, op::NeuralOperator& oper,
                                     nn::Adam& adam, int64_t iteration) {
  ckpt::CheckpointData d;
  d.phase = "operator";
  d.iteration = iteration;
  d.seed = cfg.seed;
  d.adam_steps["operator"] = adam.step();
  d.config_json = to_json(cfg);
  ckpt::append_registry(d, "operator.", oper.params, /*include_moments=*/true);
  const std::string path = dir + "/" + name;
  ckpt::write_checkpoint(path, d);
  return path;
}

std::string save_diffusion_checkpoint(const std::string& dir, const std::string& name,
                                      const RunConfig& cfg, ConditionMode mode,
                                      op::NeuralOperator* oper, den::UNetDenoiser& den,
                                      Conditioner& cond, nn::Adam& adam_den,
                                      nn::Adam& adam_cond, int64_t iteration) {
  ckpt::CheckpointData d;
  d.phase = "diffusion";
  d.condition = to_string(mode);
  d.iteration = iteration;
  d.seed = cfg.seed;
  d.adam_steps["denoiser"] = adam_den.step();
  d.adam_steps["conditioner"] = adam_cond.step();
  d.config_json = to_json(cfg);
  if (oper != nullptr)
    ckpt::append_registry(d, "operator.", oper->params, /*include_moments=*/false);
  ckpt::append_registry(d, "denoiser.", den.params, /*include_moments=*/true);
  if (cond.trainable())
    ckpt::append_registry(d, "conditioner.", cond.proj_params, /*include_moments=*/true);
  const std::string path = dir + "/" + name;
  ckpt::write_checkpoint(path, d);
  return path;
}

}  // namespace

TrainStats train_operator(const RunConfig& cfg, const data::Dataset& dataset,
                          const std::string& out_dir, const std::string& resume_path) {
  if (dataset.train.empty()) throw data_error("train_operator: empty training set");
  fs::create_directories(out_dir);
  const PhaseTrainConfig& tc = cfg.train.op;
  const int64_t max_iters = tc.resolved_iters(dataset.train.size());
  if (tc.warm_iters >= max_iters)
    throw config_error("train.operator: warm_iters must be < resolved iterations");

  op::NeuralOperator oper;
  oper.cfg = cfg.op;
  {
    Rng init = Rng::stream(cfg.seed, kPhaseInit, 1);
    oper.build(init);
  }
  nn::Adam adam;
  int64_t start_iter = 0;
  if (!resume_path.empty()) {
    const ckpt::CheckpointData d = ckpt::read_checkpoint(resume_path);
    if (d.phase != "operator") throw checkpoint_error("resume: not an operator checkpoint");
    ckpt::load_registry(d, "operator.", oper.params);
    start_iter = d.iteration;
    auto it = d.adam_steps.find("operator");
    if (it != d.adam_steps.end()) adam.set_step(it->second);
  }

  const double s_max = std::min(cfg.data.effective_max_scale(), cfg.op.max_scale);
  std::ofstream log(out_dir + "/train_operator.jsonl",
                    resume_path.empty() ? std::ios::trunc : std::ios::app);
  const double t0 = now_seconds();

  TrainStats stats;
  stats.losses.reserve(static_cast<size_t>(max_iters));
  for (int64_t iter = start_iter; iter < max_iters; ++iter) {
    const double lr = lr_at(tc, iter, max_iters);
    Rng master = Rng::stream(cfg.seed, kPhaseOp, static_cast<uint64_t>(iter), 0);
    std::vector<size_t> indices(static_cast<size_t>(tc.batch_size));
    for (auto& ix : indices)
      ix = static_cast<size_t>(master.uniform_int(0, static_cast<int64_t>(dataset.train.size()) - 1));

    nn::GradSink sink(oper.params.size());
    double batch_loss = 0.0;
    for (size_t slot = 0; slot < indices.size(); ++slot) {
      Rng rng = Rng::stream(cfg.seed, kPhaseOp, static_cast<uint64_t>(iter), slot + 1);
      const Tensor& hr = dataset.train[indices[slot]];
      const double s = data::sample_scale(rng, s_max);
      const data::ScalePair pair = data::make_pair(hr, s, cfg.data.min_lr_size);
      nn::Graph g;
      nn::Val out = oper.forward_graph(g, &sink, pair.lr, pair.hr.dim(1), pair.hr.dim(2));
      nn::Val loss = g.scale(g.mean_abs_diff(out, g.leaf(pair.hr)), 1.0 / tc.batch_size);
      g.backward(loss);
      batch_loss += loss->value[0];
    }
    if (!std::isfinite(batch_loss))
      throw numeric_error("train_operator: non-finite loss at iter " + std::to_string(iter) +
                          " (batch " + batch_str(indices) + ", seed " + std::to_string(cfg.seed) +
                          ")");
    adam.update(oper.params, sink, lr, tc.clip_norm);
    stats.losses.push_back(batch_loss);

    const int64_t done = iter + 1;
    if (done % tc.log_every == 0 || done == max_iters) {
      log << "{\"iter\":" << done << ",\"loss\":" << batch_loss << ",\"lr\":" << lr
          << ",\"elapsed_s\":" << now_seconds() - t0 << "}\n";
      log.flush();
    }
    if (done % tc.eval_every == 0 || done == max_iters) {
      const auto& probe = dataset.eval.empty() ? dataset.train : dataset.eval;
      double psnr_sum = 0.0;
      const size_t n = std::min<size_t>(probe.size(), 4);
      for (size_t i = 0; i < n; ++i) {
        const data::ScalePair pair = data::make_pair(probe[i], 2.0, cfg.data.min_lr_size);
        psnr_sum += metrics::psnr(oper.apply(pair.lr, pair.s), pair.hr);
      }
      log << "{\"iter\":" << done << ",\"eval_psnr\":" << psnr_sum / static_cast<double>(n)
          << "}\n";
      log.flush();
    }
    if (done % tc.checkpoint_every == 0 && done != max_iters)
      save_operator_checkpoint(out_dir, "ckpt_operator_" + std::to_string(done) + ".ckpt", cfg,
                               oper, adam, done);
  }
  stats.final_checkpoint =
      save_operator_checkpoint(out_dir, "ckpt_operator_final.ckpt", cfg, oper, adam, max_iters);
  return stats;
}

TrainStats train_diffusion(const RunConfig& cfg_in, const data::Dataset& dataset,
                           const std::string& operator_ckpt, ConditionMode mode,
                           const std::string& out_dir, const std::string& resume_path) {
  if (dataset.train.empty()) throw data_error("train_diffusion: empty training set");
  fs::create_directories(out_dir);

  RunConfig cfg = cfg_in;
  op::NeuralOperator oper;
  bool has_oper = false;
  if (mode != ConditionMode::Bicubic) {
    if (operator_ckpt.empty())
      throw checkpoint_error("condition mode " + to_string(mode) +
                             " requires an operator checkpoint");
    OperatorModel om = load_operator_model(operator_ckpt);
    cfg.op = om.config.op;  // the architecture that matches the weights
    oper = std::move(om.oper);
    has_oper = true;
  }

  const PhaseTrainConfig& tc = cfg.train.diff;
  const int64_t max_iters = tc.resolved_iters(dataset.train.size());
  if (tc.warm_iters >= max_iters)
    throw config_error("train.diffusion: warm_iters must be < resolved iterations");

  den::UNetDenoiser den;
  den.cfg = cfg.den;
  {
    Rng init = Rng::stream(cfg.seed, kPhaseInit, 2);
    den.build(init);
  }
  Conditioner cond;
  cond.mode = mode;
  {
    Rng init = Rng::stream(cfg.seed, kPhaseInit, 3);
    cond.build(init, cfg.op.encoder_channels);
  }
  const NoiseSchedule schedule = cfg.make_noise_schedule();

  nn::Adam adam_den, adam_cond;
  int64_t start_iter = 0;
  if (!resume_path.empty()) {
    const ckpt::CheckpointData d = ckpt::read_checkpoint(resume_path);
    if (d.phase != "diffusion") throw checkpoint_error("resume: not a diffusion checkpoint");
    if (d.condition != to_string(mode))
      throw checkpoint_error("resume: condition mode mismatch (" + d.condition + ")");
    ckpt::load_registry(d, "denoiser.", den.params);
    if (cond.trainable()) ckpt::load_registry(d, "conditioner.", cond.proj_params);
    start_iter = d.iteration;
    auto it = d.adam_steps.find("denoiser");
    if (it != d.adam_steps.end()) adam_den.set_step(it->second);
    it = d.adam_steps.find("conditioner");
    if (it != d.adam_steps.end()) adam_cond.set_step(it->second);
  }

  const std::string hash_before = has_oper ? ckpt::param_hash(oper.params) : "";
  const double s_max = std::min(cfg.data.effective_max_scale(), cfg.op.max_scale);
  std::ofstream log(out_dir + "/train_diffusion.jsonl",
                    resume_path.empty() ? std::ios::trunc : std::ios::app);
  const double t0 = now_seconds();

  TrainStats stats;
  stats.losses.reserve(static_cast<size_t>(max_iters));
  for (int64_t iter = start_iter; iter < max_iters; ++iter) {
    const double lr = lr_at(tc, iter, max_iters);
    Rng master = Rng::stream(cfg.seed, kPhaseDiff, static_cast<uint64_t>(iter), 0);
    std::vector<size_t> indices(static_cast<size_t>(tc.batch_size));
    for (auto& ix : indices)
      ix = static_cast<size_t>(master.uniform_int(0, static_cast<int64_t>(dataset.train.size()) - 1));

    nn::GradSink sink_den(den.params.size());
    nn::GradSink sink_cond(cond.proj_params.size());
    double batch_loss = 0.0;
    for (size_t slot = 0; slot < indices.size(); ++slot) {
      Rng rng = Rng::stream(cfg.seed, kPhaseDiff, static_cast<uint64_t>(iter), slot + 1);
      const Tensor& hr = dataset.train[indices[slot]];
      const double s = data::sample_scale(rng, s_max);
      const data::ScalePair pair = data::make_pair(hr, s, cfg.data.min_lr_size);
      nn::Graph g;
      nn::Val y = cond.prior_graph(g, cond.trainable() ? &sink_cond : nullptr,
                                   has_oper ? &oper : nullptr, pair.lr, pair.s, pair.hr.dim(1),
                                   pair.hr.dim(2));
      const diffusion::NoiseDraw draw = diffusion::make_noise_draw(pair.hr, schedule, rng);
      nn::Val zt = g.leaf(draw.zt);
      nn::Val pred = den.predict_graph(g, &sink_den, y, zt, draw.gamma, /*train=*/true, &rng);
      nn::Val loss = g.scale(g.mean_abs_diff(pred, g.leaf(draw.eps)), 1.0 / tc.batch_size);
      g.backward(loss);
      batch_loss += loss->value[0];
    }
    if (!std::isfinite(batch_loss))
      throw numeric_error("train_diffusion: non-finite loss at iter " + std::to_string(iter) +
                          " (batch " + batch_str(indices) + ", seed " + std::to_string(cfg.seed) +
                          ")");
    adam_den.update(den.params, sink_den, lr, tc.clip_norm);
    if (cond.trainable()) adam_cond.update(cond.proj_params, sink_cond, lr, tc.clip_norm);
    stats.losses.push_back(batch_loss);

    const int64_t done = iter + 1;
    if (done % tc.log_every == 0 || done == max_iters) {
      log << "{\"iter\":" << done << ",\"loss\":" << batch_loss << ",\"lr\":" << lr
          << ",\"elapsed_s\":" << now_seconds() - t0 << "}\n";
      log.flush();
    }
    if (done % tc.checkpoint_every == 0 && done != max_iters)
      save_diffusion_checkpoint(out_dir, "ckpt_diffusion_" + std::to_string(done) + ".ckpt", cfg,
                                mode, has_oper ? &oper : nullptr, den, cond, adam_den, adam_cond,
                                done);
  }

  if (has_oper && ckpt::param_hash(oper.params) != hash_before)
    throw internal_error("train_diffusion: frozen operator parameters changed");

  stats.final_checkpoint = save_diffusion_checkpoint(
      out_dir, "ckpt_diffusion_final.ckpt", cfg, mode, has_oper ? &oper : nullptr, den, cond,
      adam_den, adam_cond, max_iters);
  return stats;
}

OperatorModel load_operator_model(const std::string& ckpt_path) {
  const ckpt::CheckpointData d = ckpt::read_checkpoint(ckpt_path);
  OperatorModel m;
  m.config = parse_run_config(d.config_json);
  m.oper.cfg = m.config.op;
  Rng init = Rng::stream(m.config.seed, kPhaseInit, 1);
  m.oper.build(init);
  ckpt::load_registry(d, "operator.", m.oper.params);
  return m;
}

SrModel load_sr_model(const std::string& diffusion_ckpt_path) {
  const ckpt::CheckpointData d = ckpt::read_checkpoint(diffusion_ckpt_path);
  if (d.phase != "diffusion")
    throw checkpoint_error("sampling requires a diffusion checkpoint, got phase \"" + d.phase +
                           "\"");
  SrModel m;
  m.config = parse_run_config(d.config_json);
  m.schedule = m.config.make_noise_schedule();
  m.denoiser.cfg = m.config.den;
  {
    Rng init = Rng::stream(m.config.seed, kPhaseInit, 2);
    m.denoiser.build(init);
  }
  ckpt::load_registry(d, "denoiser.", m.denoiser.params);
  m.cond.mode = condition_mode_from_string(d.condition.empty() ? "neurop" : d.condition);
  {
    Rng init = Rng::stream(m.config.seed, kPhaseInit, 3);
    m.cond.build(init, m.config.op.encoder_channels);
  }
  if (m.cond.trainable()) ckpt::load_registry(d, "conditioner.", m.cond.proj_params);
  if (m.cond.mode != ConditionMode::Bicubic) {
    m.oper.cfg = m.config.op;
    Rng init = Rng::stream(m.config.seed, kPhaseInit, 1);
    m.oper.build(init);
    ckpt::load_registry(d, "operator.", m.oper.params);
    m.has_operator = true;
  }
  return m;
}

Tensor sample_sr(const SrModel& model, const Tensor& lr, double s, int steps, uint64_t seed,
                 bool allow_extrapolation) {
  if (!(s > 1.0)) throw numeric_error("sample: scale must be > 1");
  if (!allow_extrapolation && s > model.config.op.max_scale + 1e-9)
    throw numeric_error("sample: scale above max_scale " +
                        std::to_string(model.config.op.max_scale));
  const auto [oh, ow] = img::scaled_size(lr.dim(1), lr.dim(2), s);
  const int div = 1 << model.denoiser.cfg.depth;
  if (oh % div != 0 || ow % div != 0)
    throw numeric_error("sample: target size " + std::to_string(ow) + "x" + std::to_string(oh) +
                        " not divisible by 2^depth = " + std::to_string(div));
  const Tensor y = model.cond.prior(model.has_operator ? &model.oper : nullptr, lr, s, oh, ow,
                                    allow_extrapolation);
  const InferencePlan plan = inference_subsequence(model.schedule, steps);
  Rng rng = Rng::stream(seed, kPhaseSample);
  diffusion::DenoiseFn fn = [&model](const Tensor& yy, const Tensor& zt, double gamma) {
    return model.denoiser.predict(yy, zt, gamma);
  };
  return diffusion::sample(fn, y, plan, rng);
}

}  // namespace nod::train
