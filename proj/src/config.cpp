#include "nod/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "nod/errors.hpp"

namespace nod {

void PhaseTrainConfig::validate(const std::string& where) const {
  if (batch_size < 1) throw config_error(where + ": batch_size must be >= 1");
  if ((max_iters > 0) == (epochs > 0))
    throw config_error(where + ": exactly one of max_iters or epochs must be set");
  if (!(lr_min < lr_init)) throw config_error(where + ": lr_min must be < lr_init");
  if (max_iters > 0 && warm_iters >= max_iters)
    throw config_error(where + ": warm_iters must be < max_iters");
  if (warm_iters < 0 || clip_norm < 0.0) throw config_error(where + ": negative value");
  if (log_every < 1 || checkpoint_every < 1 || eval_every < 1)
    throw config_error(where + ": intervals must be >= 1");
}

int64_t PhaseTrainConfig::resolved_iters(size_t train_images) const {
  if (max_iters > 0) return max_iters;
  const int64_t per_epoch =
      (static_cast<int64_t>(train_images) + batch_size - 1) / batch_size;
  return epochs * std::max<int64_t>(1, per_epoch);
}

RunConfig default_config(const std::string& profile) {
  RunConfig c;
  c.profile = profile;
  c.seed = 0;
  if (profile == "toy") {
    c.data.hr_size = 48;
    c.data.max_scale = 8.0;
    c.data.split_fraction = 0.8;
    c.schedule.kind = ScheduleKind::LinearBeta;
    c.schedule.steps = 2000;
    c.schedule.params.beta_start = 1e-6;
    c.schedule.params.beta_end = 1e-2;
    c.op.latent_dim = 32;
    c.op.num_layers = 3;
    c.op.encoder_blocks = 4;
    c.op.encoder_channels = 32;
    c.op.head_hidden = 128;
    c.op.max_scale = c.data.max_scale;
    c.den.base_channels = 16;
    c.den.depth = 3;
    c.den.dropout = 0.2;
    c.den.gamma_embed_dim = 64;
    c.den.groups = 8;
    c.train.op = PhaseTrainConfig{8, 2000, 0, 1e-3, 1e-5, 200, 1.0, 50, 500, 1000};
    c.train.diff = PhaseTrainConfig{2, 5000, 0, 2e-4, 2e-6, 500, 1.0, 50, 1000, 2500};
    c.sample.steps = 50;
  } else if (profile == "paper") {
    c.data.hr_size = 256;
    c.data.max_scale = 8.0;
    c.data.split_fraction = 0.8;
    c.schedule.kind = ScheduleKind::LinearBeta;
    c.schedule.steps = 2000;
    c.schedule.params.beta_start = 1e-6;
    c.schedule.params.beta_end = 1e-2;
    c.op.latent_dim = 64;
    c.op.num_layers = 4;
    c.op.encoder_blocks = 16;
    c.op.encoder_channels = 64;
    c.op.head_hidden = 256;
    c.op.max_scale = c.data.max_scale;
    c.den.base_channels = 64;
    c.den.depth = 4;
    c.den.dropout = 0.2;
    c.den.gamma_embed_dim = 128;
    c.den.groups = 32;
    c.train.op = PhaseTrainConfig{64, 0, 500, 1e-4, 2e-6, 100000, 1.0, 100, 5000, 10000};
    c.train.diff = PhaseTrainConfig{10, 1000000, 0, 1e-4, 2e-6, 100000, 1.0, 100, 5000, 10000};
    c.sample.steps = 50;
  } else {
    throw config_error("unknown profile: " + profile + " (want toy or paper)");
  }
  return c;
}

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::set<std::string>& known,
                    const std::string& where) {
  if (!obj.is_object()) throw config_error(where + ": expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (known.find(it.key()) == known.end())
      throw config_error(where + ": unknown key \"" + it.key() + "\"");
}

template <typename T>
void get_num(const json& obj, const char* key, T& out, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  if (!it->is_number()) throw config_error(where + "." + key + ": expected a number");
  out = it->get<T>();
}

void get_str(const json& obj, const char* key, std::string& out, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  if (!it->is_string()) throw config_error(where + "." + key + ": expected a string");
  out = it->get<std::string>();
}

void parse_phase(const json& obj, PhaseTrainConfig& p, const std::string& where) {
  reject_unknown(obj,
                 {"batch_size", "max_iters", "epochs", "lr_init", "lr_min", "warm_iters",
                  "clip_norm", "log_every", "eval_every", "checkpoint_every"},
                 where);
  get_num(obj, "batch_size", p.batch_size, where);
  if (obj.contains("max_iters")) {
    get_num(obj, "max_iters", p.max_iters, where);
    if (!obj.contains("epochs")) p.epochs = 0;
  }
  if (obj.contains("epochs")) {
    get_num(obj, "epochs", p.epochs, where);
    if (!obj.contains("max_iters")) p.max_iters = 0;
  }
  get_num(obj, "lr_init", p.lr_init, where);
  get_num(obj, "lr_min", p.lr_min, where);
  get_num(obj, "warm_iters", p.warm_iters, where);
  get_num(obj, "clip_norm", p.clip_norm, where);
  get_num(obj, "log_every", p.log_every, where);
  get_num(obj, "eval_every", p.eval_every, where);
  get_num(obj, "checkpoint_every", p.checkpoint_every, where);
}

}  // namespace

RunConfig parse_run_config(const nlohmann::json& doc) {
  reject_unknown(doc, {"profile", "seed", "data", "schedule", "operator", "denoiser", "train",
                       "sample"},
                 "config");
  std::string profile = "toy";
  get_str(doc, "profile", profile, "config");
  RunConfig c = default_config(profile);
  get_num(doc, "seed", c.seed, "config");

  if (doc.contains("data")) {
    const json& d = doc["data"];
    reject_unknown(d, {"root", "hr_size", "max_scale", "split_fraction", "split_seed",
                       "min_lr_size"},
                   "data");
    get_str(d, "root", c.data.root, "data");
    get_num(d, "hr_size", c.data.hr_size, "data");
    get_num(d, "max_scale", c.data.max_scale, "data");
    get_num(d, "split_fraction", c.data.split_fraction, "data");
    get_num(d, "split_seed", c.data.split_seed, "data");
    get_num(d, "min_lr_size", c.data.min_lr_size, "data");
    c.op.max_scale = c.data.max_scale;
  }
  if (doc.contains("schedule")) {
    const json& s = doc["schedule"];
    reject_unknown(s, {"kind", "steps", "beta_start", "beta_end", "alpha"}, "schedule");
    std::string kind = to_string(c.schedule.kind);
    get_str(s, "kind", kind, "schedule");
    c.schedule.kind = schedule_kind_from_string(kind);
    get_num(s, "steps", c.schedule.steps, "schedule");
    get_num(s, "beta_start", c.schedule.params.beta_start, "schedule");
    get_num(s, "beta_end", c.schedule.params.beta_end, "schedule");
    get_num(s, "alpha", c.schedule.params.alpha, "schedule");
  }
  if (doc.contains("operator")) {
    const json& o = doc["operator"];
    reject_unknown(o, {"latent_dim", "num_layers", "encoder_blocks", "encoder_channels",
                       "head_hidden"},
                   "operator");
    get_num(o, "latent_dim", c.op.latent_dim, "operator");
    get_num(o, "num_layers", c.op.num_layers, "operator");
    get_num(o, "encoder_blocks", c.op.encoder_blocks, "operator");
    get_num(o, "encoder_channels", c.op.encoder_channels, "operator");
    get_num(o, "head_hidden", c.op.head_hidden, "operator");
  }
  if (doc.contains("denoiser")) {
    const json& d = doc["denoiser"];
    reject_unknown(d, {"base_channels", "depth", "channel_mults", "dropout", "gamma_embed_dim",
                       "groups"},
                   "denoiser");
    get_num(d, "base_channels", c.den.base_channels, "denoiser");
    get_num(d, "depth", c.den.depth, "denoiser");
    get_num(d, "dropout", c.den.dropout, "denoiser");
    get_num(d, "gamma_embed_dim", c.den.gamma_embed_dim, "denoiser");
    get_num(d, "groups", c.den.groups, "denoiser");
    if (d.contains("channel_mults")) {
      if (!d["channel_mults"].is_array())
        throw config_error("denoiser.channel_mults: expected an array");
      c.den.channel_mults.clear();
      for (const auto& v : d["channel_mults"]) {
        if (!v.is_number()) throw config_error("denoiser.channel_mults: expected numbers");
        c.den.channel_mults.push_back(v.get<int>());
      }
    }
  }
  if (doc.contains("train")) {
    const json& t = doc["train"];
    reject_unknown(t, {"operator", "diffusion"}, "train");
    if (t.contains("operator")) parse_phase(t["operator"], c.train.op, "train.operator");
    if (t.contains("diffusion")) parse_phase(t["diffusion"], c.train.diff, "train.diffusion");
  }
  if (doc.contains("sample")) {
    const json& s = doc["sample"];
    reject_unknown(s, {"steps"}, "sample");
    get_num(s, "steps", c.sample.steps, "sample");
  }

  // Cross-field validation before any work happens.
  c.data.validate();
  c.op.validate();
  c.den.validate();
  c.train.op.validate("train.operator");
  c.train.diff.validate("train.diffusion");
  if (c.sample.steps < 1) throw config_error("sample.steps must be >= 1");
  if (c.schedule.steps >= 2 && c.sample.steps < 2)
    throw config_error("sample.steps must be >= 2 so both endpoints are included");
  if (c.sample.steps > c.schedule.steps)
    throw config_error("sample.steps cannot exceed schedule.steps");
  if (c.data.hr_size % (1 << c.den.depth) != 0)
    throw config_error("data.hr_size must be divisible by 2^denoiser.depth");
  make_schedule(c.schedule.kind, c.schedule.steps, c.schedule.params);  // parameter check
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("malformed JSON in ") + path + ": " + e.what());
  }
  return parse_run_config(doc);
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["profile"] = c.profile;
  j["seed"] = c.seed;
  j["data"] = {{"root", c.data.root},
               {"hr_size", c.data.hr_size},
               {"max_scale", c.data.max_scale},
               {"split_fraction", c.data.split_fraction},
               {"split_seed", c.data.split_seed},
               {"min_lr_size", c.data.min_lr_size}};
  j["schedule"] = {{"kind", to_string(c.schedule.kind)},
                   {"steps", c.schedule.steps},
                   {"beta_start", c.schedule.params.beta_start},
                   {"beta_end", c.schedule.params.beta_end},
                   {"alpha", c.schedule.params.alpha}};
  j["operator"] = {{"latent_dim", c.op.latent_dim},
                   {"num_layers", c.op.num_layers},
                   {"encoder_blocks", c.op.encoder_blocks},
                   {"encoder_channels", c.op.encoder_channels},
                   {"head_hidden", c.op.head_hidden}};
  j["denoiser"] = {{"base_channels", c.den.base_channels},
                   {"depth", c.den.depth},
                   {"dropout", c.den.dropout},
                   {"gamma_embed_dim", c.den.gamma_embed_dim},
                   {"groups", c.den.groups}};
  if (!c.den.channel_mults.empty()) j["denoiser"]["channel_mults"] = c.den.channel_mults;
  auto phase_json = [](const PhaseTrainConfig& p) {
    nlohmann::json o = {{"batch_size", p.batch_size}, {"lr_init", p.lr_init},
                        {"lr_min", p.lr_min},         {"warm_iters", p.warm_iters},
                        {"clip_norm", p.clip_norm},   {"log_every", p.log_every},
                        {"eval_every", p.eval_every}, {"checkpoint_every", p.checkpoint_every}};
    if (p.max_iters > 0)
      o["max_iters"] = p.max_iters;
    else
      o["epochs"] = p.epochs;
    return o;
  };
  j["train"] = {{"operator", phase_json(c.train.op)}, {"diffusion", phase_json(c.train.diff)}};
  j["sample"] = {{"steps", c.sample.steps}};
  return j;
}

}  // namespace nod
