#include "nod/cli.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>

#include "nod/config.hpp"
#include "nod/errors.hpp"
#include "nod/image.hpp"
#include "nod/metrics.hpp"
#include "nod/training.hpp"

namespace fs = std::filesystem;

namespace nod::cli {

namespace {

const char* kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::Config: return "config";
    case ErrorKind::Data: return "data";
    case ErrorKind::Checkpoint: return "checkpoint";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::Internal: return "internal";
  }
  return "internal";
}

void print_error(int code, const std::string& kind, const std::string& message) {
  nlohmann::json j = {{"error", {{"code", code}, {"kind", kind}, {"message", message}}}};
  std::cerr << j.dump() << "\n";
}

int run_guarded(const std::function<void()>& body) {
  try {
    body();
    return 0;
  } catch (const Error& e) {
    print_error(e.exit_code(), kind_name(e.kind()), e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    print_error(1, "internal", e.what());
    return 1;
  }
}

RunConfig load_config_with_overrides(const std::string& path,
                                     const std::optional<std::string>& profile,
                                     const std::optional<uint64_t>& seed) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("malformed JSON in ") + path + ": " + e.what());
  }
  if (profile) doc["profile"] = *profile;
  RunConfig cfg = parse_run_config(doc);
  if (seed) cfg.seed = *seed;
  return cfg;
}

void require_data_root(const RunConfig& cfg) {
  if (cfg.data.root.empty()) throw data_error("config.data.root is not set");
  if (!fs::is_directory(cfg.data.root))
    throw data_error("data directory does not exist: " + cfg.data.root);
}

std::vector<std::string> gather_inputs(const std::string& input) {
  std::vector<std::string> files;
  if (fs::is_directory(input)) {
    for (const auto& e : fs::directory_iterator(input))
      if (e.is_regular_file()) files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
  } else if (fs::is_regular_file(input)) {
    files.push_back(input);
  } else {
    throw data_error("input not found: " + input);
  }
  if (files.empty()) throw data_error("no input images in " + input);
  return files;
}

}  // namespace

std::string cache_dir() {
  const char* env = std::getenv("NEUROP_DIFF_CACHE");
  return env != nullptr && *env != '\0' ? std::string(env) : std::string("./.neurop-diff");
}

int cmd_train_operator(const TrainOperatorArgs& args) {
  return run_guarded([&] {
    const RunConfig cfg = load_config_with_overrides(args.config_path, args.profile, args.seed);
    require_data_root(cfg);
    const data::Dataset ds = data::load_dataset(cfg.data);
    const std::string out = args.out_dir.empty() ? cache_dir() + "/train-operator" : args.out_dir;
    const train::TrainStats stats = train::train_operator(cfg, ds, out);
    std::cout << "checkpoint: " << stats.final_checkpoint << "\n";
  });
}

int cmd_train_diffusion(const TrainDiffusionArgs& args) {
  return run_guarded([&] {
    const RunConfig cfg = load_config_with_overrides(args.config_path, args.profile, args.seed);
    require_data_root(cfg);
    const train::ConditionMode mode = train::condition_mode_from_string(args.condition);
    if (mode != train::ConditionMode::Bicubic && args.operator_ckpt.empty())
      throw checkpoint_error("--condition " + args.condition +
                             " requires --operator-ckpt (phase-1 checkpoint)");
    const data::Dataset ds = data::load_dataset(cfg.data);
    const std::string out = args.out_dir.empty()
                                ? cache_dir() + "/train-diffusion-" + args.condition
                                : args.out_dir;
    const train::TrainStats stats =
        train::train_diffusion(cfg, ds, args.operator_ckpt, mode, out);
    std::cout << "checkpoint: " << stats.final_checkpoint << "\n";
  });
}

int cmd_sample(const SampleArgs& args) {
  return run_guarded([&] {
    const train::SrModel model = train::load_sr_model(args.ckpt_path);
    const int steps = args.steps.value_or(model.config.sample.steps);
    if (steps < 2) throw config_error("sample: --steps must be >= 2");
    if (steps > model.schedule.T)
      throw config_error("sample: --steps cannot exceed the schedule length");
    if (!(args.scale > 1.0) || args.scale > model.config.op.max_scale + 1e-9)
      throw numeric_error("sample: --scale must lie in (1, " +
                          std::to_string(model.config.op.max_scale) + "]");
    const std::string out = args.out_dir.empty() ? cache_dir() + "/sample" : args.out_dir;
    fs::create_directories(out);
    const std::vector<std::string> files = gather_inputs(args.input);
    for (size_t i = 0; i < files.size(); ++i) {
      const Tensor lr = img::read_image(files[i]);
      const auto t0 = std::chrono::steady_clock::now();
      const Tensor sr = train::sample_sr(model, lr, args.scale, steps, args.seed + i);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      const std::string stem = fs::path(files[i]).stem().string();
      img::write_png(out + "/" + stem + "_sr.png", sr);
      nlohmann::json side = {{"input", files[i]},
                             {"scale", args.scale},
                             {"steps", steps},
                             {"seed", args.seed + i},
                             {"runtime_seconds", secs}};
      std::ofstream(out + "/" + stem + "_sr.json") << side.dump(2) << "\n";
    }
    std::cout << "wrote " << files.size() << " image(s) to " << out << "\n";
  });
}

int cmd_eval(const EvalArgs& args) {
  return run_guarded([&] {
    const train::SrModel model = train::load_sr_model(args.ckpt_path);
    const int steps = args.steps.value_or(model.config.sample.steps);
    if (args.scales.empty()) throw config_error("eval: --scales is empty");
    data::DatasetConfig dc = model.config.data;
    dc.root = args.data_dir;
    dc.split_fraction = 0.0;  // evaluate on every image in the directory
    const data::Dataset ds = data::load_dataset(dc);
    if (ds.eval.empty()) throw data_error("eval: empty evaluation set");
    const std::string out = args.out_dir.empty() ? cache_dir() + "/eval" : args.out_dir;
    fs::create_directories(out);

    nlohmann::json summary;
    summary["checkpoint"] = args.ckpt_path;
    summary["steps"] = steps;
    summary["scales"] = nlohmann::json::array();
    for (size_t si = 0; si < args.scales.size(); ++si) {
      const double s = args.scales[si];
      if (!(s > 1.0)) throw config_error("eval: scales must be > 1");
      const bool ood = s > model.config.op.max_scale + 1e-9;
      metrics::MetricReport report;
      for (size_t i = 0; i < ds.eval.size(); ++i) {
        const data::ScalePair pair = data::make_pair(ds.eval[i], s, dc.min_lr_size);
        const uint64_t seed = args.seed + 1000003ULL * (si + 1) + i;
        const Tensor sr = train::sample_sr(model, pair.lr, pair.s, steps, seed,
                                           /*allow_extrapolation=*/true);
        report.images.push_back(
            {ds.eval_names[i], metrics::psnr(sr, pair.hr), metrics::ssim(sr, pair.hr)});
      }
      std::ostringstream stag;
      stag << s;
      std::ofstream(out + "/eval_s" + stag.str() + ".csv") << report.to_csv();
      summary["scales"].push_back({{"scale", s},
                                   {"ood", ood},
                                   {"mean_psnr_db", report.mean_psnr()},
                                   {"mean_ssim", report.mean_ssim()},
                                   {"images", ds.eval.size()}});
    }
    std::ofstream(out + "/summary.json") << summary.dump(2) << "\n";
    std::cout << summary.dump(2) << "\n";
  });
}

}  // namespace nod::cli
