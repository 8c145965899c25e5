#include <CLI11.hpp>

#include <cstdint>
#include <string>

#include "nod/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"neurop-diff: continuous-scale image super-resolution with an "
               "operator-conditioned diffusion model"};
  app.require_subcommand(1);

  nod::cli::TrainOperatorArgs top;
  uint64_t seed_val = 0;
  std::string profile_val;
  auto* sub_top = app.add_subcommand("train-operator", "phase 1: pretrain the conditioning operator");
  sub_top->add_option("--config", top.config_path, "run config JSON")->required();
  auto* top_seed = sub_top->add_option("--seed", seed_val, "override config seed");
  auto* top_profile = sub_top->add_option("--profile", profile_val, "toy|paper");
  sub_top->add_option("--out", top.out_dir, "output directory");

  nod::cli::TrainDiffusionArgs tdi;
  auto* sub_tdi = app.add_subcommand("train-diffusion", "phase 2: train the denoiser (operator frozen)");
  sub_tdi->add_option("--config", tdi.config_path, "run config JSON")->required();
  sub_tdi->add_option("--operator-ckpt", tdi.operator_ckpt, "phase-1 checkpoint");
  sub_tdi->add_option("--condition", tdi.condition, "bicubic|encoder|neurop")
      ->default_val("neurop");
  auto* tdi_seed = sub_tdi->add_option("--seed", seed_val, "override config seed");
  auto* tdi_profile = sub_tdi->add_option("--profile", profile_val, "toy|paper");
  sub_tdi->add_option("--out", tdi.out_dir, "output directory");

  nod::cli::SampleArgs smp;
  int steps_val = 0;
  auto* sub_smp = app.add_subcommand("sample", "super-resolve LR image(s) from a checkpoint");
  sub_smp->add_option("--ckpt", smp.ckpt_path, "diffusion checkpoint")->required();
  sub_smp->add_option("--input", smp.input, "LR image file or directory")->required();
  sub_smp->add_option("--scale", smp.scale, "magnification in (1, M]")->required();
  auto* smp_steps = sub_smp->add_option("--steps", steps_val, "inference steps (default: config)");
  sub_smp->add_option("--seed", smp.seed, "sampling seed")->default_val(0);
  sub_smp->add_option("--out", smp.out_dir, "output directory");

  nod::cli::EvalArgs evl;
  auto* sub_evl = app.add_subcommand("eval", "degrade/reconstruct/score a directory of HR images");
  sub_evl->add_option("--ckpt", evl.ckpt_path, "diffusion checkpoint")->required();
  sub_evl->add_option("--data", evl.data_dir, "directory of HR images")->required();
  sub_evl->add_option("--scales", evl.scales, "scales, e.g. --scales 2 4 8")
      ->required()
      ->delimiter(',');
  auto* evl_steps = sub_evl->add_option("--steps", steps_val, "inference steps (default: config)");
  sub_evl->add_option("--seed", evl.seed, "sampling seed")->default_val(0);
  sub_evl->add_option("--out", evl.out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;  // flag/usage problems are config-class errors
  }

  if (sub_top->parsed()) {
    if (*top_seed) top.seed = seed_val;
    if (*top_profile) top.profile = profile_val;
    return nod::cli::cmd_train_operator(top);
  }
  if (sub_tdi->parsed()) {
    if (*tdi_seed) tdi.seed = seed_val;
    if (*tdi_profile) tdi.profile = profile_val;
    return nod::cli::cmd_train_diffusion(tdi);
  }
  if (sub_smp->parsed()) {
    if (*smp_steps) smp.steps = steps_val;
    return nod::cli::cmd_sample(smp);
  }
  if (sub_evl->parsed()) {
    if (*evl_steps) evl.steps = steps_val;
    return nod::cli::cmd_eval(evl);
  }
  return 2;
}
