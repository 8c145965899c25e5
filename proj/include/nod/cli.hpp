#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace nod::cli {

// Exit codes: 0 ok, 2 config, 3 data, 4 checkpoint, 5 numeric failure,
// 1 anything else. Failures print a machine-readable JSON object on stderr.

// Scratch/checkpoint directory: $NEUROP_DIFF_CACHE or ./.neurop-diff.
std::string cache_dir();

struct TrainOperatorArgs {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::optional<std::string> profile;
  std::string out_dir;  // empty -> <cache>/train-operator
};

struct TrainDiffusionArgs {
  std::string config_path;
  std::string operator_ckpt;  // may be empty for --condition bicubic
  std::string condition = "neurop";
  std::optional<uint64_t> seed;
  std::optional<std::string> profile;
  std::string out_dir;  // empty -> <cache>/train-diffusion-<condition>
};

struct SampleArgs {
  std::string ckpt_path;
  std::string input;  // image file or directory
  double scale = 4.0;
  std::optional<int> steps;  // default: checkpoint config sample.steps
  uint64_t seed = 0;
  std::string out_dir;  // empty -> <cache>/sample
};

struct EvalArgs {
  std::string ckpt_path;
  std::string data_dir;
  std::vector<double> scales;
  std::optional<int> steps;
  uint64_t seed = 0;
  std::string out_dir;  // empty -> <cache>/eval
};

int cmd_train_operator(const TrainOperatorArgs& args);
int cmd_train_diffusion(const TrainDiffusionArgs& args);
int cmd_sample(const SampleArgs& args);
int cmd_eval(const EvalArgs& args);

}  // namespace nod::cli
