#pragma once

#include <string>
#include <vector>

#include "nod/rng.hpp"
#include "nod/tensor.hpp"

namespace nod::data {

struct DatasetConfig {
  std::string root;
  int hr_size = 48;
  double max_scale = 8.0;      // M
  double split_fraction = 0.8; // fraction of images in the train split
  uint64_t split_seed = 7;
  int min_lr_size = 8;

  // Largest usable training scale: LR must stay >= min_lr_size.
  double effective_max_scale() const;
  void validate() const;
};

// One training sample. hr size == round(lr size * s) per axis, both images
// share the [-1,1] convention.
struct ScalePair {
  Tensor lr;
  Tensor hr;
  double s = 0.0;
};

struct Dataset {
  std::vector<Tensor> train;
  std::vector<Tensor> eval;
  std::vector<std::string> train_names;
  std::vector<std::string> eval_names;
};

// Loads every readable image under cfg.root (non-recursive, lexicographic
// order), center-crops to hr_size and splits train/eval with a seeded
// shuffle. Unreadable or undersized files are skipped with a warning on
// stderr; an empty result is fatal.
Dataset load_dataset(const DatasetConfig& cfg);

// s uniform on (1, M].
double sample_scale(Rng& rng, double max_scale);

// Bicubic downsampling to round(size / s) per axis, clamped to [-1,1].
// Rejects results below min_lr_size.
Tensor degrade(const Tensor& hr, double s, int min_lr_size = 8);

// Builds the (lr, hr, s) triple. s is re-derived as hr_size / lr_size after
// rounding so round(lr * s) == hr holds exactly.
ScalePair make_pair(const Tensor& hr, double s, int min_lr_size = 8);

}  // namespace nod::data
