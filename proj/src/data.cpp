#include "nod/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>

#include "nod/errors.hpp"
#include "nod/image.hpp"

namespace fs = std::filesystem;

namespace nod::data {

double DatasetConfig::effective_max_scale() const {
  return std::min(max_scale, static_cast<double>(hr_size) / min_lr_size);
}

void DatasetConfig::validate() const {
  if (hr_size < min_lr_size) throw config_error("data: hr_size below min_lr_size");
  if (!(max_scale > 1.0)) throw config_error("data: max_scale must be > 1");
  if (split_fraction < 0.0 || split_fraction > 1.0)
    throw config_error("data: split_fraction outside [0,1]");
  if (!(effective_max_scale() > 1.0))
    throw config_error("data: hr_size too small for any scale > 1");
}

namespace {

bool has_image_extension(const fs::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e == ".png" || e == ".jpg" || e == ".jpeg" || e == ".tif" || e == ".tiff";
}

}  // namespace

Dataset load_dataset(const DatasetConfig& cfg) {
  cfg.validate();
  if (!fs::is_directory(cfg.root)) throw data_error("dataset root is not a directory: " + cfg.root);

  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(cfg.root))
    if (entry.is_regular_file() && has_image_extension(entry.path()))
      files.push_back(entry.path().string());
  std::sort(files.begin(), files.end());

  std::vector<Tensor> images;
  std::vector<std::string> names;
  for (const auto& f : files) {
    Tensor img;
    try {
      img = img::read_image(f);
    } catch (const Error&) {
      std::cerr << "warning: skipping unreadable image " << f << "\n";
      continue;
    }
    if (img.dim(1) < cfg.hr_size || img.dim(2) < cfg.hr_size) {
      std::cerr << "warning: skipping undersized image " << f << " (" << img.dim(2) << "x"
                << img.dim(1) << " < " << cfg.hr_size << ")\n";
      continue;
    }
    images.push_back(img::center_crop(img, cfg.hr_size));
    names.push_back(fs::path(f).filename().string());
  }
  if (images.empty()) throw data_error("no usable images in " + cfg.root);

  // Seeded Fisher-Yates over indices, then split by fraction.
  std::vector<size_t> order(images.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = Rng::stream(cfg.split_seed, 0xda7a);
  for (size_t i = order.size(); i > 1; --i) {
    const size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1));
    std::swap(order[i - 1], order[j]);
  }
  const size_t n_train = static_cast<size_t>(
      std::llround(cfg.split_fraction * static_cast<double>(images.size())));

  Dataset d;
  for (size_t i = 0; i < order.size(); ++i) {
    const size_t idx = order[i];
    if (i < n_train) {
      d.train.push_back(images[idx]);
      d.train_names.push_back(names[idx]);
    } else {
      d.eval.push_back(images[idx]);
      d.eval_names.push_back(names[idx]);
    }
  }
  return d;
}

double sample_scale(Rng& rng, double max_scale) {
  if (!(max_scale > 1.0)) throw config_error("sample_scale: max_scale must be > 1");
  // uniform01 is in [0,1), so this lands in (1, M].
  return max_scale - rng.uniform01() * (max_scale - 1.0);
}

Tensor degrade(const Tensor& hr, double s, int min_lr_size) {
  if (!(s > 1.0)) throw numeric_error("degrade: scale must be > 1");
  // Rounded, but kept strictly smaller than HR so the pair always carries a
  // scale > 1 even for s in the 1+eps limit.
  const int lh = std::min(static_cast<int>(std::llround(hr.dim(1) / s)), hr.dim(1) - 1);
  const int lw = std::min(static_cast<int>(std::llround(hr.dim(2) / s)), hr.dim(2) - 1);
  if (lh < min_lr_size || lw < min_lr_size)
    throw data_error("degrade: LR size " + std::to_string(lw) + "x" + std::to_string(lh) +
                     " below minimum " + std::to_string(min_lr_size));
  return clamped(img::bicubic_resize(hr, lh, lw), -1.0, 1.0);
}

ScalePair make_pair(const Tensor& hr, double s, int min_lr_size) {
  ScalePair p;
  p.lr = degrade(hr, s, min_lr_size);
  p.hr = hr;
  // Re-derive the scale from the rounded sizes so round(lr * s) == hr.
  p.s = static_cast<double>(hr.dim(1)) / p.lr.dim(1);
  const auto [rh, rw] = img::scaled_size(p.lr.dim(1), p.lr.dim(2), p.s);
  if (rh != hr.dim(1) || rw != hr.dim(2))
    throw internal_error("make_pair: scale/size consistency violated");
  return p;
}

}  // namespace nod::data
