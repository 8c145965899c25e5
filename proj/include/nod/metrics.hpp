#pragma once

#include <string>
#include <vector>

#include "nod/tensor.hpp"

namespace nod::metrics {

// PSNR cap reported in place of the MSE == 0 infinity so dataset means
// stay finite.
inline constexpr double kPsnrCap = 100.0;

// PSNR in dB between two images in the project-wide [-1,1] convention.
// Values are remapped to [0,1] (dynamic range 1) before comparison.
double psnr(const Tensor& a, const Tensor& b);
// Same metric for inputs already in [0,1].
double psnr01(const Tensor& a, const Tensor& b);

// Mean SSIM with an 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
// K2 = 0.03, dynamic range 1. Color images are reduced to the channel mean
// before comparison; valid-window coverage only.
double ssim(const Tensor& a, const Tensor& b);
double ssim01(const Tensor& a, const Tensor& b);

struct MetricReport {
  struct PerImage {
    std::string name;
    double psnr_db = 0.0;
    double ssim = 0.0;
  };
  std::vector<PerImage> images;

  double mean_psnr() const;
  double mean_ssim() const;
  std::string to_csv() const;   // header + one row per image
  std::string to_json() const;  // per-image values plus the means
};

}  // namespace nod::metrics
