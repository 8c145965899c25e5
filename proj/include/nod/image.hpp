#pragma once

#include <string>
#include <utility>

#include "nod/tensor.hpp"

namespace nod::img {

// Separable bicubic resampling (Catmull-Rom, a = -0.5) with kernel
// stretching when downscaling, edge replication and per-tap weight
// normalization, so constants are preserved exactly. Works for arbitrary
// non-integer ratios in both directions. Input/output are [C,H,W].
Tensor bicubic_resize(const Tensor& src, int out_h, int out_w);

// Nearest-neighbor resampling for feature maps, arbitrary ratio.
Tensor nearest_resize(const Tensor& src, int out_h, int out_w);

// Target grid size for a scale factor; round-half-up per axis.
std::pair<int, int> scaled_size(int h, int w, double s);

Tensor center_crop(const Tensor& src, int size);

// File I/O. Readers return RGB [3,H,W] in [-1,1] (pixel 0 -> -1, max -> +1);
// writer quantizes symmetrically back to 8-bit. PNG/JPEG/TIFF are accepted
// on the read side; writes are always PNG.
Tensor read_image(const std::string& path);
void write_png(const std::string& path, const Tensor& img);

}  // namespace nod::img
