#include "nod/image.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "nod/errors.hpp"

namespace nod::img {

namespace {

double cubic_kernel(double x) {
  constexpr double a = -0.5;
  x = std::fabs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

struct TapSet {
  std::vector<int> first;       // first source index per output index
  std::vector<double> weights;  // taps-per-output, row-major
  int taps = 0;
};

// 1-D resampling plan from src_n to dst_n samples with center alignment.
TapSet plan_axis(int src_n, int dst_n) {
  const double scale = static_cast<double>(dst_n) / src_n;
  const double support = scale < 1.0 ? 2.0 / scale : 2.0;
  const int taps = static_cast<int>(std::ceil(support)) * 2 + 1;
  TapSet t;
  t.taps = taps;
  t.first.resize(static_cast<size_t>(dst_n));
  t.weights.assign(static_cast<size_t>(dst_n) * taps, 0.0);
  const double kscale = std::min(scale, 1.0);
  for (int i = 0; i < dst_n; ++i) {
    const double center = (i + 0.5) / scale - 0.5;
    const int first = static_cast<int>(std::floor(center - support));
    t.first[static_cast<size_t>(i)] = first;
    double sum = 0.0;
    double* w = &t.weights[static_cast<size_t>(i) * taps];
    for (int k = 0; k < taps; ++k) {
      const double x = (first + k - center) * kscale;
      w[k] = cubic_kernel(x);
      sum += w[k];
    }
    for (int k = 0; k < taps; ++k) w[k] /= sum;
  }
  return t;
}

int clamp_index(int i, int n) { return std::min(n - 1, std::max(0, i)); }

}  // namespace

Tensor bicubic_resize(const Tensor& src, int out_h, int out_w) {
  if (src.rank() != 3) throw internal_error("bicubic_resize: src must be [C,H,W]");
  if (out_h < 1 || out_w < 1) throw internal_error("bicubic_resize: empty output");
  const int c = src.dim(0), h = src.dim(1), w = src.dim(2);

  const TapSet tw = plan_axis(w, out_w);
  Tensor mid({c, h, out_w});
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y < h; ++y) {
      const double* row = src.data() + (static_cast<int64_t>(ci) * h + y) * w;
      double* orow = mid.data() + (static_cast<int64_t>(ci) * h + y) * out_w;
      for (int x = 0; x < out_w; ++x) {
        const double* wt = &tw.weights[static_cast<size_t>(x) * tw.taps];
        const int first = tw.first[static_cast<size_t>(x)];
        double acc = 0.0;
        for (int k = 0; k < tw.taps; ++k) acc += wt[k] * row[clamp_index(first + k, w)];
        orow[x] = acc;
      }
    }

  const TapSet th = plan_axis(h, out_h);
  Tensor dst({c, out_h, out_w});
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y < out_h; ++y) {
      const double* wt = &th.weights[static_cast<size_t>(y) * th.taps];
      const int first = th.first[static_cast<size_t>(y)];
      double* orow = dst.data() + (static_cast<int64_t>(ci) * out_h + y) * out_w;
      for (int x = 0; x < out_w; ++x) {
        double acc = 0.0;
        for (int k = 0; k < th.taps; ++k)
          acc += wt[k] * mid.at3(ci, clamp_index(first + k, h), x);
        orow[x] = acc;
      }
    }
  return dst;
}

Tensor nearest_resize(const Tensor& src, int out_h, int out_w) {
  if (src.rank() != 3) throw internal_error("nearest_resize: src must be [C,H,W]");
  const int c = src.dim(0), h = src.dim(1), w = src.dim(2);
  Tensor dst({c, out_h, out_w});
  for (int y = 0; y < out_h; ++y) {
    const int sy = clamp_index(static_cast<int>((y + 0.5) * h / out_h), h);
    for (int x = 0; x < out_w; ++x) {
      const int sx = clamp_index(static_cast<int>((x + 0.5) * w / out_w), w);
      for (int ci = 0; ci < c; ++ci) dst.at3(ci, y, x) = src.at3(ci, sy, sx);
    }
  }
  return dst;
}

std::pair<int, int> scaled_size(int h, int w, double s) {
  return {static_cast<int>(std::llround(h * s)), static_cast<int>(std::llround(w * s))};
}

Tensor center_crop(const Tensor& src, int size) {
  if (src.rank() != 3) throw internal_error("center_crop: src must be [C,H,W]");
  const int c = src.dim(0), h = src.dim(1), w = src.dim(2);
  if (h < size || w < size) throw data_error("center_crop: image smaller than crop size");
  const int oy = (h - size) / 2, ox = (w - size) / 2;
  Tensor dst({c, size, size});
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) dst.at3(ci, y, x) = src.at3(ci, oy + y, ox + x);
  return dst;
}

Tensor read_image(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_COLOR);
  if (m.empty()) throw data_error("unreadable image: " + path);
  Tensor t({3, m.rows, m.cols});
  for (int y = 0; y < m.rows; ++y) {
    const cv::Vec3b* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < m.cols; ++x) {
      // OpenCV loads BGR.
      t.at3(0, y, x) = row[x][2] / 255.0 * 2.0 - 1.0;
      t.at3(1, y, x) = row[x][1] / 255.0 * 2.0 - 1.0;
      t.at3(2, y, x) = row[x][0] / 255.0 * 2.0 - 1.0;
    }
  }
  return t;
}

void write_png(const std::string& path, const Tensor& img) {
  if (img.rank() != 3 || img.dim(0) != 3) throw internal_error("write_png: want [3,H,W]");
  const int h = img.dim(1), w = img.dim(2);
  cv::Mat m(h, w, CV_8UC3);
  auto to_u8 = [](double v) {
    const double x = (v + 1.0) * 0.5 * 255.0;
    return static_cast<uchar>(std::min(255.0, std::max(0.0, std::round(x))));
  };
  for (int y = 0; y < h; ++y) {
    cv::Vec3b* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < w; ++x) {
      row[x][2] = to_u8(img.at3(0, y, x));
      row[x][1] = to_u8(img.at3(1, y, x));
      row[x][0] = to_u8(img.at3(2, y, x));
    }
  }
  if (!cv::imwrite(path, m)) throw data_error("failed to write image: " + path);
}

}  // namespace nod::img
