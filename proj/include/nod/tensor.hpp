#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "nod/errors.hpp"
#include "nod/rng.hpp"

namespace nod {

// Dense row-major tensor of doubles. Rank is small (<= 4) and shapes are
// explicit; this is the single numeric carrier for images, latent fields and
// network parameters.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(count(shape_)), 0.0);
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int> shape, double v) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = v;
    return t;
  }

  static Tensor from(std::vector<int> shape, std::vector<double> data) {
    Tensor t;
    if (count(shape) != static_cast<int64_t>(data.size()))
      throw internal_error("Tensor::from: shape/data size mismatch");
    t.shape_ = std::move(shape);
    t.data_ = std::move(data);
    return t;
  }

  static Tensor randn(std::vector<int> shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = rng.normal();
    return t;
  }

  bool empty() const { return data_.empty(); }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  const std::vector<int>& shape() const { return shape_; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // Indexed access for the common ranks.
  double& at2(int i, int j) { return data_[static_cast<size_t>(i) * shape_[1] + j]; }
  double at2(int i, int j) const { return data_[static_cast<size_t>(i) * shape_[1] + j]; }
  double& at3(int c, int h, int w) {
    return data_[(static_cast<size_t>(c) * shape_[1] + h) * shape_[2] + w];
  }
  double at3(int c, int h, int w) const {
    return data_[(static_cast<size_t>(c) * shape_[1] + h) * shape_[2] + w];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  Tensor reshaped(std::vector<int> shape) const {
    if (count(shape) != numel()) throw internal_error("reshaped: element count mismatch");
    Tensor t = *this;
    t.shape_ = std::move(shape);
    return t;
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  double min_value() const {
    double m = data_.empty() ? 0.0 : data_[0];
    for (double v : data_) m = std::min(m, v);
    return m;
  }

  double max_value() const {
    double m = data_.empty() ? 0.0 : data_[0];
    for (double v : data_) m = std::max(m, v);
    return m;
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::fabs(v));
    return m;
  }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape_[i]);
    }
    return s + "]";
  }

  static int64_t count(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
  }

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

// An image tensor: shape [channels, height, width], values in [-1, 1] with
// pixel 0 mapped to -1 and pixel max to +1. The convention is project-wide.
using ImageGrid = Tensor;

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* where) {
  if (!a.same_shape(b))
    throw internal_error(std::string(where) + ": shape mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
}

// c = a*sa + b*sb, elementwise.
inline Tensor add_scaled(const Tensor& a, double sa, const Tensor& b, double sb) {
  check_same_shape(a, b, "add_scaled");
  Tensor c(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) c[i] = a[i] * sa + b[i] * sb;
  return c;
}

inline Tensor scaled(const Tensor& a, double s) {
  Tensor c(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) c[i] = a[i] * s;
  return c;
}

inline Tensor clamped(const Tensor& a, double lo, double hi) {
  Tensor c(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) c[i] = std::min(hi, std::max(lo, a[i]));
  return c;
}

inline double mean_abs_difference(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mean_abs_difference");
  double s = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) s += std::fabs(a[i] - b[i]);
  return s / static_cast<double>(a.numel());
}

inline double max_abs_difference(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "max_abs_difference");
  double m = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

}  // namespace nod
