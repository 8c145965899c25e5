#include "nod/metrics.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <sstream>

#include "nod/errors.hpp"

namespace nod::metrics {

namespace {

Tensor to_unit_range(const Tensor& x) {
  Tensor y(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) y[i] = (x[i] + 1.0) * 0.5;
  return y;
}

// Channel-mean grayscale [H,W].
Tensor to_gray(const Tensor& x) {
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor g({h, w});
  for (int y = 0; y < h; ++y)
    for (int xx = 0; xx < w; ++xx) {
      double s = 0.0;
      for (int ci = 0; ci < c; ++ci) s += x.at3(ci, y, xx);
      g.at2(y, xx) = s / c;
    }
  return g;
}

constexpr int kWin = 11;
constexpr double kSigma = 1.5;

const std::vector<double>& gaussian_window() {
  static const std::vector<double> w = [] {
    std::vector<double> v(kWin * kWin);
    const int r = kWin / 2;
    double sum = 0.0;
    for (int i = 0; i < kWin; ++i)
      for (int j = 0; j < kWin; ++j) {
        const double dy = i - r, dx = j - r;
        v[static_cast<size_t>(i) * kWin + j] = std::exp(-(dy * dy + dx * dx) / (2 * kSigma * kSigma));
        sum += v[static_cast<size_t>(i) * kWin + j];
      }
    for (auto& x : v) x /= sum;
    return v;
  }();
  return w;
}

}  // namespace

double psnr01(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "psnr");
  double mse = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    const double d = a[i] - b[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.numel());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double psnr(const Tensor& a, const Tensor& b) { return psnr01(to_unit_range(a), to_unit_range(b)); }

double ssim01(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "ssim");
  const Tensor ga = a.rank() == 3 ? to_gray(a) : a;
  const Tensor gb = b.rank() == 3 ? to_gray(b) : b;
  const int h = ga.dim(0), w = ga.dim(1);
  if (h < kWin || w < kWin) throw data_error("ssim: image smaller than the 11x11 window");

  constexpr double kC1 = 0.01 * 0.01;  // (K1 * L)^2, L = 1
  constexpr double kC2 = 0.03 * 0.03;
  const auto& win = gaussian_window();

  double total = 0.0;
  int64_t count = 0;
  for (int y = 0; y + kWin <= h; ++y)
    for (int x = 0; x + kWin <= w; ++x) {
      double mx = 0.0, my = 0.0, mxx = 0.0, myy = 0.0, mxy = 0.0;
      for (int i = 0; i < kWin; ++i)
        for (int j = 0; j < kWin; ++j) {
          const double wij = win[static_cast<size_t>(i) * kWin + j];
          const double va = ga.at2(y + i, x + j);
          const double vb = gb.at2(y + i, x + j);
          mx += wij * va;
          my += wij * vb;
          mxx += wij * va * va;
          myy += wij * vb * vb;
          mxy += wij * va * vb;
        }
      const double vx = mxx - mx * mx;
      const double vy = myy - my * my;
      const double cxy = mxy - mx * my;
      const double num = (2.0 * mx * my + kC1) * (2.0 * cxy + kC2);
      const double den = (mx * mx + my * my + kC1) * (vx + vy + kC2);
      total += num / den;
      ++count;
    }
  return total / static_cast<double>(count);
}

double ssim(const Tensor& a, const Tensor& b) { return ssim01(to_unit_range(a), to_unit_range(b)); }

double MetricReport::mean_psnr() const {
  double s = 0.0;
  for (const auto& i : images) s += i.psnr_db;
  return images.empty() ? 0.0 : s / static_cast<double>(images.size());
}

double MetricReport::mean_ssim() const {
  double s = 0.0;
  for (const auto& i : images) s += i.ssim;
  return images.empty() ? 0.0 : s / static_cast<double>(images.size());
}

std::string MetricReport::to_csv() const {
  std::ostringstream os;
  os << "image,psnr_db,ssim\n";
  os.precision(10);
  for (const auto& i : images) os << i.name << "," << i.psnr_db << "," << i.ssim << "\n";
  return os.str();
}

std::string MetricReport::to_json() const {
  nlohmann::json j;
  j["images"] = nlohmann::json::array();
  for (const auto& i : images)
    j["images"].push_back({{"name", i.name}, {"psnr_db", i.psnr_db}, {"ssim", i.ssim}});
  j["mean_psnr_db"] = mean_psnr();
  j["mean_ssim"] = mean_ssim();
  return j.dump(2);
}

}  // namespace nod::metrics
