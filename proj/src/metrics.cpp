#include "patchdenoise/metrics.hpp"

#include <array>
#include <cmath>
#include <sstream>
#include <vector>

#include "patchdenoise/error.hpp"

namespace patchdenoise {

namespace {

constexpr std::size_t kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

void require_same(const char* op, const Image2D& a, const Image2D& b) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": image shapes differ (" + std::to_string(a.height) +
                         "x" + std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                         std::to_string(b.width) + ")");
  }
}

double mse(const Image2D& a, const Image2D& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.values[i] - b.values[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

std::array<double, kWindow> gaussian_taps() {
  std::array<double, kWindow> g{};
  double total = 0.0;
  for (std::size_t i = 0; i < kWindow; ++i) {
    const double d = static_cast<double>(i) - static_cast<double>(kWindow / 2);
    g[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    total += g[i];
  }
  for (auto& v : g) v /= total;
  return g;
}

// Separable "valid" Gaussian filtering of one plane.
std::vector<double> filter_valid(const std::vector<double>& src, std::size_t h, std::size_t w,
                                 const std::array<double, kWindow>& g) {
  const std::size_t oh = h - kWindow + 1, ow = w - kWindow + 1;
  std::vector<double> rows(h * ow);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kWindow; ++k) acc += g[k] * src[y * w + x + k];
      rows[y * ow + x] = acc;
    }
  std::vector<double> out(oh * ow);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ys = 0; ys < static_cast<std::ptrdiff_t>(oh); ++ys) {
    const auto y = static_cast<std::size_t>(ys);
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kWindow; ++k) acc += g[k] * rows[(y + k) * ow + x];
      out[y * ow + x] = acc;
    }
  }
  return out;
}

}  // namespace

double psnr(const Image2D& a, const Image2D& b) {
  require_same("psnr", a, b);
  const double m = mse(a, b);
  if (m == 0.0) return kInfinitePsnr;
  return 10.0 * std::log10(1.0 / m);
}

double rmse(const Image2D& a, const Image2D& b) {
  require_same("rmse", a, b);
  return std::sqrt(mse(a, b));
}

double ssim(const Image2D& a, const Image2D& b) {
  require_same("ssim", a, b);
  if (a.height < kWindow || a.width < kWindow) {
    throw UsageError("ssim: image " + std::to_string(a.height) + "x" + std::to_string(a.width) +
                     " is smaller than the 11x11 window");
  }
  const auto g = gaussian_taps();
  const std::size_t h = a.height, w = a.width;
  std::vector<double> xx(a.size()), yy(a.size()), xy(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    xx[i] = a.values[i] * a.values[i];
    yy[i] = b.values[i] * b.values[i];
    xy[i] = a.values[i] * b.values[i];
  }
  const auto mu_x = filter_valid(a.values, h, w, g);
  const auto mu_y = filter_valid(b.values, h, w, g);
  const auto e_xx = filter_valid(xx, h, w, g);
  const auto e_yy = filter_valid(yy, h, w, g);
  const auto e_xy = filter_valid(xy, h, w, g);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_x.size(); ++i) {
    const double mx = mu_x[i], my = mu_y[i];
    const double vx = e_xx[i] - mx * mx;
    const double vy = e_yy[i] - my * my;
    const double cxy = e_xy[i] - mx * my;
    total += ((2.0 * mx * my + kC1) * (2.0 * cxy + kC2)) /
             ((mx * mx + my * my + kC1) * (vx + vy + kC2));
  }
  return total / static_cast<double>(mu_x.size());
}

double energy_per_inference(double gflops) {
  if (gflops < 0.0) throw UsageError("energy_per_inference: GFLOPs must be non-negative");
  return gflops / 20.0;
}

Summary summarize(std::span<const double> values) {
  Summary s;
  double total = 0.0;
  for (double v : values)
    if (std::isfinite(v)) {
      total += v;
      ++s.count;
    }
  if (s.count == 0) return s;
  s.mean = total / static_cast<double>(s.count);
  if (s.count > 1) {
    double sq = 0.0;
    for (double v : values)
      if (std::isfinite(v)) sq += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(sq / static_cast<double>(s.count - 1));
  }
  return s;
}

std::string format_metric(double value, int precision) {
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os.precision(precision);
  os << std::fixed << value;
  return os.str();
}

}  // namespace patchdenoise
