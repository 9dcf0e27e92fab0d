#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>

#include "patchdenoise/image.hpp"

namespace patchdenoise {

/// Sentinel returned by psnr for identical images.
inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();

/// 10 * log10(1 / MSE) with peak 1.0. Identical images give +inf.
double psnr(const Image2D& a, const Image2D& b);

/// Mean local SSIM over every fully-contained 11x11 Gaussian window
/// (sigma 1.5, K1 = 0.01, K2 = 0.03, data range 1).
double ssim(const Image2D& a, const Image2D& b);

double rmse(const Image2D& a, const Image2D& b);

/// Table-style energy figure: GFLOPs divided by 20.
double energy_per_inference(double gflops);

struct MetricReport {
  double psnr_db = 0.0;
  double ssim = 0.0;
  double rmse = 0.0;
  double params_m = 0.0;
  double gflops = 0.0;
  double energy_per_inference = 0.0;
};

/// Mean and sample standard deviation of the finite entries; infinite
/// values are skipped.
struct Summary {
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t count = 0;
};
Summary summarize(std::span<const double> values);

/// Number formatting for reports: +inf becomes "inf".
std::string format_metric(double value, int precision = 6);

}  // namespace patchdenoise
