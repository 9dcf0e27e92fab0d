#include "patchdenoise/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "patchdenoise/error.hpp"
#include "patchdenoise/random.hpp"

namespace patchdenoise {

Image2D to_hounsfield(const SliceRecord& slice) {
  slice.validate();
  Image2D out(slice.rows, slice.cols, 0.0, RangeTag::hounsfield);
  for (std::size_t i = 0; i < out.size(); ++i)
    out.values[i] = static_cast<double>(slice.pixels[i]) * slice.rescale_slope +
                    slice.rescale_intercept;
  return out;
}

Image2D window_normalize(const Image2D& img, const HuWindow& window) {
  window.validate();
  Image2D out(img.height, img.width, 0.0, RangeTag::normalized01);
  const double span = window.hi - window.lo;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = std::clamp(img.values[i], window.lo, window.hi);
    out.values[i] = (v - window.lo) / span;
  }
  return out;
}

Image2D denormalize(const Image2D& img, const HuWindow& window) {
  window.validate();
  if (img.range != RangeTag::normalized01) {
    throw UsageError("denormalize: expected a normalized01 image, got " + to_string(img.range));
  }
  Image2D out(img.height, img.width, 0.0, RangeTag::hounsfield);
  const double span = window.hi - window.lo;
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = img.values[i] * span + window.lo;
  return out;
}

Image2D add_poisson_noise(const Image2D& clean, double photon_count, std::uint64_t seed) {
  if (!(photon_count > 0.0)) throw UsageError("add_poisson_noise: photon_count must be positive");
  Rng rng(seed);
  Image2D out = clean;
  for (auto& v : out.values) {
    const auto counts = rng.poisson(std::max(v, 0.0) * photon_count);
    v = std::clamp(static_cast<double>(counts) / photon_count, 0.0, 1.0);
  }
  return out;
}

Image2D add_gaussian_noise(const Image2D& clean, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw UsageError("add_gaussian_noise: sigma must be non-negative");
  Image2D out = clean;
  if (sigma == 0.0) return out;
  Rng rng(seed);
  for (auto& v : out.values) v = std::clamp(v + sigma * rng.normal(), 0.0, 1.0);
  return out;
}

namespace {

struct Ellipse {
  double cy, cx;  // centre, pixels
  double ry, rx;  // semi-axes, pixels
  double angle;
  double intensity;

  bool contains(double y, double x) const {
    const double dy = y - cy, dx = x - cx;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = (dx * c + dy * s) / rx;
    const double v = (-dx * s + dy * c) / ry;
    return u * u + v * v <= 1.0;
  }
};

struct Texture {
  double fy[3], fx[3], phase[3], amp[3];

  double operator()(double y, double x) const {
    double t = 0.0;
    for (int k = 0; k < 3; ++k)
      t += amp[k] * std::sin(2.0 * std::numbers::pi * (fy[k] * y + fx[k] * x) + phase[k]);
    return t;
  }
};

constexpr double kTextureAmplitude = 0.04;
constexpr int kSupersample = 4;

}  // namespace

Image2D generate_phantom(std::size_t height, std::size_t width, std::size_t n_ellipses,
                         std::uint64_t seed) {
  if (height < 32 || width < 32) throw UsageError("generate_phantom: dimensions must be >= 32");
  Image2D img(height, width, kPhantomBackground, RangeTag::normalized01);
  if (n_ellipses == 0) return img;

  Rng rng(seed);
  const auto h = static_cast<double>(height), w = static_cast<double>(width);

  std::vector<Ellipse> shapes;
  // Body outline.
  shapes.push_back({h * rng.uniform(0.47, 0.53), w * rng.uniform(0.47, 0.53),
                    h * rng.uniform(0.30, 0.42), w * rng.uniform(0.38, 0.46),
                    rng.uniform(-0.2, 0.2), rng.uniform(0.35, 0.5)});
  // Organs: stratified intensities so the levels stay distinct.
  std::vector<double> levels;
  const std::size_t organs = n_ellipses - 1;
  for (std::size_t i = 0; i < organs; ++i)
    levels.push_back(0.1 + 0.85 * (static_cast<double>(i) + rng.uniform()) /
                               static_cast<double>(organs));
  rng.shuffle(levels);
  for (std::size_t i = 0; i < organs; ++i) {
    const double r = std::min(h, w);
    shapes.push_back({h * rng.uniform(0.3, 0.7), w * rng.uniform(0.3, 0.7),
                      r * rng.uniform(0.05, 0.18), r * rng.uniform(0.05, 0.18),
                      rng.uniform(0.0, std::numbers::pi), levels[i]});
  }

  Texture tex{};
  double amp_total = 0.0;
  for (int k = 0; k < 3; ++k) {
    tex.fy[k] = rng.uniform(0.5, 4.0) / h;
    tex.fx[k] = rng.uniform(0.5, 4.0) / w;
    tex.phase[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    tex.amp[k] = rng.uniform(0.2, 1.0);
    amp_total += tex.amp[k];
  }
  for (auto& a : tex.amp) a /= amp_total;

  constexpr double sub = 1.0 / kSupersample;
  for (const auto& e : shapes) {
    const double reach = std::max(e.ry, e.rx) + 1.0;
    const auto y0 = static_cast<std::size_t>(std::max(0.0, std::floor(e.cy - reach)));
    const auto y1 = static_cast<std::size_t>(std::min(h, std::ceil(e.cy + reach)));
    const auto x0 = static_cast<std::size_t>(std::max(0.0, std::floor(e.cx - reach)));
    const auto x1 = static_cast<std::size_t>(std::min(w, std::ceil(e.cx + reach)));
    for (std::size_t y = y0; y < y1; ++y) {
      for (std::size_t x = x0; x < x1; ++x) {
        int hits = 0;
        for (int sy = 0; sy < kSupersample; ++sy)
          for (int sx = 0; sx < kSupersample; ++sx)
            hits += e.contains(static_cast<double>(y) + (sy + 0.5) * sub,
                               static_cast<double>(x) + (sx + 0.5) * sub);
        if (hits == 0) continue;
        const double alpha = hits / static_cast<double>(kSupersample * kSupersample);
        const double fill =
            e.intensity * (1.0 + kTextureAmplitude * tex(static_cast<double>(y), static_cast<double>(x)));
        double& v = img.at(y, x);
        v = v * (1.0 - alpha) + fill * alpha;
      }
    }
  }
  for (auto& v : img.values) v = std::clamp(v, 0.0, 1.0);
  return img;
}

}  // namespace patchdenoise
