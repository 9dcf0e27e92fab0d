#include "patchdenoise/filters.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "patchdenoise/error.hpp"

namespace patchdenoise {

std::string to_string(FilterKind kind) {
  switch (kind) {
    case FilterKind::mean: return "mean";
    case FilterKind::median: return "median";
    case FilterKind::gaussian: return "gaussian";
    case FilterKind::nlm: return "nlm";
  }
  return "unknown";
}

FilterKind filter_kind_from_string(const std::string& name) {
  if (name == "mean") return FilterKind::mean;
  if (name == "median") return FilterKind::median;
  if (name == "gaussian") return FilterKind::gaussian;
  if (name == "nlm") return FilterKind::nlm;
  throw UsageError("unknown filter '" + name + "' (expected mean, median, gaussian or nlm)");
}

FilterSpec FilterSpec::defaults(FilterKind kind) {
  FilterSpec s;
  s.kind = kind;
  switch (kind) {
    case FilterKind::mean:
    case FilterKind::median: s.window = 3; break;
    case FilterKind::gaussian:
      s.window = 5;
      s.sigma = 1.0;
      break;
    case FilterKind::nlm:
      s.sigma = 0.02;
      s.strength = 0.03;
      s.search_radius = 5;
      s.patch_radius = 2;
      break;
  }
  return s;
}

namespace {

Image2D padded(const Image2D& img, std::size_t r) {
  const std::size_t ph = img.height + 2 * r, pw = img.width + 2 * r;
  Image2D out(ph, pw, 0.0, img.range);
  for (std::size_t y = 0; y < ph; ++y) {
    const auto sy = reflect_index(static_cast<std::ptrdiff_t>(y) - static_cast<std::ptrdiff_t>(r),
                                  img.height);
    for (std::size_t x = 0; x < pw; ++x)
      out.at(y, x) = img.at(sy, reflect_index(static_cast<std::ptrdiff_t>(x) -
                                                  static_cast<std::ptrdiff_t>(r),
                                              img.width));
  }
  return out;
}

// Separable filtering with a symmetric odd-length kernel.
Image2D separable(const Image2D& img, const std::vector<double>& taps) {
  const std::size_t r = taps.size() / 2;
  const Image2D p = padded(img, r);
  const std::size_t h = img.height, w = img.width;
  std::vector<double> rows(p.height * w);
  for (std::size_t y = 0; y < p.height; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < taps.size(); ++k) acc += taps[k] * p.at(y, x + k);
      rows[y * w + x] = acc;
    }
  Image2D out(h, w, 0.0, img.range);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < taps.size(); ++k) acc += taps[k] * rows[(y + k) * w + x];
      out.at(y, x) = acc;
    }
  return out;
}

Image2D median(const Image2D& img, std::size_t window) {
  const std::size_t r = window / 2;
  const Image2D p = padded(img, r);
  Image2D out(img.height, img.width, 0.0, img.range);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ys = 0; ys < static_cast<std::ptrdiff_t>(img.height); ++ys) {
    const auto y = static_cast<std::size_t>(ys);
    std::vector<double> buf(window * window);
    for (std::size_t x = 0; x < img.width; ++x) {
      std::size_t n = 0;
      for (std::size_t dy = 0; dy < window; ++dy)
        for (std::size_t dx = 0; dx < window; ++dx) buf[n++] = p.at(y + dy, x + dx);
      auto mid = buf.begin() + static_cast<std::ptrdiff_t>(buf.size() / 2);
      std::nth_element(buf.begin(), mid, buf.end());
      out.at(y, x) = *mid;
    }
  }
  return out;
}

void check_window(const Image2D& img, std::size_t window) {
  if (window < 3 || window % 2 == 0) {
    throw UsageError("filter window must be odd and >= 3, got " + std::to_string(window));
  }
  if (window > std::min(img.height, img.width)) {
    throw UsageError("filter window " + std::to_string(window) + " exceeds the image");
  }
}

}  // namespace

Image2D apply_filter(const Image2D& img, const FilterSpec& spec) {
  if (spec.kind == FilterKind::nlm) return nlm_denoise(img, spec);
  check_window(img, spec.window);
  switch (spec.kind) {
    case FilterKind::mean:
      return separable(img, std::vector<double>(spec.window, 1.0 / static_cast<double>(spec.window)));
    case FilterKind::median: return median(img, spec.window);
    case FilterKind::gaussian: {
      if (!(spec.sigma > 0.0)) throw UsageError("gaussian filter sigma must be positive");
      std::vector<double> taps(spec.window);
      const double c = static_cast<double>(spec.window / 2);
      double total = 0.0;
      for (std::size_t i = 0; i < taps.size(); ++i) {
        const double d = static_cast<double>(i) - c;
        taps[i] = std::exp(-d * d / (2.0 * spec.sigma * spec.sigma));
        total += taps[i];
      }
      for (auto& t : taps) t /= total;
      return separable(img, taps);
    }
    case FilterKind::nlm: break;
  }
  return img;
}

Image2D nlm_denoise(const Image2D& img, const FilterSpec& spec) {
  if (spec.patch_radius < 1 || spec.search_radius < spec.patch_radius) {
    throw UsageError("nlm: need search_radius >= patch_radius >= 1");
  }
  if (!(spec.strength > 0.0)) throw UsageError("nlm: filtering strength must be positive");
  const std::size_t s = spec.search_radius, pr = spec.patch_radius;
  const std::size_t margin = s + pr;
  const Image2D p = padded(img, margin);
  const double h2 = spec.strength * spec.strength;
  const double bias = 2.0 * spec.sigma * spec.sigma;
  const double patch_area = static_cast<double>((2 * pr + 1) * (2 * pr + 1));
  const auto sr = static_cast<std::ptrdiff_t>(s);
  const auto prr = static_cast<std::ptrdiff_t>(pr);

  Image2D out(img.height, img.width, 0.0, img.range);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ys = 0; ys < static_cast<std::ptrdiff_t>(img.height); ++ys) {
    const std::ptrdiff_t cy = ys + static_cast<std::ptrdiff_t>(margin);
    for (std::size_t x = 0; x < img.width; ++x) {
      const std::ptrdiff_t cx = static_cast<std::ptrdiff_t>(x + margin);
      double weight_sum = 0.0, value_sum = 0.0;
      for (std::ptrdiff_t oy = -sr; oy <= sr; ++oy)
        for (std::ptrdiff_t ox = -sr; ox <= sr; ++ox) {
          double d2 = 0.0;
          for (std::ptrdiff_t py = -prr; py <= prr; ++py)
            for (std::ptrdiff_t px = -prr; px <= prr; ++px) {
              const double a = p.at(static_cast<std::size_t>(cy + py), static_cast<std::size_t>(cx + px));
              const double b = p.at(static_cast<std::size_t>(cy + oy + py),
                                    static_cast<std::size_t>(cx + ox + px));
              d2 += (a - b) * (a - b);
            }
          d2 /= patch_area;
          const double wgt = std::exp(-std::max(d2 - bias, 0.0) / h2);
          weight_sum += wgt;
          value_sum += wgt * p.at(static_cast<std::size_t>(cy + oy), static_cast<std::size_t>(cx + ox));
        }
      out.at(static_cast<std::size_t>(ys), x) = value_sum / weight_sum;
    }
  }
  return out;
}

}  // namespace patchdenoise
