#pragma once

#include <cstddef>
#include <string>

#include "patchdenoise/image.hpp"

namespace patchdenoise {

enum class FilterKind { mean, median, gaussian, nlm };

std::string to_string(FilterKind kind);
FilterKind filter_kind_from_string(const std::string& name);

struct FilterSpec {
  FilterKind kind = FilterKind::mean;
  std::size_t window = 3;          // odd, >= 3 (mean / median / gaussian)
  double sigma = 1.0;              // gaussian: spatial sigma; nlm: noise sigma
  double strength = 0.1;           // nlm filtering parameter h
  std::size_t search_radius = 5;   // nlm
  std::size_t patch_radius = 1;    // nlm

  /// Defaults tuned for [0, 1] images with moderate noise.
  static FilterSpec defaults(FilterKind kind);
};

/// Windowed filtering with reflect padding; dispatches nlm to nlm_denoise.
Image2D apply_filter(const Image2D& img, const FilterSpec& spec);

/// Non-local means: each pixel becomes a weighted mean over the search
/// window with w = exp(-max(d2 - 2 sigma^2, 0) / h^2), d2 being the mean
/// squared difference between the two surrounding patches.
Image2D nlm_denoise(const Image2D& img, const FilterSpec& spec);

}  // namespace patchdenoise
