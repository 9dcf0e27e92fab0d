#pragma once

#include <cstddef>
#include <cstdint>

#include "patchdenoise/image.hpp"

namespace patchdenoise {

/// HU = pixel * rescale_slope + rescale_intercept
Image2D to_hounsfield(const SliceRecord& slice);

/// Clamps to the window, then maps [lo, hi] affinely onto [0, 1].
Image2D window_normalize(const Image2D& img, const HuWindow& window);

/// Inverse of the affine part of window_normalize.
Image2D denormalize(const Image2D& img, const HuWindow& window);

/// Photon-counting noise: v -> Poisson(v * photon_count) / photon_count,
/// clamped to [0, 1].
Image2D add_poisson_noise(const Image2D& clean, double photon_count, std::uint64_t seed);

/// v -> clamp(v + N(0, sigma^2), 0, 1)
Image2D add_gaussian_noise(const Image2D& clean, double sigma, std::uint64_t seed);

/// Background value of generated phantoms.
inline constexpr double kPhantomBackground = 0.02;

/// Synthetic abdominal-like phantom: an optional body ellipse with smaller
/// organ ellipses inside, anti-aliased by 4x4 supersampling, each filled with
/// a low-amplitude smooth texture. With zero ellipses the result is the
/// uniform background.
Image2D generate_phantom(std::size_t height, std::size_t width, std::size_t n_ellipses,
                         std::uint64_t seed);

}  // namespace patchdenoise
