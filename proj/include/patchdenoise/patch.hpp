#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "patchdenoise/image.hpp"
#include "patchdenoise/ops.hpp"
#include "patchdenoise/tensor.hpp"

namespace patchdenoise {

/// Multi-scale patch geometry for one image size.
///
/// Each axis is reflect-padded up to a multiple of the largest divisor (or of
/// an explicit `pad_multiple`). A scale with divisor d splits the padded
/// image into a d x d grid of non-overlapping patches.
struct PatchPlan {
  std::size_t image_h = 0;
  std::size_t image_w = 0;
  std::size_t padded_h = 0;
  std::size_t padded_w = 0;
  std::vector<std::size_t> divisors;
  std::vector<std::size_t> patch_sizes;   // patch height per scale (padded_h / divisor)
  std::vector<std::size_t> patch_widths;  // patch width per scale (padded_w / divisor)
  std::vector<std::pair<std::size_t, std::size_t>> grid_dims;  // (rows, cols) per scale

  std::size_t scales() const { return divisors.size(); }
};

/// Plans the patch scales for an h x w image. Divisors must be sorted in
/// descending order; both dims must be at least the largest divisor.
/// `pad_multiple` of 0 pads to a multiple of the largest divisor.
PatchPlan plan_scales(std::size_t h, std::size_t w, const std::vector<std::size_t>& divisors,
                      std::size_t pad_multiple = 0);

template <typename T>
struct PatchSet {
  std::size_t scale_index = 0;
  std::size_t patch_h = 0;
  std::size_t patch_w = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t image_h = 0;  // dims to crop back to
  std::size_t image_w = 0;
  Tensor<T> patches;        // (rows*cols) x 1 x patch_h x patch_w
  std::vector<GridPos> positions;
};

/// Non-overlapping tiling of `img` at one scale. The image may be given at
/// its original size (it is reflect-padded here) or already padded.
template <typename T>
PatchSet<T> extract_patches(const Image2D& img, const PatchPlan& plan, std::size_t scale_index);

/// Places per-patch feature maps (a batch, patch i at positions[i]) into a
/// single 1 x C x (rows*p) x (cols*q) map aligned with the image grid.
template <typename T>
Tensor<T> tile_feature_maps(const Tensor<T>& features, std::span<const GridPos> positions,
                            std::size_t rows, std::size_t cols);

/// Inverse of extract_patches, driven by the stored positions. Padding is
/// cropped away.
template <typename T>
Image2D reassemble(const PatchSet<T>& set);

}  // namespace patchdenoise
