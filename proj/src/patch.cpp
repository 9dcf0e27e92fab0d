#include "patchdenoise/patch.hpp"

#include <algorithm>
#include <string>

#include "patchdenoise/error.hpp"

namespace patchdenoise {

namespace {

std::size_t round_up(std::size_t v, std::size_t m) { return (v + m - 1) / m * m; }

}  // namespace

PatchPlan plan_scales(std::size_t h, std::size_t w, const std::vector<std::size_t>& divisors,
                      std::size_t pad_multiple) {
  if (divisors.empty()) throw UsageError("plan_scales: no divisors");
  if (std::find(divisors.begin(), divisors.end(), 0u) != divisors.end()) {
    throw UsageError("plan_scales: divisors must be positive");
  }
  if (!std::is_sorted(divisors.begin(), divisors.end(), std::greater<>())) {
    throw UsageError("plan_scales: divisors must be sorted in descending order");
  }
  const std::size_t largest = divisors.front();
  if (h < largest || w < largest) {
    throw UsageError("plan_scales: image " + std::to_string(h) + "x" + std::to_string(w) +
                     " is smaller than the largest divisor " + std::to_string(largest));
  }
  const std::size_t multiple = pad_multiple == 0 ? largest : pad_multiple;
  if (multiple % largest != 0) {
    throw UsageError("plan_scales: pad multiple must be a multiple of the largest divisor");
  }

  PatchPlan plan;
  plan.image_h = h;
  plan.image_w = w;
  plan.padded_h = round_up(h, multiple);
  plan.padded_w = round_up(w, multiple);
  plan.divisors = divisors;
  for (auto d : divisors) {
    plan.patch_sizes.push_back(plan.padded_h / d);
    plan.patch_widths.push_back(plan.padded_w / d);
    plan.grid_dims.emplace_back(d, d);
  }
  return plan;
}

template <typename T>
PatchSet<T> extract_patches(const Image2D& img, const PatchPlan& plan, std::size_t scale_index) {
  if (scale_index >= plan.scales()) {
    throw UsageError("extract_patches: scale index " + std::to_string(scale_index) +
                     " out of range (" + std::to_string(plan.scales()) + " scales)");
  }
  const bool original = img.height == plan.image_h && img.width == plan.image_w;
  const bool padded = img.height == plan.padded_h && img.width == plan.padded_w;
  if (!original && !padded) {
    throw DimensionError("extract_patches: image " + std::to_string(img.height) + "x" +
                         std::to_string(img.width) + " does not match the plan");
  }
  const Image2D source = padded ? img : reflect_pad(img, plan.padded_h, plan.padded_w);

  PatchSet<T> set;
  set.scale_index = scale_index;
  set.patch_h = plan.patch_sizes[scale_index];
  set.patch_w = plan.patch_widths[scale_index];
  set.rows = plan.grid_dims[scale_index].first;
  set.cols = plan.grid_dims[scale_index].second;
  set.image_h = plan.image_h;
  set.image_w = plan.image_w;
  set.patches = split_patches(image_to_tensor<T>(source), set.rows, set.cols);
  set.positions = row_major_positions(set.rows, set.cols);
  return set;
}

template <typename T>
Tensor<T> tile_feature_maps(const Tensor<T>& features, std::span<const GridPos> positions,
                            std::size_t rows, std::size_t cols) {
  return tile_patches(features, positions, rows, cols);
}

template <typename T>
Image2D reassemble(const PatchSet<T>& set) {
  const std::size_t cells = set.rows * set.cols;
  if (!set.patches.defined() || set.positions.size() != cells || set.patches.dim(0) != cells) {
    throw IntegrityError("reassemble: expected " + std::to_string(cells) + " patches with positions");
  }
  std::vector<char> seen(cells, 0);
  for (const auto& p : set.positions) {
    if (p.row >= set.rows || p.col >= set.cols) {
      throw IntegrityError("reassemble: position (" + std::to_string(p.row) + "," +
                           std::to_string(p.col) + ") outside the grid");
    }
    if (seen[p.row * set.cols + p.col]++) {
      throw IntegrityError("reassemble: duplicate position (" + std::to_string(p.row) + "," +
                           std::to_string(p.col) + ")");
    }
  }
  const Tensor<T> full = tile_patches(set.patches, set.positions, set.rows, set.cols);
  return crop_image(tensor_to_image(full), set.image_h, set.image_w);
}

template PatchSet<float> extract_patches<float>(const Image2D&, const PatchPlan&, std::size_t);
template PatchSet<double> extract_patches<double>(const Image2D&, const PatchPlan&, std::size_t);
template Tensor<float> tile_feature_maps<float>(const Tensor<float>&, std::span<const GridPos>,
                                                std::size_t, std::size_t);
template Tensor<double> tile_feature_maps<double>(const Tensor<double>&, std::span<const GridPos>,
                                                  std::size_t, std::size_t);
template Image2D reassemble<float>(const PatchSet<float>&);
template Image2D reassemble<double>(const PatchSet<double>&);

}  // namespace patchdenoise
