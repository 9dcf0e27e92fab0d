#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "patchdenoise/tensor.hpp"

namespace patchdenoise {

enum class RangeTag { normalized01, hounsfield, raw };

std::string to_string(RangeTag tag);

/// Single-channel row-major image.
struct Image2D {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;
  RangeTag range = RangeTag::normalized01;

  Image2D() = default;
  Image2D(std::size_t h, std::size_t w, double fill = 0.0, RangeTag tag = RangeTag::normalized01);
  Image2D(std::size_t h, std::size_t w, std::vector<double> v, RangeTag tag);

  double& at(std::size_t y, std::size_t x) { return values[y * width + x]; }
  double at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
  std::size_t size() const { return values.size(); }
  bool same_shape(const Image2D& other) const {
    return height == other.height && width == other.width;
  }
};

/// Clinical intensity window in Hounsfield units.
struct HuWindow {
  double lo = -160.0;
  double hi = 240.0;

  static HuWindow abdomen() { return {-160.0, 240.0}; }
  static HuWindow wide() { return {-1000.0, 1000.0}; }
  void validate() const;
  friend bool operator==(const HuWindow&, const HuWindow&) = default;
};

/// Stored CT slice: integer pixels plus the rescale pair mapping them to HU.
struct SliceRecord {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::int16_t> pixels;
  double rescale_slope = 1.0;
  double rescale_intercept = -1024.0;
  std::string patient_id;
  int slice_index = 0;

  void validate() const;
};

/// Index into [0, n) for a coordinate that may fall outside it, mirroring
/// about the edge samples without repeating them (d c b | a b c d | c b a).
std::size_t reflect_index(std::ptrdiff_t i, std::size_t n);

/// Extends an image to new_h x new_w by reflection across the bottom and
/// right edges. The original occupies the top-left corner.
Image2D reflect_pad(const Image2D& img, std::size_t new_h, std::size_t new_w);

Image2D crop_image(const Image2D& img, std::size_t h, std::size_t w);

/// 1 x 1 x H x W tensor view of an image.
template <typename T>
Tensor<T> image_to_tensor(const Image2D& img, bool requires_grad = false);

/// First plane of an NCHW tensor as an image.
template <typename T>
Image2D tensor_to_image(const Tensor<T>& t, RangeTag tag = RangeTag::normalized01);

}  // namespace patchdenoise
