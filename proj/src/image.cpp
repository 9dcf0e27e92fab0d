#include "patchdenoise/image.hpp"

#include "patchdenoise/error.hpp"

namespace patchdenoise {

std::string to_string(RangeTag tag) {
  switch (tag) {
    case RangeTag::normalized01: return "normalized01";
    case RangeTag::hounsfield: return "hounsfield";
    case RangeTag::raw: return "raw";
  }
  return "unknown";
}

Image2D::Image2D(std::size_t h, std::size_t w, double fill, RangeTag tag)
    : height(h), width(w), values(h * w, fill), range(tag) {
  if (h == 0 || w == 0) throw DimensionError("Image2D: dimensions must be positive");
}

Image2D::Image2D(std::size_t h, std::size_t w, std::vector<double> v, RangeTag tag)
    : height(h), width(w), values(std::move(v)), range(tag) {
  if (h == 0 || w == 0) throw DimensionError("Image2D: dimensions must be positive");
  if (values.size() != h * w) {
    throw DimensionError("Image2D: " + std::to_string(h) + "x" + std::to_string(w) + " needs " +
                         std::to_string(h * w) + " values, got " + std::to_string(values.size()));
  }
}

void HuWindow::validate() const {
  if (!(lo < hi)) {
    throw UsageError("HU window lower bound " + std::to_string(lo) +
                     " must be below upper bound " + std::to_string(hi));
  }
}

void SliceRecord::validate() const {
  if (rows == 0 || cols == 0) throw FormatError("slice dimensions must be positive");
  if (pixels.size() != rows * cols) {
    throw IntegrityError("slice holds " + std::to_string(pixels.size()) + " pixels, expected " +
                         std::to_string(rows * cols));
  }
  if (patient_id.empty()) throw FormatError("slice patient_id is empty");
}

std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
  std::ptrdiff_t m = i % period;
  if (m < 0) m += period;
  if (m >= static_cast<std::ptrdiff_t>(n)) m = period - m;
  return static_cast<std::size_t>(m);
}

Image2D reflect_pad(const Image2D& img, std::size_t new_h, std::size_t new_w) {
  if (new_h < img.height || new_w < img.width) {
    throw DimensionError("reflect_pad: target smaller than the image");
  }
  Image2D out(new_h, new_w, 0.0, img.range);
  for (std::size_t y = 0; y < new_h; ++y) {
    const std::size_t sy = reflect_index(static_cast<std::ptrdiff_t>(y), img.height);
    for (std::size_t x = 0; x < new_w; ++x)
      out.at(y, x) = img.at(sy, reflect_index(static_cast<std::ptrdiff_t>(x), img.width));
  }
  return out;
}

Image2D crop_image(const Image2D& img, std::size_t h, std::size_t w) {
  if (h > img.height || w > img.width) throw DimensionError("crop_image: crop exceeds the image");
  Image2D out(h, w, 0.0, img.range);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) out.at(y, x) = img.at(y, x);
  return out;
}

template <typename T>
Tensor<T> image_to_tensor(const Image2D& img, bool requires_grad) {
  std::vector<T> data(img.values.begin(), img.values.end());
  return Tensor<T>(Shape{1, 1, img.height, img.width}, std::move(data), requires_grad);
}

template <typename T>
Image2D tensor_to_image(const Tensor<T>& t, RangeTag tag) {
  if (t.rank() != 4) throw DimensionError("tensor_to_image: expected NCHW tensor");
  const std::size_t h = t.dim(2), w = t.dim(3);
  const auto d = t.data();
  return Image2D(h, w, std::vector<double>(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(h * w)),
                 tag);
}

template Tensor<float> image_to_tensor<float>(const Image2D&, bool);
template Tensor<double> image_to_tensor<double>(const Image2D&, bool);
template Image2D tensor_to_image<float>(const Tensor<float>&, RangeTag);
template Image2D tensor_to_image<double>(const Tensor<double>&, RangeTag);

}  // namespace patchdenoise
