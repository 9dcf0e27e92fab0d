#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "patchdenoise/tensor.hpp"

namespace patchdenoise {

/// Grid coordinate of a patch: (row, col) in the patch grid.
struct GridPos {
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const GridPos&, const GridPos&) = default;
};

/// 2-D convolution over NCHW input with OIKK weights. `bias` may be an
/// undefined tensor. Output spatial size is floor((H + 2p - K) / s) + 1.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias,
                 std::size_t stride, std::size_t padding);

/// Bilinear 2x upsampling of an NCHW tensor (corners not aligned).
template <typename T>
Tensor<T> upsample2x(const Tensor<T>& input);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T>
Tensor<T> relu(const Tensor<T>& x);
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);

/// Mean absolute difference. The subgradient at exact ties is 0.
template <typename T>
Tensor<T> l1_loss(const Tensor<T>& prediction, const Tensor<T>& target);

/// Concatenates NCHW tensors along the channel axis.
template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> parts);

/// Splits each N x C x (rows*ph) x (cols*pw) image into a batch of
/// N*rows*cols patches, image-major then row-major over the grid.
template <typename T>
Tensor<T> split_patches(const Tensor<T>& input, std::size_t rows, std::size_t cols);

/// Places patch i of a (rows*cols) x C x ph x pw batch at grid cell
/// positions[i] of a 1 x C x (rows*ph) x (cols*pw) map. Every cell must be
/// covered exactly once.
template <typename T>
Tensor<T> tile_patches(const Tensor<T>& patches, std::span<const GridPos> positions,
                       std::size_t rows, std::size_t cols);

/// Keeps the top-left height x width window of every plane of an NCHW tensor.
template <typename T>
Tensor<T> crop(const Tensor<T>& input, std::size_t height, std::size_t width);

/// Row-major grid positions (0,0), (0,1), ... for a rows x cols grid.
std::vector<GridPos> row_major_positions(std::size_t rows, std::size_t cols);

}  // namespace patchdenoise
