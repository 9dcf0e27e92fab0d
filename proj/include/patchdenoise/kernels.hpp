#pragma once

#include <cstddef>
#include <span>
#include <vector>

// Raw-buffer kernels behind the differentiable operators.
//
// `kernels::` holds the OpenMP-parallel versions used at run time
// (im2col + GEMM for convolution). `reference::` holds plain serial loops
// with the same contracts; they exist for tests and benchmarks.

namespace patchdenoise {

struct ConvGeometry {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t in_h = 1;
  std::size_t in_w = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t out_h() const { return (in_h + 2 * padding - kernel) / stride + 1; }
  std::size_t out_w() const { return (in_w + 2 * padding - kernel) / stride + 1; }
  std::size_t col_rows() const { return in_channels * kernel * kernel; }
  std::size_t col_cols() const { return batch * out_h() * out_w(); }
};

namespace kernels {

/// im2col buffer laid out as [Cin*K*K] x [N*Hout*Wout], row-major.
template <typename T>
void im2col(const ConvGeometry& g, std::span<const T> input, std::span<T> col);

/// Accumulates a col buffer back into an NCHW gradient.
template <typename T>
void col2im(const ConvGeometry& g, std::span<const T> col, std::span<T> input_grad);

/// out = conv(input, weights) + bias. `col` receives the im2col buffer when
/// non-empty (callers keep it for the backward pass).
template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> input, std::span<const T> weights,
                    std::span<const T> bias, std::span<T> out, std::vector<T>* col = nullptr);

/// Accumulates gradients. Any of the three gradient spans may be empty to
/// skip that term. `col` must be the buffer saved by conv2d_forward.
template <typename T>
void conv2d_backward(const ConvGeometry& g, std::span<const T> col, std::span<const T> weights,
                     std::span<const T> out_grad, std::span<T> input_grad,
                     std::span<T> weight_grad, std::span<T> bias_grad);

/// Bilinear 2x upsampling (half-pixel centres, edge clamped), NCHW.
template <typename T>
void upsample2x_forward(std::size_t planes, std::size_t h, std::size_t w, std::span<const T> in,
                        std::span<T> out);

template <typename T>
void upsample2x_backward(std::size_t planes, std::size_t h, std::size_t w,
                         std::span<const T> out_grad, std::span<T> in_grad);

}  // namespace kernels

namespace reference {

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> input, std::span<const T> weights,
                    std::span<const T> bias, std::span<T> out);

template <typename T>
void conv2d_backward(const ConvGeometry& g, std::span<const T> input, std::span<const T> weights,
                     std::span<const T> out_grad, std::span<T> input_grad,
                     std::span<T> weight_grad, std::span<T> bias_grad);

template <typename T>
void upsample2x_forward(std::size_t planes, std::size_t h, std::size_t w, std::span<const T> in,
                        std::span<T> out);

}  // namespace reference

}  // namespace patchdenoise
