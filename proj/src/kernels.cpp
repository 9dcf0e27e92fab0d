#include "patchdenoise/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace patchdenoise {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Tap {
  std::size_t lo;
  std::size_t hi;
  double w_lo;
  double w_hi;
};

// Source taps for bilinear 2x upsampling along one axis of length n.
std::vector<Tap> upsample_taps(std::size_t n) {
  std::vector<Tap> taps(2 * n);
  for (std::size_t o = 0; o < 2 * n; ++o) {
    double src = (static_cast<double>(o) + 0.5) / 2.0 - 0.5;
    if (src < 0.0) src = 0.0;
    auto lo = static_cast<std::size_t>(src);
    if (lo > n - 1) lo = n - 1;
    std::size_t hi = std::min(lo + 1, n - 1);
    double frac = src - static_cast<double>(lo);
    taps[o] = {lo, hi, 1.0 - frac, frac};
  }
  return taps;
}

}  // namespace

namespace kernels {

template <typename T>
void im2col(const ConvGeometry& g, std::span<const T> input, std::span<T> col) {
  const std::size_t ho = g.out_h(), wo = g.out_w();
  const std::size_t plane = ho * wo;
  const std::size_t cols = g.col_cols();
  const auto rows = static_cast<std::ptrdiff_t>(g.col_rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    const std::size_t c = static_cast<std::size_t>(r) / (g.kernel * g.kernel);
    const std::size_t ki = (static_cast<std::size_t>(r) / g.kernel) % g.kernel;
    const std::size_t kj = static_cast<std::size_t>(r) % g.kernel;
    T* dst = col.data() + static_cast<std::size_t>(r) * cols;
    for (std::size_t n = 0; n < g.batch; ++n) {
      const T* src = input.data() + (n * g.in_channels + c) * g.in_h * g.in_w;
      T* out = dst + n * plane;
      for (std::size_t oy = 0; oy < ho; ++oy) {
        const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                        static_cast<std::ptrdiff_t>(g.padding);
        T* row = out + oy * wo;
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) {
          std::fill(row, row + wo, T{0});
          continue;
        }
        const T* src_row = src + static_cast<std::size_t>(iy) * g.in_w;
        for (std::size_t ox = 0; ox < wo; ++ox) {
          const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                          static_cast<std::ptrdiff_t>(g.padding);
          row[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w))
                        ? T{0}
                        : src_row[static_cast<std::size_t>(ix)];
        }
      }
    }
  }
}

template <typename T>
void col2im(const ConvGeometry& g, std::span<const T> col, std::span<T> input_grad) {
  const std::size_t ho = g.out_h(), wo = g.out_w();
  const std::size_t plane = ho * wo;
  const std::size_t cols = g.col_cols();
  const auto channels = static_cast<std::ptrdiff_t>(g.in_channels);
  // One channel per thread: every write for channel c comes from rows of c.
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t cs = 0; cs < channels; ++cs) {
    const auto c = static_cast<std::size_t>(cs);
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        const std::size_t r = (c * g.kernel + ki) * g.kernel + kj;
        const T* src = col.data() + r * cols;
        for (std::size_t n = 0; n < g.batch; ++n) {
          T* dst = input_grad.data() + (n * g.in_channels + c) * g.in_h * g.in_w;
          const T* in = src + n * plane;
          for (std::size_t oy = 0; oy < ho; ++oy) {
            const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                            static_cast<std::ptrdiff_t>(g.padding);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
            T* dst_row = dst + static_cast<std::size_t>(iy) * g.in_w;
            const T* in_row = in + oy * wo;
            for (std::size_t ox = 0; ox < wo; ++ox) {
              const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                              static_cast<std::ptrdiff_t>(g.padding);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
              dst_row[static_cast<std::size_t>(ix)] += in_row[ox];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> input, std::span<const T> weights,
                    std::span<const T> bias, std::span<T> out, std::vector<T>* col) {
  const std::size_t rows = g.col_rows(), cols = g.col_cols();
  const std::size_t plane = g.out_h() * g.out_w();
  std::vector<T> local;
  std::vector<T>& buffer = col ? *col : local;
  buffer.resize(rows * cols);
  im2col<T>(g, input, buffer);

  Eigen::Map<const RowMat<T>> w(weights.data(), static_cast<Eigen::Index>(g.out_channels),
                                static_cast<Eigen::Index>(rows));
  Eigen::Map<const RowMat<T>> c(buffer.data(), static_cast<Eigen::Index>(rows),
                                static_cast<Eigen::Index>(cols));
  RowMat<T> product(static_cast<Eigen::Index>(g.out_channels), static_cast<Eigen::Index>(cols));
  product.noalias() = w * c;

  const auto total = static_cast<std::ptrdiff_t>(g.batch * g.out_channels);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t idx = 0; idx < total; ++idx) {
    const std::size_t n = static_cast<std::size_t>(idx) / g.out_channels;
    const std::size_t co = static_cast<std::size_t>(idx) % g.out_channels;
    const T* src = product.data() + co * cols + n * plane;
    T* dst = out.data() + static_cast<std::size_t>(idx) * plane;
    const T b = bias.empty() ? T{0} : bias[co];
    for (std::size_t p = 0; p < plane; ++p) dst[p] = src[p] + b;
  }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, std::span<const T> col, std::span<const T> weights,
                     std::span<const T> out_grad, std::span<T> input_grad,
                     std::span<T> weight_grad, std::span<T> bias_grad) {
  const std::size_t rows = g.col_rows(), cols = g.col_cols();
  const std::size_t plane = g.out_h() * g.out_w();
  const auto co_n = static_cast<Eigen::Index>(g.out_channels);

  // Gather the NCHW gradient into [Cout] x [N*H*W].
  RowMat<T> dy(co_n, static_cast<Eigen::Index>(cols));
  const auto total = static_cast<std::ptrdiff_t>(g.batch * g.out_channels);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t idx = 0; idx < total; ++idx) {
    const std::size_t n = static_cast<std::size_t>(idx) / g.out_channels;
    const std::size_t co = static_cast<std::size_t>(idx) % g.out_channels;
    std::copy_n(out_grad.data() + static_cast<std::size_t>(idx) * plane, plane,
                dy.data() + co * cols + n * plane);
  }

  if (!bias_grad.empty()) {
    for (std::size_t co = 0; co < g.out_channels; ++co) {
      const T* row = dy.data() + co * cols;
      T acc{0};
      for (std::size_t p = 0; p < cols; ++p) acc += row[p];
      bias_grad[co] += acc;
    }
  }
  if (!weight_grad.empty()) {
    Eigen::Map<const RowMat<T>> c(col.data(), static_cast<Eigen::Index>(rows),
                                  static_cast<Eigen::Index>(cols));
    Eigen::Map<RowMat<T>> dw(weight_grad.data(), co_n, static_cast<Eigen::Index>(rows));
    dw.noalias() += dy * c.transpose();
  }
  if (!input_grad.empty()) {
    Eigen::Map<const RowMat<T>> w(weights.data(), co_n, static_cast<Eigen::Index>(rows));
    RowMat<T> dcol(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    dcol.noalias() = w.transpose() * dy;
    col2im<T>(g, std::span<const T>(dcol.data(), rows * cols), input_grad);
  }
}

template <typename T>
void upsample2x_forward(std::size_t planes, std::size_t h, std::size_t w, std::span<const T> in,
                        std::span<T> out) {
  const auto ty = upsample_taps(h);
  const auto tx = upsample_taps(w);
  const std::size_t oh = 2 * h, ow = 2 * w;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ps = 0; ps < static_cast<std::ptrdiff_t>(planes); ++ps) {
    const auto p = static_cast<std::size_t>(ps);
    const T* src = in.data() + p * h * w;
    T* dst = out.data() + p * oh * ow;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      const Tap& y = ty[oy];
      const T* r0 = src + y.lo * w;
      const T* r1 = src + y.hi * w;
      const T wy0 = static_cast<T>(y.w_lo), wy1 = static_cast<T>(y.w_hi);
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const Tap& x = tx[ox];
        const T wx0 = static_cast<T>(x.w_lo), wx1 = static_cast<T>(x.w_hi);
        dst[oy * ow + ox] = wy0 * (wx0 * r0[x.lo] + wx1 * r0[x.hi]) +
                            wy1 * (wx0 * r1[x.lo] + wx1 * r1[x.hi]);
      }
    }
  }
}

template <typename T>
void upsample2x_backward(std::size_t planes, std::size_t h, std::size_t w,
                         std::span<const T> out_grad, std::span<T> in_grad) {
  const auto ty = upsample_taps(h);
  const auto tx = upsample_taps(w);
  const std::size_t oh = 2 * h, ow = 2 * w;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ps = 0; ps < static_cast<std::ptrdiff_t>(planes); ++ps) {
    const auto p = static_cast<std::size_t>(ps);
    const T* src = out_grad.data() + p * oh * ow;
    T* dst = in_grad.data() + p * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      const Tap& y = ty[oy];
      T* r0 = dst + y.lo * w;
      T* r1 = dst + y.hi * w;
      const T wy0 = static_cast<T>(y.w_lo), wy1 = static_cast<T>(y.w_hi);
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const Tap& x = tx[ox];
        const T gval = src[oy * ow + ox];
        const T wx0 = static_cast<T>(x.w_lo), wx1 = static_cast<T>(x.w_hi);
        r0[x.lo] += wy0 * wx0 * gval;
        r0[x.hi] += wy0 * wx1 * gval;
        r1[x.lo] += wy1 * wx0 * gval;
        r1[x.hi] += wy1 * wx1 * gval;
      }
    }
  }
}

}  // namespace kernels

namespace reference {

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> input, std::span<const T> weights,
                    std::span<const T> bias, std::span<T> out) {
  const std::size_t ho = g.out_h(), wo = g.out_w(), k = g.kernel;
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t co = 0; co < g.out_channels; ++co)
      for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox) {
          T acc = bias.empty() ? T{0} : bias[co];
          for (std::size_t ci = 0; ci < g.in_channels; ++ci)
            for (std::size_t ki = 0; ki < k; ++ki)
              for (std::size_t kj = 0; kj < k; ++kj) {
                const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                                static_cast<std::ptrdiff_t>(g.padding);
                const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                                static_cast<std::ptrdiff_t>(g.padding);
                if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h) ||
                    ix >= static_cast<std::ptrdiff_t>(g.in_w))
                  continue;
                acc += input[((n * g.in_channels + ci) * g.in_h + static_cast<std::size_t>(iy)) *
                                 g.in_w +
                             static_cast<std::size_t>(ix)] *
                       weights[((co * g.in_channels + ci) * k + ki) * k + kj];
              }
          out[((n * g.out_channels + co) * ho + oy) * wo + ox] = acc;
        }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, std::span<const T> input, std::span<const T> weights,
                     std::span<const T> out_grad, std::span<T> input_grad,
                     std::span<T> weight_grad, std::span<T> bias_grad) {
  const std::size_t ho = g.out_h(), wo = g.out_w(), k = g.kernel;
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t co = 0; co < g.out_channels; ++co)
      for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox) {
          const T gy = out_grad[((n * g.out_channels + co) * ho + oy) * wo + ox];
          if (!bias_grad.empty()) bias_grad[co] += gy;
          for (std::size_t ci = 0; ci < g.in_channels; ++ci)
            for (std::size_t ki = 0; ki < k; ++ki)
              for (std::size_t kj = 0; kj < k; ++kj) {
                const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                                static_cast<std::ptrdiff_t>(g.padding);
                const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                                static_cast<std::ptrdiff_t>(g.padding);
                if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h) ||
                    ix >= static_cast<std::ptrdiff_t>(g.in_w))
                  continue;
                const std::size_t in_idx =
                    ((n * g.in_channels + ci) * g.in_h + static_cast<std::size_t>(iy)) * g.in_w +
                    static_cast<std::size_t>(ix);
                const std::size_t w_idx = ((co * g.in_channels + ci) * k + ki) * k + kj;
                if (!input_grad.empty()) input_grad[in_idx] += gy * weights[w_idx];
                if (!weight_grad.empty()) weight_grad[w_idx] += gy * input[in_idx];
              }
        }
}

template <typename T>
void upsample2x_forward(std::size_t planes, std::size_t h, std::size_t w, std::span<const T> in,
                        std::span<T> out) {
  auto sample = [](double o, std::size_t n, std::size_t& lo, std::size_t& hi, double& frac) {
    double s = std::max(0.0, (o + 0.5) * 0.5 - 0.5);
    lo = std::min(static_cast<std::size_t>(std::floor(s)), n - 1);
    hi = std::min(lo + 1, n - 1);
    frac = s - static_cast<double>(lo);
  };
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t oy = 0; oy < 2 * h; ++oy)
      for (std::size_t ox = 0; ox < 2 * w; ++ox) {
        std::size_t y0, y1, x0, x1;
        double fy, fx;
        sample(static_cast<double>(oy), h, y0, y1, fy);
        sample(static_cast<double>(ox), w, x0, x1, fx);
        const T* src = in.data() + p * h * w;
        const double top = (1 - fx) * src[y0 * w + x0] + fx * src[y0 * w + x1];
        const double bottom = (1 - fx) * src[y1 * w + x0] + fx * src[y1 * w + x1];
        out[(p * 2 * h + oy) * 2 * w + ox] = static_cast<T>((1 - fy) * top + fy * bottom);
      }
}

}  // namespace reference

#define PD_INSTANTIATE_KERNELS(T)                                                               \
  template void kernels::im2col<T>(const ConvGeometry&, std::span<const T>, std::span<T>);     \
  template void kernels::col2im<T>(const ConvGeometry&, std::span<const T>, std::span<T>);     \
  template void kernels::conv2d_forward<T>(const ConvGeometry&, std::span<const T>,            \
                                           std::span<const T>, std::span<const T>,             \
                                           std::span<T>, std::vector<T>*);                     \
  template void kernels::conv2d_backward<T>(const ConvGeometry&, std::span<const T>,           \
                                            std::span<const T>, std::span<const T>,            \
                                            std::span<T>, std::span<T>, std::span<T>);         \
  template void kernels::upsample2x_forward<T>(std::size_t, std::size_t, std::size_t,          \
                                               std::span<const T>, std::span<T>);              \
  template void kernels::upsample2x_backward<T>(std::size_t, std::size_t, std::size_t,         \
                                                std::span<const T>, std::span<T>);             \
  template void reference::conv2d_forward<T>(const ConvGeometry&, std::span<const T>,          \
                                             std::span<const T>, std::span<const T>,           \
                                             std::span<T>);                                    \
  template void reference::conv2d_backward<T>(const ConvGeometry&, std::span<const T>,         \
                                              std::span<const T>, std::span<const T>,          \
                                              std::span<T>, std::span<T>, std::span<T>);       \
  template void reference::upsample2x_forward<T>(std::size_t, std::size_t, std::size_t,        \
                                                 std::span<const T>, std::span<T>);

PD_INSTANTIATE_KERNELS(float)
PD_INSTANTIATE_KERNELS(double)

#undef PD_INSTANTIATE_KERNELS

}  // namespace patchdenoise
