#include "patchdenoise/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "patchdenoise/error.hpp"
#include "patchdenoise/kernels.hpp"

namespace patchdenoise {

namespace {

template <typename T>
bool will_record(std::initializer_list<const Tensor<T>*> inputs) {
  if (!grad_enabled()) return false;
  for (const auto* t : inputs)
    if (t->defined() && t->requires_grad()) return true;
  return false;
}

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != b.rank()) {
    throw DimensionError(std::string(op) + ": rank mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  for (std::size_t axis = 0; axis < a.rank(); ++axis) {
    if (a.dim(axis) != b.dim(axis)) {
      throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " differs (" +
                           std::to_string(a.dim(axis)) + " vs " + std::to_string(b.dim(axis)) +
                           ")");
    }
  }
}

template <typename T>
void require_rank4(const char* op, const Tensor<T>& t, const char* what) {
  if (t.rank() != 4) {
    throw DimensionError(std::string(op) + ": " + what + " must be rank 4 (NCHW), got " +
                         shape_string(t.shape()));
  }
}

// Grad buffer of parent i, or an empty span when it does not need one.
template <typename T>
std::span<T> parent_grad(detail::Node<T>& node, std::size_t i) {
  if (i >= node.parents.size()) return {};
  auto& p = *node.parents[i];
  if (!p.requires_grad) return {};
  p.ensure_grad();
  return p.grad;
}

template <typename T, typename F>
std::vector<T> unary(const Tensor<T>& x, F&& f) {
  std::vector<T> out(x.numel());
  const auto in = x.data();
  const auto n = static_cast<std::ptrdiff_t>(out.size());
#pragma omp parallel for simd schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = f(in[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace

std::vector<GridPos> row_major_positions(std::size_t rows, std::size_t cols) {
  std::vector<GridPos> out;
  out.reserve(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out.push_back({r, c});
  return out;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias,
                 std::size_t stride, std::size_t padding) {
  require_rank4("conv2d", input, "input");
  require_rank4("conv2d", weights, "weights");
  if (stride == 0) throw UsageError("conv2d: stride must be positive");
  if (weights.dim(2) != weights.dim(3)) {
    throw DimensionError("conv2d: kernel axes 2 and 3 must match, got " +
                         shape_string(weights.shape()));
  }
  if (input.dim(1) != weights.dim(1)) {
    throw DimensionError("conv2d: channel axis 1 of input has " + std::to_string(input.dim(1)) +
                         " but weights expect " + std::to_string(weights.dim(1)));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != weights.dim(0))) {
    throw DimensionError("conv2d: bias axis 0 must equal output channels " +
                         std::to_string(weights.dim(0)) + ", got " + shape_string(bias.shape()));
  }
  ConvGeometry g;
  g.batch = input.dim(0);
  g.in_channels = input.dim(1);
  g.in_h = input.dim(2);
  g.in_w = input.dim(3);
  g.out_channels = weights.dim(0);
  g.kernel = weights.dim(2);
  g.stride = stride;
  g.padding = padding;
  if (g.in_h + 2 * padding < g.kernel) {
    throw DimensionError("conv2d: kernel " + std::to_string(g.kernel) +
                         " exceeds padded height (axis 2) " + std::to_string(g.in_h + 2 * padding));
  }
  if (g.in_w + 2 * padding < g.kernel) {
    throw DimensionError("conv2d: kernel " + std::to_string(g.kernel) +
                         " exceeds padded width (axis 3) " + std::to_string(g.in_w + 2 * padding));
  }

  const bool record = will_record<T>({&input, &weights, &bias});
  Shape out_shape{g.batch, g.out_channels, g.out_h(), g.out_w()};
  std::vector<T> out(shape_numel(out_shape));
  auto col = record ? std::make_shared<std::vector<T>>() : nullptr;
  kernels::conv2d_forward<T>(g, input.data(), weights.data(),
                             bias.defined() ? bias.data() : std::span<const T>{}, out,
                             col.get());

  std::vector<Tensor<T>> inputs{input, weights};
  if (bias.defined()) inputs.push_back(bias);
  return Tensor<T>::from_op(std::move(out_shape), std::move(out), std::move(inputs),
                            [g, col](detail::Node<T>& node) {
                              auto gx = parent_grad(node, 0);
                              auto gw = parent_grad(node, 1);
                              auto gb = parent_grad(node, 2);
                              kernels::conv2d_backward<T>(g, *col, node.parents[1]->data,
                                                          node.grad, gx, gw, gb);
                            });
}

template <typename T>
Tensor<T> upsample2x(const Tensor<T>& input) {
  require_rank4("upsample2x", input, "input");
  const std::size_t planes = input.dim(0) * input.dim(1);
  const std::size_t h = input.dim(2), w = input.dim(3);
  Shape out_shape{input.dim(0), input.dim(1), 2 * h, 2 * w};
  std::vector<T> out(shape_numel(out_shape));
  kernels::upsample2x_forward<T>(planes, h, w, input.data(), out);
  return Tensor<T>::from_op(std::move(out_shape), std::move(out), {input},
                            [planes, h, w](detail::Node<T>& node) {
                              kernels::upsample2x_backward<T>(planes, h, w, node.grad,
                                                              parent_grad(node, 0));
                            });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  auto y = unary(x, [](T v) { return T{1} / (T{1} + std::exp(-v)); });
  return Tensor<T>::from_op(x.shape(), std::move(y), {x},
                            [](detail::Node<T>& node) {
                              auto gx = parent_grad(node, 0);
                              for (std::size_t i = 0; i < gx.size(); ++i) {
                                const T s = node.data[i];
                                gx[i] += node.grad[i] * s * (T{1} - s);
                              }
                            });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  // NaN passes through so corrupted inputs still surface as a non-finite loss.
  auto y = unary(x, [](T v) { return v < T{0} ? T{0} : v; });
  return Tensor<T>::from_op(x.shape(), std::move(y), {x},
                            [](detail::Node<T>& node) {
                              auto gx = parent_grad(node, 0);
                              const auto& in = node.parents[0]->data;
                              for (std::size_t i = 0; i < gx.size(); ++i)
                                if (in[i] > T{0}) gx[i] += node.grad[i];
                            });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("add", a, b);
  std::vector<T> out(a.numel());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return Tensor<T>::from_op(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& node) {
    for (std::size_t p = 0; p < 2; ++p) {
      auto gp = parent_grad(node, p);
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += node.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("mul", a, b);
  std::vector<T> out(a.numel());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return Tensor<T>::from_op(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& node) {
    auto ga = parent_grad(node, 0);
    auto gb = parent_grad(node, 1);
    const auto& xa = node.parents[0]->data;
    const auto& xb = node.parents[1]->data;
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += node.grad[i] * xb[i];
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += node.grad[i] * xa[i];
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> out(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] * factor;
  return Tensor<T>::from_op(x.shape(), std::move(out), {x}, [factor](detail::Node<T>& node) {
    auto gx = parent_grad(node, 0);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += node.grad[i] * factor;
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc{0};
  for (T v : x.data()) acc += v;
  return Tensor<T>::from_op(Shape{1}, std::vector<T>{acc}, {x}, [](detail::Node<T>& node) {
    auto gx = parent_grad(node, 0);
    for (auto& g : gx) g += node.grad[0];
  });
}

template <typename T>
Tensor<T> l1_loss(const Tensor<T>& prediction, const Tensor<T>& target) {
  require_same_shape("l1_loss", prediction, target);
  const auto p = prediction.data(), t = target.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(static_cast<double>(p[i]) - t[i]);
  const double n = static_cast<double>(p.size());
  return Tensor<T>::from_op(
      Shape{1}, std::vector<T>{static_cast<T>(acc / n)}, {prediction, target},
      [n](detail::Node<T>& node) {
        const auto& xp = node.parents[0]->data;
        const auto& xt = node.parents[1]->data;
        const T step = static_cast<T>(node.grad[0] / n);
        auto gp = parent_grad(node, 0);
        auto gt = parent_grad(node, 1);
        for (std::size_t i = 0; i < xp.size(); ++i) {
          const T d = xp[i] - xt[i];
          const T s = d > T{0} ? step : (d < T{0} ? -step : T{0});
          if (!gp.empty()) gp[i] += s;
          if (!gt.empty()) gt[i] -= s;
        }
      });
}

template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw UsageError("concat_channels: no inputs");
  for (const auto& p : parts) require_rank4("concat_channels", p, "part");
  const std::size_t n = parts[0].dim(0), h = parts[0].dim(2), w = parts[0].dim(3);
  std::size_t channels = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    for (std::size_t axis : {0u, 2u, 3u}) {
      if (p.dim(axis) != parts[0].dim(axis)) {
        throw DimensionError("concat_channels: axis " + std::to_string(axis) + " differs (" +
                             std::to_string(p.dim(axis)) + " vs " +
                             std::to_string(parts[0].dim(axis)) + ")");
      }
    }
    offsets.push_back(channels);
    channels += p.dim(1);
  }
  const std::size_t plane = h * w;
  std::vector<T> out(n * channels * plane);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto src = parts[k].data();
    const std::size_t c = parts[k].dim(1);
    for (std::size_t b = 0; b < n; ++b)
      std::copy_n(src.data() + b * c * plane, c * plane,
                  out.data() + (b * channels + offsets[k]) * plane);
  }
  std::vector<Tensor<T>> inputs(parts.begin(), parts.end());
  return Tensor<T>::from_op(
      Shape{n, channels, h, w}, std::move(out), std::move(inputs),
      [n, channels, plane, offsets](detail::Node<T>& node) {
        for (std::size_t k = 0; k < node.parents.size(); ++k) {
          auto gp = parent_grad(node, k);
          if (gp.empty()) continue;
          const std::size_t c = node.parents[k]->shape[1];
          for (std::size_t b = 0; b < n; ++b) {
            const T* src = node.grad.data() + (b * channels + offsets[k]) * plane;
            T* dst = gp.data() + b * c * plane;
            for (std::size_t i = 0; i < c * plane; ++i) dst[i] += src[i];
          }
        }
      });
}

template <typename T>
Tensor<T> split_patches(const Tensor<T>& input, std::size_t rows, std::size_t cols) {
  require_rank4("split_patches", input, "input");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (rows == 0 || cols == 0 || h % rows != 0 || w % cols != 0) {
    throw DimensionError("split_patches: " + shape_string(input.shape()) +
                         " does not tile into a " + std::to_string(rows) + "x" +
                         std::to_string(cols) + " grid");
  }
  const std::size_t ph = h / rows, pw = w / cols;
  // Visits every (patch, channel, patch row) once; `fn(src_offset, dst_offset)`.
  auto walk = [=](auto&& fn) {
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t q = 0; q < cols; ++q) {
          const std::size_t patch = (b * rows + r) * cols + q;
          for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t y = 0; y < ph; ++y)
              fn(((b * c + ch) * h + r * ph + y) * w + q * pw, ((patch * c + ch) * ph + y) * pw);
        }
  };
  std::vector<T> out(input.numel());
  const auto src = input.data();
  walk([&](std::size_t s, std::size_t d) { std::copy_n(src.data() + s, pw, out.data() + d); });
  return Tensor<T>::from_op(Shape{n * rows * cols, c, ph, pw}, std::move(out), {input},
                            [walk, pw](detail::Node<T>& node) {
                              auto gx = parent_grad(node, 0);
                              walk([&](std::size_t s, std::size_t d) {
                                for (std::size_t i = 0; i < pw; ++i) gx[s + i] += node.grad[d + i];
                              });
                            });
}

template <typename T>
Tensor<T> tile_patches(const Tensor<T>& patches, std::span<const GridPos> positions,
                       std::size_t rows, std::size_t cols) {
  require_rank4("tile_patches", patches, "patches");
  const std::size_t count = patches.dim(0), c = patches.dim(1);
  const std::size_t ph = patches.dim(2), pw = patches.dim(3);
  if (count != rows * cols || positions.size() != count) {
    throw DimensionError("tile_patches: " + std::to_string(count) + " patches and " +
                         std::to_string(positions.size()) + " positions for a " +
                         std::to_string(rows) + "x" + std::to_string(cols) + " grid");
  }
  std::vector<char> seen(count, 0);
  for (const auto& pos : positions) {
    if (pos.row >= rows || pos.col >= cols) {
      throw DimensionError("tile_patches: position (" + std::to_string(pos.row) + "," +
                           std::to_string(pos.col) + ") outside the grid");
    }
    auto& flag = seen[pos.row * cols + pos.col];
    if (flag) {
      throw DimensionError("tile_patches: duplicate position (" + std::to_string(pos.row) + "," +
                           std::to_string(pos.col) + ")");
    }
    flag = 1;
  }
  const std::size_t h = rows * ph, w = cols * pw;
  std::vector<GridPos> pos_copy(positions.begin(), positions.end());
  auto walk = [=](auto&& fn) {
    for (std::size_t i = 0; i < count; ++i)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < ph; ++y)
          fn(((i * c + ch) * ph + y) * pw,
             (ch * h + pos_copy[i].row * ph + y) * w + pos_copy[i].col * pw);
  };
  std::vector<T> out(c * h * w);
  const auto src = patches.data();
  walk([&](std::size_t s, std::size_t d) { std::copy_n(src.data() + s, pw, out.data() + d); });
  return Tensor<T>::from_op(Shape{1, c, h, w}, std::move(out), {patches},
                            [walk, pw](detail::Node<T>& node) {
                              auto gx = parent_grad(node, 0);
                              walk([&](std::size_t s, std::size_t d) {
                                for (std::size_t i = 0; i < pw; ++i) gx[s + i] += node.grad[d + i];
                              });
                            });
}

template <typename T>
Tensor<T> crop(const Tensor<T>& input, std::size_t height, std::size_t width) {
  require_rank4("crop", input, "input");
  const std::size_t planes = input.dim(0) * input.dim(1);
  const std::size_t h = input.dim(2), w = input.dim(3);
  if (height == 0 || width == 0 || height > h || width > w) {
    throw DimensionError("crop: " + std::to_string(height) + "x" + std::to_string(width) +
                         " does not fit in " + shape_string(input.shape()));
  }
  if (height == h && width == w) return input;
  std::vector<T> out(planes * height * width);
  const auto src = input.data();
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < height; ++y)
      std::copy_n(src.data() + (p * h + y) * w, width, out.data() + (p * height + y) * width);
  return Tensor<T>::from_op(Shape{input.dim(0), input.dim(1), height, width}, std::move(out),
                            {input}, [planes, h, w, height, width](detail::Node<T>& node) {
                              auto gx = parent_grad(node, 0);
                              for (std::size_t p = 0; p < planes; ++p)
                                for (std::size_t y = 0; y < height; ++y)
                                  for (std::size_t x = 0; x < width; ++x)
                                    gx[(p * h + y) * w + x] +=
                                        node.grad[(p * height + y) * width + x];
                            });
}

#define PD_INSTANTIATE_OPS(T)                                                                   \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,           \
                               std::size_t, std::size_t);                                       \
  template Tensor<T> upsample2x<T>(const Tensor<T>&);                                          \
  template Tensor<T> sigmoid<T>(const Tensor<T>&);                                             \
  template Tensor<T> relu<T>(const Tensor<T>&);                                                \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                            \
  template Tensor<T> sum<T>(const Tensor<T>&);                                                 \
  template Tensor<T> l1_loss<T>(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> concat_channels<T>(std::span<const Tensor<T>>);                           \
  template Tensor<T> split_patches<T>(const Tensor<T>&, std::size_t, std::size_t);             \
  template Tensor<T> tile_patches<T>(const Tensor<T>&, std::span<const GridPos>, std::size_t,  \
                                     std::size_t);                                              \
  template Tensor<T> crop<T>(const Tensor<T>&, std::size_t, std::size_t);

PD_INSTANTIATE_OPS(float)
PD_INSTANTIATE_OPS(double)

#undef PD_INSTANTIATE_OPS

}  // namespace patchdenoise
