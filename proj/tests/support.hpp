#pragma once

// Test-side helpers: seeded generators for property tests and independent
// oracles that deliberately avoid the library's own kernels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "patchdenoise/image.hpp"
#include "patchdenoise/ops.hpp"
#include "patchdenoise/tensor.hpp"

namespace pdtest {

using patchdenoise::Image2D;
using patchdenoise::Shape;
using patchdenoise::Tensor;

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  std::size_t size(std::size_t lo, std::size_t hi) {  // inclusive
    return std::uniform_int_distribution<std::size_t>(lo, hi)(engine_);
  }
  bool coin() { return size(0, 1) == 1; }

  template <typename T = double>
  Tensor<T> tensor(const Shape& shape, double lo = -1.0, double hi = 1.0, bool rg = false) {
    std::vector<T> v(patchdenoise::shape_numel(shape));
    for (auto& x : v) x = static_cast<T>(uniform(lo, hi));
    return Tensor<T>(shape, std::move(v), rg);
  }

  Image2D image(std::size_t h, std::size_t w, double lo = 0.0, double hi = 1.0) {
    Image2D img(h, w);
    for (auto& v : img.values) v = uniform(lo, hi);
    return img;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

// Central finite differences over every entry of every input; compares with
// the gradients left by one backward pass. Relative error uses a
// denominator of max(|analytic|, |numeric|, 1e-8).
struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t entries = 0;
};

inline GradCheck grad_check(std::vector<Tensor<double>>& inputs,
                            const std::function<Tensor<double>()>& loss_fn, double h = 1e-5) {
  for (auto& t : inputs) t.zero_grad();
  auto loss = loss_fn();
  patchdenoise::backward(loss);
  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs) {
    if (t.has_grad()) {
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    } else {
      analytic.emplace_back(t.numel(), 0.0);
    }
  }
  GradCheck out;
  patchdenoise::NoGradGuard guard;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto data = inputs[i].mutable_data();
    for (std::size_t k = 0; k < data.size(); ++k) {
      const double orig = data[k];
      data[k] = orig + h;
      const double up = loss_fn().item();
      data[k] = orig - h;
      const double down = loss_fn().item();
      data[k] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[i][k];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      out.max_rel_error = std::max(out.max_rel_error, rel);
      ++out.entries;
    }
  }
  return out;
}

// A random differentiable graph over inputs no larger than 2x2x8x8: a chain
// of conv2d / upsample2x / sigmoid / relu ending in l1_loss against a fixed
// target. The target sits 0.1 to 0.2 above the prediction at the evaluation
// point: far from the l1 kink, while a small loss value keeps roundoff out of
// the finite differences. Graphs with a relu input within 1e-3 of zero are
// redrawn, since a difference straddling the kink measures nothing.
struct RandomGraph {
  std::vector<Tensor<double>> leaves;  // input first, then per-op parameters
  std::vector<std::string> ops;
  std::function<Tensor<double>()> loss;
};

inline RandomGraph random_graph(Gen& g) {
  using namespace patchdenoise;
  RandomGraph rg;
  const std::size_t n = g.size(1, 2), c = g.size(1, 2);
  const std::size_t h = g.size(3, 8), w = g.size(3, 8);
  rg.leaves.push_back(g.tensor({n, c, h, w}, -1.0, 1.0, true));

  struct Step {
    std::string kind;
    std::size_t weight = 0, bias = 0, stride = 1, padding = 0;
  };
  std::vector<Step> steps;
  std::size_t ch = c, cur_h = h, cur_w = w;
  const std::size_t depth = g.size(2, 4);
  bool has_conv = false;
  for (std::size_t d = 0; d < depth; ++d) {
    const std::size_t pick = (d == 0 && !has_conv) ? 0 : g.size(0, 3);
    if (pick == 0 || (pick == 1 && cur_h * 2 > 16)) {
      const std::size_t k = g.coin() ? 3 : 1;
      const std::size_t out = g.size(1, 2);
      const std::size_t stride = (cur_h >= 4 && cur_w >= 4 && g.coin()) ? 2 : 1;
      Step s{"conv2d"};
      s.stride = stride;
      s.padding = k / 2;
      s.weight = rg.leaves.size();
      rg.leaves.push_back(g.tensor({out, ch, k, k}, -0.8, 0.8, true));
      s.bias = rg.leaves.size();
      rg.leaves.push_back(g.tensor({out}, -0.2, 0.2, true));
      steps.push_back(s);
      ch = out;
      cur_h = (cur_h + 2 * s.padding - k) / stride + 1;
      cur_w = (cur_w + 2 * s.padding - k) / stride + 1;
      has_conv = true;
    } else if (pick == 1) {
      steps.push_back({"upsample2x"});
      cur_h *= 2;
      cur_w *= 2;
    } else if (pick == 2) {
      steps.push_back({"sigmoid"});
    } else {
      steps.push_back({"relu"});
    }
  }
  for (const auto& s : steps) rg.ops.push_back(s.kind);
  auto leaves = rg.leaves;
  auto forward = [leaves, steps](double* relu_margin = nullptr) {
    Tensor<double> x = leaves[0];
    for (const auto& s : steps) {
      if (s.kind == "conv2d") {
        x = conv2d(x, leaves[s.weight], leaves[s.bias], s.stride, s.padding);
      } else if (s.kind == "upsample2x") {
        x = upsample2x(x);
      } else if (s.kind == "sigmoid") {
        x = sigmoid(x);
      } else {
        if (relu_margin)
          for (double v : x.data()) *relu_margin = std::min(*relu_margin, std::abs(v));
        x = relu(x);
      }
    }
    return x;
  };
  Tensor<double> target;
  {
    NoGradGuard guard;
    double margin = 1.0;
    const auto y = forward(&margin);
    if (margin < 1e-3) return random_graph(g);
    std::vector<double> t(y.data().begin(), y.data().end());
    for (auto& v : t) v += g.uniform(0.1, 0.2);
    target = Tensor<double>(y.shape(), std::move(t));
  }
  rg.loss = [forward, target]() { return l1_loss(forward(nullptr), target); };
  return rg;
}

// Direct nested-loop convolution, zero padding, NCHW / OIKK.
inline std::vector<double> conv_oracle(const Tensor<double>& x, const Tensor<double>& w,
                                       const std::vector<double>& bias, std::size_t stride,
                                       std::size_t pad) {
  const std::size_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t co = w.dim(0), k = w.dim(2);
  const std::size_t oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
  std::vector<double> out(n * co * oh * ow, 0.0);
  const auto xd = x.data();
  const auto wdat = w.data();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx) {
          double acc = bias.empty() ? 0.0 : bias[o];
          for (std::size_t c = 0; c < ci; ++c)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long iy = static_cast<long>(y * stride + ky) - static_cast<long>(pad);
                const long ix = static_cast<long>(xx * stride + kx) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(wd))
                  continue;
                acc += xd[((b * ci + c) * h + static_cast<std::size_t>(iy)) * wd +
                          static_cast<std::size_t>(ix)] *
                       wdat[((o * ci + c) * k + ky) * k + kx];
              }
          out[((b * co + o) * oh + y) * ow + xx] = acc;
        }
  return out;
}

// Bilinear 2x upsampling of one plane with half-pixel centres, written as a
// weighted sum over the four nearest source samples.
inline std::vector<double> upsample_oracle(const std::vector<double>& in, std::size_t h,
                                           std::size_t w) {
  std::vector<double> out(4 * h * w);
  auto sample = [&](double sy, double sx) {
    sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
    sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
    const auto y0 = static_cast<std::size_t>(std::floor(sy));
    const auto x0 = static_cast<std::size_t>(std::floor(sx));
    const std::size_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
    const double fy = sy - static_cast<double>(y0), fx = sx - static_cast<double>(x0);
    return (1 - fy) * ((1 - fx) * in[y0 * w + x0] + fx * in[y0 * w + x1]) +
           fy * ((1 - fx) * in[y1 * w + x0] + fx * in[y1 * w + x1]);
  };
  for (std::size_t y = 0; y < 2 * h; ++y)
    for (std::size_t x = 0; x < 2 * w; ++x)
      out[y * 2 * w + x] = sample((static_cast<double>(y) + 0.5) / 2.0 - 0.5,
                                  (static_cast<double>(x) + 0.5) / 2.0 - 0.5);
  return out;
}

// Scalar SSIM: for every fully-contained 11x11 window, weighted statistics
// computed directly from the 2-D Gaussian weights.
inline double ssim_oracle(const Image2D& a, const Image2D& b) {
  constexpr int kWin = 11;
  constexpr double sigma = 1.5, c1 = 1e-4, c2 = 9e-4;
  double wts[kWin][kWin];
  double total = 0.0;
  for (int i = 0; i < kWin; ++i)
    for (int j = 0; j < kWin; ++j) {
      const double dy = i - 5, dx = j - 5;
      wts[i][j] = std::exp(-(dy * dy + dx * dx) / (2 * sigma * sigma));
      total += wts[i][j];
    }
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t y = 0; y + kWin <= a.height; ++y)
    for (std::size_t x = 0; x + kWin <= a.width; ++x) {
      double mx = 0, my = 0;
      for (int i = 0; i < kWin; ++i)
        for (int j = 0; j < kWin; ++j) {
          const double wt = wts[i][j] / total;
          mx += wt * a.at(y + i, x + j);
          my += wt * b.at(y + i, x + j);
        }
      double vx = 0, vy = 0, cxy = 0;
      for (int i = 0; i < kWin; ++i)
        for (int j = 0; j < kWin; ++j) {
          const double wt = wts[i][j] / total;
          const double dx = a.at(y + i, x + j) - mx, dy = b.at(y + i, x + j) - my;
          vx += wt * dx * dx;
          vy += wt * dy * dy;
          cxy += wt * dx * dy;
        }
      acc += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  return acc / static_cast<double>(count);
}

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("patchdenoise_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

}  // namespace pdtest
