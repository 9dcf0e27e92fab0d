// Parallel kernels against their serial references.
//
// Each benchmark takes a shape index; the shapes are layers the default
// network runs on a 128x128 slice.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "patchdenoise/kernels.hpp"

using namespace patchdenoise;

namespace {

const ConvGeometry kShapes[] = {
    // /16 scale: 256 patches of 8x8, 3x3 16->16
    {256, 16, 8, 8, 16, 3, 1, 1},
    // /8 scale first layer: 64 patches of 16x16, 7x7 1->24
    {64, 1, 16, 16, 24, 7, 1, 3},
    // /1 scale first layer: one 128x128 image, 11x11 1->32
    {1, 1, 128, 128, 32, 11, 1, 5},
    // stride-2 layer at full resolution, 3x3 32->32
    {1, 32, 128, 128, 32, 3, 2, 1},
    // consolidator after upsampling, 3x3 16->16
    {1, 16, 128, 128, 16, 3, 1, 1},
};

std::vector<float> random_buffer(std::size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

struct ConvBuffers {
  explicit ConvBuffers(const ConvGeometry& g)
      : input(random_buffer(g.batch * g.in_channels * g.in_h * g.in_w, 1)),
        weights(random_buffer(g.out_channels * g.col_rows(), 2)),
        bias(random_buffer(g.out_channels, 3)),
        out(g.batch * g.out_channels * g.out_h() * g.out_w()),
        out_grad(random_buffer(out.size(), 4)),
        input_grad(input.size()),
        weight_grad(weights.size()),
        bias_grad(bias.size()) {}

  std::vector<float> input, weights, bias, out, out_grad, input_grad, weight_grad, bias_grad;
  std::vector<float> col;
};

void set_conv_counters(benchmark::State& state, const ConvGeometry& g) {
  const double flops = 2.0 * static_cast<double>(g.out_channels * g.col_rows() * g.col_cols());
  state.counters["GFLOP/s"] =
      benchmark::Counter(flops * static_cast<double>(state.iterations()) / 1e9,
                         benchmark::Counter::kIsRate);
}

void BM_ConvForward_Parallel(benchmark::State& state) {
  const auto& g = kShapes[state.range(0)];
  ConvBuffers b(g);
  for (auto _ : state) {
    kernels::conv2d_forward<float>(g, b.input, b.weights, b.bias, b.out, &b.col);
    benchmark::DoNotOptimize(b.out.data());
  }
  set_conv_counters(state, g);
}

void BM_ConvForward_Serial(benchmark::State& state) {
  const auto& g = kShapes[state.range(0)];
  ConvBuffers b(g);
  for (auto _ : state) {
    reference::conv2d_forward<float>(g, b.input, b.weights, b.bias, b.out);
    benchmark::DoNotOptimize(b.out.data());
  }
  set_conv_counters(state, g);
}

void BM_ConvBackward_Parallel(benchmark::State& state) {
  const auto& g = kShapes[state.range(0)];
  ConvBuffers b(g);
  kernels::conv2d_forward<float>(g, b.input, b.weights, b.bias, b.out, &b.col);
  for (auto _ : state) {
    kernels::conv2d_backward<float>(g, b.col, b.weights, b.out_grad, b.input_grad, b.weight_grad,
                                    b.bias_grad);
    benchmark::DoNotOptimize(b.input_grad.data());
  }
  set_conv_counters(state, g);
}

void BM_ConvBackward_Serial(benchmark::State& state) {
  const auto& g = kShapes[state.range(0)];
  ConvBuffers b(g);
  for (auto _ : state) {
    reference::conv2d_backward<float>(g, b.input, b.weights, b.out_grad, b.input_grad,
                                      b.weight_grad, b.bias_grad);
    benchmark::DoNotOptimize(b.input_grad.data());
  }
  set_conv_counters(state, g);
}

void BM_Upsample_Parallel(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto in = random_buffer(16 * n * n, 5);
  std::vector<float> out(4 * in.size());
  for (auto _ : state) {
    kernels::upsample2x_forward<float>(16, n, n, in, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(out.size()));
}

void BM_Upsample_Serial(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto in = random_buffer(16 * n * n, 5);
  std::vector<float> out(4 * in.size());
  for (auto _ : state) {
    reference::upsample2x_forward<float>(16, n, n, in, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(out.size()));
}

}  // namespace

BENCHMARK(BM_ConvForward_Parallel)->DenseRange(0, 4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvForward_Serial)->DenseRange(0, 4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackward_Parallel)->DenseRange(0, 4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackward_Serial)->DenseRange(0, 4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Upsample_Parallel)->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Upsample_Serial)->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond);
BENCHMARK_MAIN();
