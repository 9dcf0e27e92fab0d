#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>

#include "patchdenoise/error.hpp"
#include "patchdenoise/metrics.hpp"
#include "patchdenoise/model.hpp"
#include "support.hpp"

using namespace patchdenoise;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.scales = {{16, 3, 2, 2, 1}, {8, 7, 2, 2, 1}, {1, 11, 2, 2, 1}};
  c.fusion_channels = 2;
  c.pcm_channels = 2;
  c.seed = 5;
  return c;
}

template <typename T>
void zero_all(ModelWeights<T>& w) {
  for (auto& p : w.params()) std::fill(p.mutable_data().begin(), p.mutable_data().end(), T{0});
}

template <typename T>
void zero_prefix(ModelWeights<T>& w, const std::string& prefix) {
  for (std::size_t i = 0; i < w.names().size(); ++i)
    if (w.names()[i].rfind(prefix, 0) == 0) {
      auto d = w.params()[i].mutable_data();
      std::fill(d.begin(), d.end(), T{0});
    }
}

ModelConfig doubled(ModelConfig c) {
  for (auto& s : c.scales) s.latent_channels *= 2;
  c.fusion_channels *= 2;
  c.pcm_channels *= 2;
  return c;
}

}  // namespace

TEST(Inventory, DefaultTopology) {
  std::map<std::string, int> per_kind;
  std::vector<int> pfe_depths(3, 0);
  for (const auto& l : layer_inventory(ModelConfig::standard())) {
    if (l.module == "pfe") ++pfe_depths[l.scale_index];
    else if (l.name.rfind("pfm.proj", 0) == 0) ++per_kind["proj"];
    else if (l.name.rfind("pfm.gate", 0) == 0) ++per_kind["gate"];
    else if (l.module == "pcm") ++per_kind["pcm"];
    else ++per_kind["other"];
  }
  EXPECT_EQ(pfe_depths, (std::vector<int>{5, 4, 3}));
  EXPECT_EQ(per_kind["proj"], 3);
  EXPECT_EQ(per_kind["gate"], 2);
  EXPECT_EQ(per_kind["pcm"], 3);
  EXPECT_EQ(per_kind.count("other"), 0u);
}

TEST(Inventory, KernelsStridesAndWidths) {
  const auto layers = layer_inventory(ModelConfig::standard());
  std::vector<std::size_t> first_kernels;
  for (const auto& l : layers) {
    if (l.module != "pfe") continue;
    if (l.layer_index == 0) {
      first_kernels.push_back(l.kernel);
      EXPECT_EQ(l.in_channels, 1u);
    }
    EXPECT_EQ(l.stride, l.layer_index == 1 ? 2u : 1u) << l.name;
  }
  EXPECT_EQ(first_kernels, (std::vector<std::size_t>{3, 7, 11}));
  EXPECT_EQ(layers.back().out_channels, 1u);
}

TEST(Config, ValidationErrors) {
  auto c = ModelConfig::toy();
  c.scales[0].initial_kernel = 4;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig::toy();
  c.scales[1].depth = 1;
  c.scales[1].downsample_layer_index = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig::toy();
  c.scales[2].downsample_layer_index = c.scales[2].depth;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig::toy();
  std::swap(c.scales[0], c.scales[1]);
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(build_model<float>(c), ConfigError);
  EXPECT_THROW(fusion_mode_from_string("sum"), ConfigError);
}

TEST(BuildModel, DeterministicAndWithinInitBounds) {
  auto c = ModelConfig::toy();
  c.seed = 17;
  const auto a = build_model<float>(c), b = build_model<float>(c);
  ASSERT_EQ(a.names(), b.names());
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    const auto da = a.params()[i].data(), db = b.params()[i].data();
    ASSERT_TRUE(std::equal(da.begin(), da.end(), db.begin())) << a.names()[i];
  }
  c.seed = 18;
  const auto other = build_model<float>(c);
  EXPECT_FALSE(std::equal(a.params()[0].data().begin(), a.params()[0].data().end(),
                          other.params()[0].data().begin()));
  for (const auto& l : layer_inventory(c)) {
    const double bound = std::sqrt(6.0 / static_cast<double>(l.in_channels * l.kernel * l.kernel));
    for (float v : a.weight(l.name).data()) ASSERT_LE(std::abs(v), bound);
    for (float v : a.bias(l.name).data()) ASSERT_EQ(v, 0.0f);
  }
}

TEST(CountParams, SingleConvIsEighty) {
  ModelConfig c;
  c.scales = {{1, 3, 2, 8, 1}};
  const auto w = build_model<double>(c);
  EXPECT_EQ(w.weight("pfe0.conv0").numel() + w.bias("pfe0.conv0").numel(), 80u);
  EXPECT_EQ(count_params_by_module(c).pfe, 80u + 9 * 8 * 8 + 8);
}

TEST(CountParams, MatchesMaterializedWeights) {
  for (const auto& c : {ModelConfig::standard(), ModelConfig::toy(), tiny_config(),
                        doubled(ModelConfig::toy())}) {
    EXPECT_EQ(count_params(c), build_model<float>(c).parameter_count());
    auto concat = c;
    concat.fusion_mode = FusionMode::concat;
    EXPECT_EQ(count_params(concat), build_model<float>(concat).parameter_count());
  }
}

TEST(CountParams, DefaultWithinBudget) {
  const std::size_t n = count_params(ModelConfig::standard());
  EXPECT_GE(n, 20000u);
  EXPECT_LT(n, 300000u);
  std::cout << "default config params: " << n << "\n";
}

TEST(CountParams, DoublingWidthsScalesBetweenTwoAndFour) {
  pdtest::Gen g(61);
  for (int trial = 0; trial < 30; ++trial) {
    ModelConfig c;
    const std::size_t n = g.size(1, 3);
    std::size_t div = 32;
    for (std::size_t s = 0; s < n; ++s) {
      div = s + 1 == n ? 1 : div / 2;
      const std::size_t depth = g.size(2, 5);
      c.scales.push_back({div, 2 * g.size(0, 5) + 1, depth, g.size(1, 20), g.size(0, depth - 1)});
    }
    c.fusion_channels = g.size(1, 20);
    c.pcm_channels = g.size(1, 20);
    c.fusion_mode = g.coin() ? FusionMode::gated : FusionMode::concat;
    const double ratio = static_cast<double>(count_params(doubled(c))) / count_params(c);
    ASSERT_GT(ratio, 2.0);
    ASSERT_LE(ratio, 4.0);
  }
}

TEST(CountFlops, SingleConvFormula) {
  const LayerSpec l{"c", "pfe", 1, 8, 3, 1};
  EXPECT_EQ(conv_flops(l, 32, 32), 147456.0);
}

TEST(CountFlops, ScalesByFourWhenBothDimsDouble) {
  for (const auto& c : {ModelConfig::standard(), ModelConfig::toy(), tiny_config()}) {
    EXPECT_DOUBLE_EQ(count_flops(c, 256, 256), 4.0 * count_flops(c, 128, 128));
    EXPECT_DOUBLE_EQ(count_flops(c, 512, 512), 4.0 * count_flops(c, 256, 256));
  }
}

TEST(CountFlops, DefaultAt512IsReported) {
  const double g = count_flops(ModelConfig::standard(), 512, 512);
  EXPECT_GT(g, 0.0);
  std::cout << "default config at 512x512: " << g << " GFLOPs (reference figure 17), energy "
            << energy_per_inference(g) << "\n";
}

TEST(Pfe, HalvesPatchResolution) {
  const auto w = build_model<double>(ModelConfig::standard());
  pdtest::Gen g(62);
  const auto out = pfe_forward(w, g.tensor({3, 1, 32, 32}), 0, 32);
  EXPECT_EQ(out.shape(), (Shape{3, 16, 16, 16}));
  EXPECT_THROW(pfe_forward(w, g.tensor({3, 1, 16, 16}), 0, 32), DimensionError);
  EXPECT_THROW(pfe_forward(w, g.tensor({3, 2, 32, 32}), 0), DimensionError);
  EXPECT_THROW(pfe_forward(w, g.tensor({1, 1, 8, 8}), 3), UsageError);
}

TEST(Pfe, ZeroWeightsGiveZeroFeatures) {
  auto w = build_model<double>(ModelConfig::toy());
  zero_all(w);
  pdtest::Gen g(63);
  const auto out = pfe_forward(w, g.tensor({2, 1, 16, 16}, -5, 5), 1);
  for (double v : out.data()) ASSERT_EQ(v, 0.0);
}

TEST(Pfe, TwoLayerMatchesHandComposition) {
  ModelConfig c;
  c.scales = {{1, 3, 2, 3, 1}};
  c.fusion_channels = 2;
  c.pcm_channels = 2;
  auto w = build_model<double>(c);
  pdtest::Gen g(64);
  for (auto& p : w.params())
    for (auto& v : p.mutable_data()) v = g.uniform(-1, 1);
  const auto x = g.tensor({1, 1, 4, 4});
  auto bias_of = [&](const std::string& l) {
    const auto d = w.bias(l).data();
    return std::vector<double>(d.begin(), d.end());
  };
  auto h = pdtest::conv_oracle(x, w.weight("pfe0.conv0"), bias_of("pfe0.conv0"), 1, 1);
  for (auto& v : h) v = std::max(v, 0.0);
  const auto expected = pdtest::conv_oracle(Tensor<double>({1, 3, 4, 4}, h), w.weight("pfe0.conv1"),
                                            bias_of("pfe0.conv1"), 2, 1);
  const auto got = pfe_forward(w, x, 0);
  ASSERT_EQ(got.shape(), (Shape{1, 3, 2, 2}));
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(got.data()[i], expected[i], 1e-6);
}

TEST(Pfm, ZeroGateParametersAverage) {
  pdtest::Gen g(65);
  auto w = build_model<double>(ModelConfig::toy());
  auto c2 = ModelConfig::toy();
  c2.scales.pop_back();
  auto w2 = build_model<double>(c2);
  zero_prefix(w2, "pfm.gate");
  const std::size_t f = c2.fusion_channels;
  const Tensor<double> maps[2] = {g.tensor({1, c2.scales[0].latent_channels, 6, 6}),
                                  g.tensor({1, c2.scales[1].latent_channels, 6, 6})};
  const auto fused = pfm_fuse<double>(w2, maps);
  ASSERT_EQ(fused.shape(), (Shape{1, f, 6, 6}));
  const auto a = conv2d(maps[0], w2.weight("pfm.proj0"), w2.bias("pfm.proj0"), 1, 0);
  const auto b = conv2d(maps[1], w2.weight("pfm.proj1"), w2.bias("pfm.proj1"), 1, 0);
  for (std::size_t i = 0; i < fused.numel(); ++i)
    EXPECT_NEAR(fused.data()[i], 0.5 * (a.data()[i] + b.data()[i]), 1e-6);
  (void)w;
}

TEST(Pfm, SingleScaleIsItsProjection) {
  ModelConfig c;
  c.scales = {{1, 3, 2, 4, 1}};
  c.fusion_channels = 3;
  const auto w = build_model<double>(c);
  pdtest::Gen g(66);
  const Tensor<double> maps[1] = {g.tensor({1, 4, 5, 5})};
  const auto fused = pfm_fuse<double>(w, maps);
  const auto proj = conv2d(maps[0], w.weight("pfm.proj0"), w.bias("pfm.proj0"), 1, 0);
  EXPECT_TRUE(std::equal(proj.data().begin(), proj.data().end(), fused.data().begin()));
}

TEST(Pfm, ModesShareOutputShape) {
  auto gated = ModelConfig::toy();
  auto concat = gated;
  concat.fusion_mode = FusionMode::concat;
  pdtest::Gen g(67);
  std::vector<Tensor<double>> maps;
  for (const auto& s : gated.scales) maps.push_back(g.tensor({1, s.latent_channels, 8, 8}));
  const auto a = pfm_fuse<double>(build_model<double>(gated), maps);
  const auto b = pfm_fuse<double>(build_model<double>(concat), maps);
  EXPECT_EQ(a.shape(), b.shape());
  EXPECT_EQ(a.shape(), (Shape{1, gated.fusion_channels, 8, 8}));
}

TEST(Pfm, MisalignedMapsAreDimensionErrors) {
  const auto c = ModelConfig::toy();
  const auto w = build_model<double>(c);
  pdtest::Gen g(68);
  std::vector<Tensor<double>> maps;
  for (const auto& s : c.scales) maps.push_back(g.tensor({1, s.latent_channels, 8, 8}));
  maps[1] = g.tensor({1, c.scales[1].latent_channels, 8, 6});
  EXPECT_THROW(pfm_fuse<double>(w, maps), DimensionError);
  maps.pop_back();
  EXPECT_THROW(pfm_fuse<double>(w, maps), DimensionError);
}

TEST(Pcm, ZeroWeightsAndShape) {
  auto w = build_model<double>(ModelConfig::toy());
  pdtest::Gen g(69);
  const auto fused = g.tensor({1, ModelConfig::toy().fusion_channels, 7, 9});
  EXPECT_EQ(pcm_forward(w, fused).shape(), (Shape{1, 1, 14, 18}));
  zero_all(w);
  const auto out = pcm_forward(w, fused);
  for (double v : out.data()) ASSERT_EQ(v, 0.0);
}

TEST(Denoise, ShapesAndClampContract) {
  pdtest::Gen g(70);
  const auto w = build_model<float>(ModelConfig::toy());
  for (std::size_t n : {100u, 128u, 512u}) {
    const auto out = denoise_image(w, g.image(n, n));
    ASSERT_EQ(out.height, n);
    ASSERT_EQ(out.width, n);
    ASSERT_EQ(out.range, RangeTag::normalized01);
    for (double v : out.values) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
  }
  const auto rect = denoise_image(w, g.image(40, 72));
  EXPECT_EQ(rect.height, 40u);
  EXPECT_EQ(rect.width, 72u);
}

TEST(Denoise, ZeroModelGivesZeroImage) {
  auto w = build_model<float>(ModelConfig::toy());
  zero_all(w);
  pdtest::Gen g(71);
  for (double v : denoise_image(w, g.image(64, 64)).values) ASSERT_EQ(v, 0.0);
}

TEST(Denoise, RejectsSmallOrUnnormalizedInput) {
  const auto w = build_model<float>(ModelConfig::toy());
  EXPECT_THROW(denoise_image(w, Image2D(31, 64)), UsageError);
  EXPECT_THROW(denoise_image(w, Image2D(64, 64, 0.0, RangeTag::hounsfield)), UsageError);
}

TEST(Denoise, Deterministic) {
  pdtest::Gen g(72);
  const auto img = g.image(64, 64);
  const auto w = build_model<float>(ModelConfig::toy());
  EXPECT_EQ(denoise_image(w, img).values, denoise_image(w, img).values);
}

TEST(ModelGradient, FullModelMatchesFiniteDifferences) {
  auto w = build_model<double>(tiny_config());
  pdtest::Gen g(73);
  auto x = g.tensor({1, 1, 32, 32}, 0.0, 1.0, true);
  // Every residual sits at exactly -1, far from the L1 kink, while keeping the
  // loss small enough that finite-difference cancellation stays negligible.
  Tensor<double> target;
  {
    NoGradGuard no_grad;
    target = add(model_forward(w, x), Tensor<double>({1, 1, 32, 32}, std::vector<double>(1024, 1.0)));
  }
  std::vector<Tensor<double>> inputs = w.params();
  inputs.push_back(x);
  const auto check =
      pdtest::grad_check(inputs, [&] { return l1_loss(model_forward(w, x), target); });
  EXPECT_EQ(check.entries, w.parameter_count() + 1024);
  EXPECT_LT(check.max_rel_error, 1e-3);
}
