#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "patchdenoise/image.hpp"
#include "patchdenoise/patch.hpp"
#include "patchdenoise/tensor.hpp"

namespace patchdenoise {

enum class FusionMode { gated, concat };

std::string to_string(FusionMode mode);
FusionMode fusion_mode_from_string(const std::string& name);

/// Patch feature extractor hyperparameters for one patch scale.
struct ScaleConfig {
  std::size_t divisor = 1;
  std::size_t initial_kernel = 3;
  std::size_t depth = 2;  // conv layers in the extractor
  std::size_t latent_channels = 8;
  std::size_t downsample_layer_index = 1;  // the single stride-2 layer

  friend bool operator==(const ScaleConfig&, const ScaleConfig&) = default;
};

struct ModelConfig {
  std::vector<ScaleConfig> scales;  // small patches first (descending divisor)
  std::size_t fusion_channels = 32;
  FusionMode fusion_mode = FusionMode::gated;
  std::size_t pcm_channels = 16;
  std::uint64_t seed = 0;

  /// 3/5/16, 7/4/24, 11/3/32 (kernel/depth/width) for divisors 16/8/1,
  /// fusion width 32, consolidator width 16.
  static ModelConfig standard();
  /// Narrow variant used for desk-scale training runs.
  static ModelConfig toy();

  std::vector<std::size_t> divisors() const;
  /// Copy with the per-scale divisors replaced (same kernels/depths/widths).
  ModelConfig with_divisors(const std::vector<std::size_t>& divisors) const;
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// One convolution of the network, in construction order.
struct LayerSpec {
  std::string name;
  std::string module;  // "pfe", "pfm" or "pcm"
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t scale_index = 0;  // extractor layers only
  std::size_t layer_index = 0;  // extractor layers only
};

std::vector<LayerSpec> layer_inventory(const ModelConfig& config);

template <typename T>
class ModelWeights {
 public:
  ModelWeights() = default;
  explicit ModelWeights(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  const std::vector<std::string>& names() const { return names_; }
  std::vector<Tensor<T>>& params() { return params_; }
  const std::vector<Tensor<T>>& params() const { return params_; }

  const Tensor<T>& get(const std::string& name) const;
  const Tensor<T>& weight(const std::string& layer) const { return get(layer + ".weight"); }
  const Tensor<T>& bias(const std::string& layer) const { return get(layer + ".bias"); }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  void add(std::string name, Tensor<T> tensor);
  std::size_t parameter_count() const;
  void zero_grad();

  /// Deep copy converted to another scalar type.
  template <typename U>
  ModelWeights<U> cast() const {
    ModelWeights<U> out(config_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const auto d = params_[i].data();
      out.add(names_[i], Tensor<U>(params_[i].shape(), std::vector<U>(d.begin(), d.end()),
                                   params_[i].requires_grad()));
    }
    return out;
  }

  ModelWeights clone() const { return cast<T>(); }

 private:
  ModelConfig config_;
  std::vector<std::string> names_;
  std::vector<Tensor<T>> params_;
  std::map<std::string, std::size_t> index_;
};

/// Weights drawn uniformly in +-sqrt(6 / fan_in) from config.seed, biases 0.
template <typename T>
ModelWeights<T> build_model(const ModelConfig& config);

/// Patch feature extractor for one scale: N x 1 x P x P -> N x C x P/2 x P/2.
/// `expected_patch`, when non-zero, is checked against P.
template <typename T>
Tensor<T> pfe_forward(const ModelWeights<T>& weights, const Tensor<T>& patch_batch,
                      std::size_t scale_index, std::size_t expected_patch = 0);

/// Fuses spatially aligned per-scale maps (1 x C_s x h x w each, small
/// scale first) into one 1 x F x h x w representation.
template <typename T>
Tensor<T> pfm_fuse(const ModelWeights<T>& weights, std::span<const Tensor<T>> tiled_maps);

/// Consolidator head: 1 x F x h x w -> 1 x 1 x 2h x 2w, unclamped.
template <typename T>
Tensor<T> pcm_forward(const ModelWeights<T>& weights, const Tensor<T>& fused);

/// Full network on a 1 x 1 x H x W input; output is unclamped and H x W.
template <typename T>
Tensor<T> model_forward(const ModelWeights<T>& weights, const Tensor<T>& image);

/// Inference: model_forward without graph recording, clamped to [0, 1].
template <typename T>
Image2D denoise_image(const ModelWeights<T>& weights, const Image2D& img);

/// Patch plan the network uses for an H x W input. Padding goes to a
/// multiple of twice the largest divisor so every patch has an even side.
PatchPlan model_plan(const ModelConfig& config, std::size_t h, std::size_t w);

std::size_t count_params(const ModelConfig& config);

struct ParamBreakdown {
  std::size_t pfe = 0;
  std::size_t pfm = 0;
  std::size_t pcm = 0;
  std::size_t total() const { return pfe + pfm + pcm; }
};
ParamBreakdown count_params_by_module(const ModelConfig& config);

/// 2 * K^2 * Cin * Cout * out_h * out_w (FLOPs, not GFLOPs).
double conv_flops(const LayerSpec& layer, std::size_t out_h, std::size_t out_w);

/// Inference cost in GFLOPs for an h x w input: 2 FLOPs per multiply-add
/// over every convolution (per patch, times the patch count), plus 8 FLOPs
/// per upsampled output value.
double count_flops(const ModelConfig& config, std::size_t h, std::size_t w);

}  // namespace patchdenoise
