#include "patchdenoise/model.hpp"

#include <algorithm>
#include <cmath>

#include "patchdenoise/error.hpp"
#include "patchdenoise/ops.hpp"
#include "patchdenoise/random.hpp"

namespace patchdenoise {

std::string to_string(FusionMode mode) { return mode == FusionMode::gated ? "gated" : "concat"; }

FusionMode fusion_mode_from_string(const std::string& name) {
  if (name == "gated") return FusionMode::gated;
  if (name == "concat") return FusionMode::concat;
  throw ConfigError("unknown fusion mode '" + name + "' (expected gated or concat)");
}

ModelConfig ModelConfig::standard() {
  ModelConfig c;
  c.scales = {{16, 3, 5, 16, 1}, {8, 7, 4, 24, 1}, {1, 11, 3, 32, 1}};
  c.fusion_channels = 32;
  c.pcm_channels = 16;
  return c;
}

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.scales = {{16, 3, 3, 8, 1}, {8, 7, 3, 12, 1}, {1, 11, 2, 16, 1}};
  c.fusion_channels = 16;
  c.pcm_channels = 16;
  return c;
}

std::vector<std::size_t> ModelConfig::divisors() const {
  std::vector<std::size_t> out;
  for (const auto& s : scales) out.push_back(s.divisor);
  return out;
}

ModelConfig ModelConfig::with_divisors(const std::vector<std::size_t>& divisors) const {
  if (divisors.size() != scales.size()) {
    throw ConfigError("with_divisors: expected " + std::to_string(scales.size()) + " divisors");
  }
  ModelConfig c = *this;
  for (std::size_t i = 0; i < divisors.size(); ++i) c.scales[i].divisor = divisors[i];
  c.validate();
  return c;
}

void ModelConfig::validate() const {
  if (scales.empty()) throw ConfigError("model config needs at least one scale");
  for (std::size_t i = 0; i < scales.size(); ++i) {
    const auto& s = scales[i];
    const std::string where = "scale " + std::to_string(i) + ": ";
    if (s.divisor == 0) throw ConfigError(where + "divisor must be positive");
    if (i > 0 && !(s.divisor < scales[i - 1].divisor)) {
      throw ConfigError(where + "divisors must be strictly descending (small patches first)");
    }
    if (s.initial_kernel == 0 || s.initial_kernel % 2 == 0) {
      throw ConfigError(where + "initial kernel must be odd, got " + std::to_string(s.initial_kernel));
    }
    if (s.depth < 2) throw ConfigError(where + "depth must be at least 2");
    if (s.downsample_layer_index >= s.depth) {
      throw ConfigError(where + "downsample layer index must be below depth");
    }
    if (s.latent_channels == 0) throw ConfigError(where + "latent channels must be positive");
  }
  if (fusion_channels == 0) throw ConfigError("fusion channels must be positive");
  if (pcm_channels == 0) throw ConfigError("consolidator channels must be positive");
}

std::vector<LayerSpec> layer_inventory(const ModelConfig& config) {
  config.validate();
  std::vector<LayerSpec> layers;
  for (std::size_t s = 0; s < config.scales.size(); ++s) {
    const auto& sc = config.scales[s];
    for (std::size_t l = 0; l < sc.depth; ++l) {
      layers.push_back({"pfe" + std::to_string(s) + ".conv" + std::to_string(l), "pfe",
                        l == 0 ? 1 : sc.latent_channels, sc.latent_channels,
                        l == 0 ? sc.initial_kernel : 3,
                        l == sc.downsample_layer_index ? std::size_t{2} : std::size_t{1}, s, l});
    }
  }
  const std::size_t f = config.fusion_channels;
  for (std::size_t s = 0; s < config.scales.size(); ++s) {
    layers.push_back({"pfm.proj" + std::to_string(s), "pfm", config.scales[s].latent_channels, f, 1, 1});
  }
  if (config.fusion_mode == FusionMode::gated) {
    for (std::size_t s = 1; s < config.scales.size(); ++s)
      layers.push_back({"pfm.gate" + std::to_string(s), "pfm", 2 * f, f, 1, 1});
  } else {
    layers.push_back({"pfm.reduce", "pfm", config.scales.size() * f, f, 1, 1});
  }
  const std::size_t p = config.pcm_channels;
  layers.push_back({"pcm.conv0", "pcm", f, p, 3, 1});
  layers.push_back({"pcm.conv1", "pcm", p, p, 3, 1});
  layers.push_back({"pcm.conv2", "pcm", p, 1, 3, 1});
  return layers;
}

template <typename T>
ModelWeights<T>::ModelWeights(ModelConfig config) : config_(std::move(config)) {}

template <typename T>
const Tensor<T>& ModelWeights<T>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("model has no parameter '" + name + "'");
  return params_[it->second];
}

template <typename T>
void ModelWeights<T>::add(std::string name, Tensor<T> tensor) {
  if (index_.count(name)) throw ConfigError("duplicate parameter '" + name + "'");
  index_.emplace(name, params_.size());
  names_.push_back(std::move(name));
  params_.push_back(std::move(tensor));
}

template <typename T>
std::size_t ModelWeights<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.numel();
  return n;
}

template <typename T>
void ModelWeights<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template <typename T>
ModelWeights<T> build_model(const ModelConfig& config) {
  const auto layers = layer_inventory(config);
  ModelWeights<T> weights(config);
  Rng rng(config.seed);
  for (const auto& layer : layers) {
    const std::size_t fan_in = layer.in_channels * layer.kernel * layer.kernel;
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::vector<T> w(layer.out_channels * fan_in);
    for (auto& v : w) v = static_cast<T>(rng.uniform(-bound, bound));
    weights.add(layer.name + ".weight",
                Tensor<T>(Shape{layer.out_channels, layer.in_channels, layer.kernel, layer.kernel},
                          std::move(w), true));
    weights.add(layer.name + ".bias", Tensor<T>(Shape{layer.out_channels}, true));
  }
  return weights;
}

namespace {

template <typename T>
Tensor<T> conv_layer(const ModelWeights<T>& w, const std::string& layer, const Tensor<T>& x,
                     std::size_t stride) {
  const auto& k = w.weight(layer);
  return conv2d(x, k, w.bias(layer), stride, k.dim(2) / 2);
}

}  // namespace

template <typename T>
Tensor<T> pfe_forward(const ModelWeights<T>& weights, const Tensor<T>& patch_batch,
                      std::size_t scale_index, std::size_t expected_patch) {
  const auto& config = weights.config();
  if (scale_index >= config.scales.size()) {
    throw UsageError("pfe_forward: scale index " + std::to_string(scale_index) + " out of range");
  }
  if (patch_batch.rank() != 4 || patch_batch.dim(1) != 1) {
    throw DimensionError("pfe_forward: expected N x 1 x P x P patches, got " +
                         shape_string(patch_batch.shape()));
  }
  const std::size_t ph = patch_batch.dim(2), pw = patch_batch.dim(3);
  if (expected_patch != 0 && ph != expected_patch) {
    throw DimensionError("pfe_forward: patch height (axis 2) is " + std::to_string(ph) +
                         ", scale " + std::to_string(scale_index) + " expects " +
                         std::to_string(expected_patch));
  }
  if (ph % 2 != 0 || pw % 2 != 0) {
    throw DimensionError("pfe_forward: patch sides must be even to halve exactly, got " +
                         shape_string(patch_batch.shape()));
  }
  const auto& sc = config.scales[scale_index];
  const std::string prefix = "pfe" + std::to_string(scale_index) + ".conv";
  Tensor<T> x = patch_batch;
  for (std::size_t l = 0; l < sc.depth; ++l) {
    x = conv_layer(weights, prefix + std::to_string(l), x, l == sc.downsample_layer_index ? 2 : 1);
    if (l + 1 < sc.depth) x = relu(x);
  }
  return x;
}

template <typename T>
Tensor<T> pfm_fuse(const ModelWeights<T>& weights, std::span<const Tensor<T>> tiled_maps) {
  const auto& config = weights.config();
  if (tiled_maps.size() != config.scales.size()) {
    throw DimensionError("pfm_fuse: expected " + std::to_string(config.scales.size()) +
                         " scale maps, got " + std::to_string(tiled_maps.size()));
  }
  for (std::size_t s = 0; s < tiled_maps.size(); ++s) {
    const auto& m = tiled_maps[s];
    if (m.rank() != 4 || m.dim(0) != 1) {
      throw DimensionError("pfm_fuse: scale " + std::to_string(s) + " map must be 1 x C x h x w");
    }
    if (m.dim(2) != tiled_maps[0].dim(2) || m.dim(3) != tiled_maps[0].dim(3)) {
      throw DimensionError("pfm_fuse: scale " + std::to_string(s) + " map " +
                           shape_string(m.shape()) + " is not spatially aligned with " +
                           shape_string(tiled_maps[0].shape()));
    }
  }
  std::vector<Tensor<T>> projected;
  for (std::size_t s = 0; s < tiled_maps.size(); ++s)
    projected.push_back(conv_layer(weights, "pfm.proj" + std::to_string(s), tiled_maps[s], 1));

  if (config.fusion_mode == FusionMode::concat) {
    return conv_layer(weights, "pfm.reduce", concat_channels<T>(projected), 1);
  }
  // Small-scale features seed the accumulator; each larger scale is blended
  // in as g * acc + (1 - g) * next, written as next + g * (acc - next).
  Tensor<T> acc = projected[0];
  for (std::size_t s = 1; s < projected.size(); ++s) {
    const Tensor<T>& next = projected[s];
    const Tensor<T> both[2] = {acc, next};
    const Tensor<T> gate = sigmoid(conv_layer(weights, "pfm.gate" + std::to_string(s),
                                              concat_channels<T>(both), 1));
    acc = add(next, mul(gate, add(acc, scale(next, T{-1}))));
  }
  return acc;
}

template <typename T>
Tensor<T> pcm_forward(const ModelWeights<T>& weights, const Tensor<T>& fused) {
  Tensor<T> x = relu(conv_layer(weights, "pcm.conv0", fused, 1));
  x = upsample2x(x);
  x = relu(conv_layer(weights, "pcm.conv1", x, 1));
  return conv_layer(weights, "pcm.conv2", x, 1);
}

PatchPlan model_plan(const ModelConfig& config, std::size_t h, std::size_t w) {
  const auto divisors = config.divisors();
  return plan_scales(h, w, divisors, 2 * divisors.front());
}

template <typename T>
Tensor<T> model_forward(const ModelWeights<T>& weights, const Tensor<T>& image) {
  if (image.rank() != 4 || image.dim(0) != 1 || image.dim(1) != 1) {
    throw DimensionError("model_forward: expected a 1 x 1 x H x W image, got " +
                         shape_string(image.shape()));
  }
  const std::size_t h = image.dim(2), w = image.dim(3);
  if (h < 32 || w < 32) {
    throw UsageError("model_forward: image " + std::to_string(h) + "x" + std::to_string(w) +
                     " is smaller than 32x32");
  }
  const auto& config = weights.config();
  const PatchPlan plan = model_plan(config, h, w);

  Tensor<T> input = image;
  if (plan.padded_h != h || plan.padded_w != w) {
    const Image2D padded = reflect_pad(tensor_to_image(image), plan.padded_h, plan.padded_w);
    input = image_to_tensor<T>(padded);
  }

  std::vector<Tensor<T>> tiled;
  for (std::size_t s = 0; s < plan.scales(); ++s) {
    const auto [rows, cols] = plan.grid_dims[s];
    const Tensor<T> patches = split_patches(input, rows, cols);
    const Tensor<T> features = pfe_forward(weights, patches, s, plan.patch_sizes[s]);
    const auto positions = row_major_positions(rows, cols);
    tiled.push_back(tile_feature_maps<T>(features, positions, rows, cols));
  }
  const Tensor<T> fused = pfm_fuse<T>(weights, tiled);
  return crop(pcm_forward(weights, fused), h, w);
}

template <typename T>
Image2D denoise_image(const ModelWeights<T>& weights, const Image2D& img) {
  if (img.range != RangeTag::normalized01) {
    throw UsageError("denoise_image: input must be normalized to [0, 1]");
  }
  if (img.height < 32 || img.width < 32) {
    throw UsageError("denoise_image: image " + std::to_string(img.height) + "x" +
                     std::to_string(img.width) + " is smaller than 32x32");
  }
  NoGradGuard no_grad;
  const Tensor<T> out = model_forward(weights, image_to_tensor<T>(img));
  Image2D result = tensor_to_image(out, RangeTag::normalized01);
  for (auto& v : result.values) v = std::clamp(v, 0.0, 1.0);
  return result;
}

std::size_t count_params(const ModelConfig& config) { return count_params_by_module(config).total(); }

ParamBreakdown count_params_by_module(const ModelConfig& config) {
  ParamBreakdown out;
  for (const auto& l : layer_inventory(config)) {
    const std::size_t n = l.kernel * l.kernel * l.in_channels * l.out_channels + l.out_channels;
    if (l.module == "pfe") out.pfe += n;
    else if (l.module == "pfm") out.pfm += n;
    else out.pcm += n;
  }
  return out;
}

double conv_flops(const LayerSpec& l, std::size_t out_h, std::size_t out_w) {
  return 2.0 * static_cast<double>(l.kernel * l.kernel * l.in_channels * l.out_channels) *
         static_cast<double>(out_h) * static_cast<double>(out_w);
}

double count_flops(const ModelConfig& config, std::size_t h, std::size_t w) {
  const PatchPlan plan = model_plan(config, h, w);
  const auto layers = layer_inventory(config);
  const std::size_t half_h = plan.padded_h / 2, half_w = plan.padded_w / 2;
  double flops = 0.0;
  for (const auto& l : layers) {
    if (l.module == "pfe") {
      const std::size_t s = l.scale_index;
      // Extractor layers before the stride-2 layer run at full patch size.
      const bool full = l.layer_index < config.scales[s].downsample_layer_index;
      const std::size_t ph = full ? plan.patch_sizes[s] : plan.patch_sizes[s] / 2;
      const std::size_t pw = full ? plan.patch_widths[s] : plan.patch_widths[s] / 2;
      const double patches = static_cast<double>(plan.grid_dims[s].first * plan.grid_dims[s].second);
      flops += conv_flops(l, ph, pw) * patches;
    } else if (l.module == "pfm" || l.name == "pcm.conv0") {
      flops += conv_flops(l, half_h, half_w);
    } else {
      flops += conv_flops(l, 2 * half_h, 2 * half_w);
    }
  }
  // Bilinear upsampling of the consolidator's first feature map.
  flops += 8.0 * static_cast<double>(config.pcm_channels * 4 * half_h * half_w);
  return flops / 1e9;
}

#define PD_INSTANTIATE_MODEL(T)                                                              \
  template class ModelWeights<T>;                                                           \
  template ModelWeights<T> build_model<T>(const ModelConfig&);                              \
  template Tensor<T> pfe_forward<T>(const ModelWeights<T>&, const Tensor<T>&, std::size_t,  \
                                    std::size_t);                                           \
  template Tensor<T> pfm_fuse<T>(const ModelWeights<T>&, std::span<const Tensor<T>>);       \
  template Tensor<T> pcm_forward<T>(const ModelWeights<T>&, const Tensor<T>&);              \
  template Tensor<T> model_forward<T>(const ModelWeights<T>&, const Tensor<T>&);            \
  template Image2D denoise_image<T>(const ModelWeights<T>&, const Image2D&);

PD_INSTANTIATE_MODEL(float)
PD_INSTANTIATE_MODEL(double)

#undef PD_INSTANTIATE_MODEL

}  // namespace patchdenoise
