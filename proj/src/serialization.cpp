#include "patchdenoise/serialization.hpp"

#include <algorithm>
#include <string>

#include "patchdenoise/error.hpp"

namespace patchdenoise {

using nlohmann::json;

namespace json_detail {

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(),
                                   [&](const char* a) { return key == a; });
    if (!known) throw ConfigError(std::string(what) + ": unknown key '" + key + "'");
  }
}

}  // namespace json_detail

using json_detail::read;
using json_detail::reject_unknown;

json to_json(const HuWindow& w) { return {{"lo", w.lo}, {"hi", w.hi}}; }

json to_json(const ScaleConfig& s) {
  return {{"divisor", s.divisor},
          {"initial_kernel", s.initial_kernel},
          {"depth", s.depth},
          {"latent_channels", s.latent_channels},
          {"downsample_layer_index", s.downsample_layer_index}};
}

json to_json(const ModelConfig& c) {
  json scales = json::array();
  for (const auto& s : c.scales) scales.push_back(to_json(s));
  return {{"scales", scales},
          {"fusion_channels", c.fusion_channels},
          {"fusion_mode", to_string(c.fusion_mode)},
          {"pcm_channels", c.pcm_channels},
          {"seed", c.seed}};
}

json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs}, {"batch_size", c.batch_size}, {"eta0", c.eta0},
          {"eta_min", c.eta_min}, {"seed", c.seed},         {"hu_window", to_json(c.hu_window)}};
}

HuWindow hu_window_from_json(const json& j) {
  reject_unknown(j, {"lo", "hi"}, "hu_window");
  HuWindow w;
  read(j, "lo", w.lo, "hu_window");
  read(j, "hi", w.hi, "hu_window");
  return w;
}

ScaleConfig scale_config_from_json(const json& j) {
  reject_unknown(j, {"divisor", "initial_kernel", "depth", "latent_channels",
                     "downsample_layer_index"},
                 "scale");
  ScaleConfig s;
  read(j, "divisor", s.divisor, "scale");
  read(j, "initial_kernel", s.initial_kernel, "scale");
  read(j, "depth", s.depth, "scale");
  read(j, "latent_channels", s.latent_channels, "scale");
  read(j, "downsample_layer_index", s.downsample_layer_index, "scale");
  return s;
}

ModelConfig model_config_from_json(const json& j) {
  reject_unknown(j, {"scales", "fusion_channels", "fusion_mode", "pcm_channels", "seed"},
                 "model");
  ModelConfig c = ModelConfig::toy();
  if (j.contains("scales")) {
    if (!j["scales"].is_array()) throw ConfigError("model.scales: expected an array");
    c.scales.clear();
    for (const auto& s : j["scales"]) c.scales.push_back(scale_config_from_json(s));
  }
  read(j, "fusion_channels", c.fusion_channels, "model");
  read(j, "pcm_channels", c.pcm_channels, "model");
  read(j, "seed", c.seed, "model");
  if (j.contains("fusion_mode")) {
    std::string mode;
    read(j, "fusion_mode", mode, "model");
    try {
      c.fusion_mode = fusion_mode_from_string(mode);
    } catch (const Error& e) {
      throw ConfigError(std::string("model.fusion_mode: ") + e.what());
    }
  }
  return c;
}

TrainConfig train_config_from_json(const json& j, const TrainConfig& base) {
  reject_unknown(j, {"epochs", "batch_size", "eta0", "eta_min", "seed", "hu_window"}, "train");
  TrainConfig c = base;
  read(j, "epochs", c.epochs, "train");
  read(j, "batch_size", c.batch_size, "train");
  read(j, "eta0", c.eta0, "train");
  read(j, "eta_min", c.eta_min, "train");
  read(j, "seed", c.seed, "train");
  if (j.contains("hu_window")) c.hu_window = hu_window_from_json(j["hu_window"]);
  return c;
}

}  // namespace patchdenoise
