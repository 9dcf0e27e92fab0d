#pragma once

#include <cstdint>
#include <string>
#include <type_traits>

#include <nlohmann/json.hpp>

#include "patchdenoise/error.hpp"
#include "patchdenoise/image.hpp"
#include "patchdenoise/model.hpp"
#include "patchdenoise/training.hpp"

namespace patchdenoise {

// JSON forms of the configuration types. Parsing is strict: unknown keys and
// wrongly typed values raise ConfigError; absent keys keep their defaults.

nlohmann::json to_json(const HuWindow& window);
nlohmann::json to_json(const ScaleConfig& scale);
nlohmann::json to_json(const ModelConfig& config);
nlohmann::json to_json(const TrainConfig& config);

HuWindow hu_window_from_json(const nlohmann::json& j);
ScaleConfig scale_config_from_json(const nlohmann::json& j);
ModelConfig model_config_from_json(const nlohmann::json& j);
/// Keys absent from `j` keep their values from `base`.
TrainConfig train_config_from_json(const nlohmann::json& j, const TrainConfig& base = {});

namespace json_detail {

/// Throws ConfigError naming the first key of `j` outside `allowed`.
void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                    const char* what);

template <typename V>
void read(const nlohmann::json& j, const char* key, V& out, const char* what) {
  if (!j.contains(key)) return;
  if constexpr (std::is_unsigned_v<V>) {
    const auto& v = j.at(key);
    // Values built in code arrive as signed integers, parsed text as unsigned.
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
      throw ConfigError(std::string(what) + "." + key + ": expected a non-negative integer");
    }
  }
  try {
    out = j.at(key).get<V>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string(what) + "." + key + ": " + e.what());
  }
}

}  // namespace json_detail

}  // namespace patchdenoise
