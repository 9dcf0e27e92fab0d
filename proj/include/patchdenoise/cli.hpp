#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchdenoise/dataset.hpp"
#include "patchdenoise/model.hpp"
#include "patchdenoise/training.hpp"

namespace patchdenoise::cli {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitDiverged = 4;

/// Everything a command needs. The top-level seed drives model
/// initialisation, data shuffling and dataset synthesis alike.
struct RunConfig {
  ModelConfig model = ModelConfig::toy();
  TrainConfig train = TrainConfig::desk();
  SynthOptions synth;
  std::string dataset_root = "data";
  std::string output_dir = "runs";
  std::size_t folds = 4;
  std::vector<std::size_t> fold_selection;  // empty: every fold
  std::uint64_t seed = 0;

  /// Pushes `seed` into the model, training and synthesis sections.
  void apply_seed();
  void validate() const;
};

nlohmann::json to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

struct AblationArm {
  std::string name;
  ModelConfig model;
};

/// The three comparison arms: divisors {16, 8, 1} gated, {32, 16, 2} gated
/// and {16, 8, 1} with concatenation fusion, all sharing `base`'s widths.
std::vector<AblationArm> ablation_arms(const ModelConfig& base);

/// Parses argv and runs one command, mapping library errors to exit codes.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
/// As above; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace patchdenoise::cli
