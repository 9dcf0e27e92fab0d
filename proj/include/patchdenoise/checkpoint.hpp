#pragma once

#include <cstdint>
#include <filesystem>
#include <span>

#include "patchdenoise/model.hpp"

namespace patchdenoise {

// Binary layout, all integers little-endian:
//   "PDCKPT01"  u32 version  u64 config_len  config JSON
//   u32 tensor_count, then per tensor:
//     u32 name_len  name  u32 ndim  u64 dims[ndim]  f32 values[numel]
//   u64 FNV-1a hash of every preceding byte
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Writes to a sibling temporary file and renames it into place, so an
/// interrupted save never leaves a partial checkpoint at `path`.
void save_checkpoint(const std::filesystem::path& path, const ModelWeights<float>& weights);

/// Raises IntegrityError (with the byte offset) on truncation, bad magic,
/// checksum mismatch or tensors that disagree with the embedded config.
ModelWeights<float> load_checkpoint(const std::filesystem::path& path);

/// As above, and raises ConfigError when the embedded config differs from
/// `expected` (resuming under a different architecture).
ModelWeights<float> load_checkpoint(const std::filesystem::path& path,
                                    const ModelConfig& expected);

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

}  // namespace patchdenoise
