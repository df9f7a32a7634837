#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "rulforge/model.hpp"

namespace rulforge {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

/// Binary checkpoint layout (all integers little-endian):
///
///   "RULFCKPT"            8-byte magic
///   u32 format version
///   u32 manifest length N
///   N bytes               JSON manifest: {"config": TcnConfig,
///                           "tensors": [{"name", "shape", "count", "crc32"}]}
///   payload               float32 LE arrays, in manifest order
///   u32 crc32             over every preceding byte
std::string serialize_checkpoint(const Model& model);

/// Throws CorruptionError on bad magic, version, length or checksum, and
/// ConfigMismatchError when `expected` is given and differs from the stored
/// architecture.
Model deserialize_checkpoint(const std::string& bytes,
                             const std::optional<TcnConfig>& expected = std::nullopt);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path,
                      const std::optional<TcnConfig>& expected = std::nullopt);

}  // namespace rulforge
