#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "emomusic/nn/layers.hpp"

namespace emomusic::nn {

// Checkpoint container, all integers little-endian:
//   "EMOCKPT\0"  u32 version=1  u32 real_bytes (4 or 8)
//   u64 config_len, config JSON (UTF-8)
//   u32 block_count, per block:
//     u32 name_len, name, u32 rank, u64 dims[rank], values (real_bytes each)
//   u64 FNV-1a of every preceding byte
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointBlock {
  std::string name;
  Tensor tensor;
};

struct Checkpoint {
  nlohmann::json config = nlohmann::json::object();
  std::vector<CheckpointBlock> blocks;

  const CheckpointBlock* find(std::string_view name) const;
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
/// Throws CheckpointCorrupt on bad magic, truncation, or checksum mismatch.
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Snapshot of module state (parameters then buffers) as blocks.
std::vector<CheckpointBlock> export_state(const ParameterList& list);
/// Copies blocks into the module by name; every state entry must be present
/// with the same shape (CheckpointCorrupt otherwise).
void import_state(const ParameterList& list, const std::vector<CheckpointBlock>& blocks);

}  // namespace emomusic::nn
