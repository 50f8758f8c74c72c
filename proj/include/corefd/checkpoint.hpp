#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "corefd/adam.hpp"
#include "corefd/model.hpp"

namespace corefd::trainer {

inline constexpr char kCheckpointMagic[8] = {'C', 'O', 'R', 'E', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  model::Model model;
  ndgrad::AdamState optimizer;
  std::int64_t epoch = 0;
  double best_val_auc = 0.0;
  std::uint64_t seed = 0;

  friend bool operator==(const Checkpoint& a, const Checkpoint& b);
};

/// FNV-1a 64 over a byte range.
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

/// Binary layout: magic "CORECKPT", u32 version, u32 tensor count, then per tensor
/// u16 name length, name bytes, u8 rank, u32 dims, little-endian float64 payload;
/// trailing u64 FNV-1a of everything before it. Metadata (config, epoch, optimizer
/// state, seed) travels as named tensors.
std::vector<std::uint8_t> serialize(const Checkpoint& ckpt);
/// Throws FormatError on bad magic, unsupported version, truncation (naming the
/// offset), checksum mismatch or missing tensors.
Checkpoint deserialize(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace corefd::trainer
