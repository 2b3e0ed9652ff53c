#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "u2nerf/common.hpp"

namespace u2nerf {

struct NamedTensor {
  std::string name;
  torch::Tensor value;
};

/// Single-file container of named arrays plus a config snapshot.
///
/// Layout (little-endian):
///   magic      8 bytes  "U2NFCKPT"
///   version    u32
///   config     u64 length + UTF-8 bytes
///   count      u64
///   per array: u32 name length, name bytes, u8 dtype (0 f32, 1 f64, 2 i64,
///              3 u8), u32 rank, rank x i64 dims, u64 byte length, raw data
///   checksum   u32 CRC-32 of every preceding byte
struct Checkpoint {
  static constexpr uint32_t kFormatVersion = 1;

  std::string config_text;
  std::vector<NamedTensor> arrays;

  bool contains(const std::string& name) const;
  const torch::Tensor& at(const std::string& name) const;
  /// Inserts or replaces; insertion order is preserved on save.
  void set(const std::string& name, const torch::Tensor& value);
};

std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace u2nerf
