// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cliff/tensor.hpp"

namespace cliff {

/// On-disk layout, little-endian:
///   "CLIF" | u32 version | u64 metadata length | metadata (UTF-8 JSON)
///   | u64 tensor count | per tensor: u32 name length, name, u32 rank,
///   u64 dims[rank], f32 payload[prod(dims)] | u64 FNV-1a of all prior bytes
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct StoredTensor {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

struct CheckpointData {
  std::string metadata;  // JSON text
  std::vector<StoredTensor> tensors;

  const StoredTensor& find(const std::string& name) const;
  /// Copies a stored tensor's payload into `target`, checking the shape.
  void restore(const std::string& name, Tensor& target) const;
};

std::vector<unsigned char> encode_checkpoint(const CheckpointData& data);
/// Throws CheckpointError with a kind per failure: BadMagic, VersionMismatch,
/// Truncated, ChecksumMismatch, Malformed.
CheckpointData decode_checkpoint(std::span<const unsigned char> bytes);

/// Writes via a temporary file and rename.
void write_checkpoint(const std::filesystem::path& path, const CheckpointData& data);
CheckpointData read_checkpoint(const std::filesystem::path& path);

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path);
/// Atomic replace: write `path.tmp` then rename over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const unsigned char> bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace cliff
