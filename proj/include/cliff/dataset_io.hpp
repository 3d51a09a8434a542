// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cliff/synth.hpp"

namespace cliff {

inline constexpr const char* kDatasetManifest = "manifest.tsv";
inline constexpr std::uint32_t kSampleFormatVersion = 1;

/// Binary sample file: "FLKS", u32 version, u32 material id, u32 class,
/// u32 channels, u32 height, u32 width, u64 seed, f32 pixels (little-endian).
std::vector<unsigned char> encode_sample(const FlakeSample& sample);
/// Throws DataError on bad magic, version or size.
FlakeSample decode_sample(std::span<const unsigned char> bytes);

struct DatasetInfo {
  std::uint64_t root_seed = 0;
  std::size_t n_train = 0;
  std::size_t n_val = 0;
  std::size_t image_size = 0;
  std::vector<MaterialTask> tasks;
  std::uint64_t checksum = 0;  // FNV-1a of the manifest bytes
};

/// Writes task directories T<k>_<material>/{train,validation}/NNNNN.bin and a
/// manifest with one checksummed line per sample. A non-empty `dir` is
/// refused (ConfigError) unless `force`, which replaces only what this
/// function writes. Returns the dataset checksum.
std::uint64_t export_dataset(const std::filesystem::path& dir, std::span<const MaterialTask> tasks,
                             std::uint64_t root_seed, bool force);

/// Reads and verifies every file listed in the manifest. Checksum or
/// format mismatches raise DataError naming the file.
DatasetInfo import_dataset(const std::filesystem::path& dir);

/// Checksum of the manifest only, without touching sample files.
std::uint64_t dataset_checksum(const std::filesystem::path& dir);

std::string hex64(std::uint64_t v);

}  // namespace cliff
