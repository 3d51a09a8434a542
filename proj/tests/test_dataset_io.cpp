// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <random>
#include <fstream>

#include "cliff/dataset_io.hpp"
#include "cliff/errors.hpp"
#include "doctest.h"

using namespace cliff;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("cliff_data_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

bool same_sample(const FlakeSample& a, const FlakeSample& b) {
  return a.thickness == b.thickness && a.material_id == b.material_id && a.material_name == b.material_name &&
         a.seed == b.seed && a.image.shape() == b.image.shape() &&
         std::equal(a.image.data().begin(), a.image.data().end(), b.image.data().begin());
}

}  // namespace

TEST_CASE("sample encoding round-trips") {
  const auto tasks = default_benchmark(3, 3, 3, 16);
  const FlakeSample& s = tasks[2].split.train[1];
  const auto bytes = encode_sample(s);
  CHECK(bytes.size() == 36 + 3 * 16 * 16 * 4);
  FlakeSample back = decode_sample(bytes);
  back.material_name = s.material_name;  // names live in the manifest
  CHECK(same_sample(s, back));

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_sample(bad), DataError);
  CHECK_THROWS_AS(decode_sample(std::span(bytes).first(40)), DataError);
}

TEST_CASE("export then import reproduces the benchmark") {
  TempDir dir;
  const auto tasks = default_benchmark(11, 6, 3, 16);
  const std::uint64_t sum = export_dataset(dir.path, tasks, 11, false);
  CHECK(fs::exists(dir.path / kDatasetManifest));
  CHECK(fs::exists(dir.path / "T1_BN" / "train" / "00000.bin"));
  CHECK(fs::exists(dir.path / "T4_WTe2" / "validation" / "00002.bin"));
  CHECK(dataset_checksum(dir.path) == sum);
  CHECK(hex64(sum).size() == 16);

  const DatasetInfo info = import_dataset(dir.path);
  CHECK(info.root_seed == 11);
  CHECK(info.n_train == 6);
  CHECK(info.n_val == 3);
  CHECK(info.image_size == 16);
  CHECK(info.checksum == sum);
  REQUIRE(info.tasks.size() == 4);
  for (std::size_t t = 0; t < 4; ++t) {
    CHECK(info.tasks[t].profile.name == tasks[t].profile.name);
    REQUIRE(info.tasks[t].split.train.size() == 6);
    for (std::size_t i = 0; i < 6; ++i) CHECK(same_sample(info.tasks[t].split.train[i], tasks[t].split.train[i]));
    for (std::size_t i = 0; i < 3; ++i)
      CHECK(same_sample(info.tasks[t].split.validation[i], tasks[t].split.validation[i]));
  }

  // Same content, same checksum.
  TempDir again;
  CHECK(export_dataset(again.path, tasks, 11, false) == sum);
}

TEST_CASE("non-empty directory needs force") {
  TempDir dir;
  const auto tasks = default_benchmark(1, 3, 3, 16);
  std::ofstream(dir.path / "keep.txt") << "mine";
  CHECK_THROWS_AS(export_dataset(dir.path, tasks, 1, false), ConfigError);
  CHECK_NOTHROW(export_dataset(dir.path, tasks, 1, true));
  CHECK(fs::exists(dir.path / "keep.txt"));
  CHECK_NOTHROW(export_dataset(dir.path, tasks, 1, true));
}

TEST_CASE("tampering is reported") {
  TempDir dir;
  const auto tasks = default_benchmark(2, 3, 3, 16);
  export_dataset(dir.path, tasks, 2, false);
  const fs::path victim = dir.path / "T2_Graphene" / "train" / "00001.bin";
  {
    std::fstream f(victim, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(100);
    f.put('\x7f');
  }
  try {
    import_dataset(dir.path);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("00001.bin") != std::string::npos);
  }
  fs::remove(victim);
  CHECK_THROWS_AS(import_dataset(dir.path), DataError);
  CHECK_THROWS_AS(import_dataset(dir.path / "missing"), DataError);
}
