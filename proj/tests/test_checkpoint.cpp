// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <random>

#include "cliff/baseline_models.hpp"
#include "cliff/checkpoint.hpp"
#include "cliff/cliff_model.hpp"
#include "cliff/errors.hpp"
#include "doctest.h"

using namespace cliff;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("cliff_ckpt_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

CliffModel trained_looking_model() {
  CliffConfig c;
  c.vit.depth = 1;
  c.seed = 21;
  CliffModel m(c);
  m.freeze_base();
  m.add_material("BN");
  m.add_material("Graphene");
  Rng rng(4);
  for (float& w : m.delta_head(0).fc2.weight.mutable_data()) w = static_cast<float>(rng.normal());
  return m;
}

CheckpointError::Kind decode_kind(const std::vector<unsigned char>& bytes) {
  try {
    decode_checkpoint(bytes);
  } catch (const CheckpointError& e) {
    return e.kind();
  }
  FAIL("decode succeeded");
  return CheckpointError::Kind::Io;
}

}  // namespace

TEST_CASE("save, load, save is byte-identical") {
  TempDir dir;
  const CliffModel m = trained_looking_model();
  m.save(dir.path / "a.ckpt");
  const CliffModel loaded = CliffModel::load(dir.path / "a.ckpt");
  loaded.save(dir.path / "b.ckpt");
  CHECK(read_file_bytes(dir.path / "a.ckpt") == read_file_bytes(dir.path / "b.ckpt"));

  CHECK(loaded.num_materials() == 2);
  CHECK(loaded.material_names() == m.material_names());
  const auto p0 = m.parameters(), p1 = loaded.parameters();
  REQUIRE(p0.size() == p1.size());
  for (std::size_t i = 0; i < p0.size(); ++i) {
    CHECK(p0[i].name == p1[i].name);
    CHECK(p0[i].tensor.requires_grad() == p1[i].tensor.requires_grad());
    CHECK(std::equal(p0[i].tensor.data().begin(), p0[i].tensor.data().end(), p1[i].tensor.data().begin()));
  }
  CHECK(count_params(loaded.material_parameters(1)).trainable > 0);
  CHECK(count_params(loaded.material_parameters(0)).trainable == 0);
  CHECK(count_params(loaded.base_parameters()).trainable == 0);
}

TEST_CASE("corruption is detected with a specific error kind") {
  const auto good = encode_checkpoint(trained_looking_model().to_checkpoint());
  CHECK_NOTHROW(decode_checkpoint(good));

  auto flipped = good;
  flipped[flipped.size() / 2] ^= 0x01;
  CHECK(decode_kind(flipped) == CheckpointError::Kind::ChecksumMismatch);

  auto tail = good;
  tail[tail.size() - 1] ^= 0x80;
  CHECK(decode_kind(tail) == CheckpointError::Kind::ChecksumMismatch);

  const std::vector<unsigned char> truncated(good.begin(), good.begin() + static_cast<long>(good.size() / 3));
  CHECK(decode_kind(truncated) == CheckpointError::Kind::Truncated);
  CHECK(decode_kind({good.begin(), good.begin() + 6}) == CheckpointError::Kind::Truncated);

  auto version = good;
  version[4] = 99;
  CHECK(decode_kind(version) == CheckpointError::Kind::VersionMismatch);

  auto magic = good;
  magic[0] = 'X';
  CHECK(decode_kind(magic) == CheckpointError::Kind::BadMagic);
}

TEST_CASE("missing file and mismatched model kinds") {
  TempDir dir;
  CHECK_THROWS_AS(read_checkpoint(dir.path / "nope.ckpt"), CheckpointError);
  GrowingHeadModel g(VitConfig{}, 3);
  g.add_material("BN");
  g.save(dir.path / "g.ckpt");
  CHECK_THROWS_AS(CliffModel::load(dir.path / "g.ckpt"), CheckpointError);
}

TEST_CASE("baseline models round-trip and dispatch by kind") {
  TempDir dir;
  VitConfig vit;
  vit.depth = 1;
  GrowingHeadModel g(vit, 5);
  g.add_material("BN");
  g.add_material("Graphene");
  g.save(dir.path / "g.ckpt");
  GrowingHeadModel::from_checkpoint(read_checkpoint(dir.path / "g.ckpt")).save(dir.path / "g2.ckpt");
  CHECK(read_file_bytes(dir.path / "g.ckpt") == read_file_bytes(dir.path / "g2.ckpt"));

  Rng rng(1);
  L2PModel l(VisionTransformer(vit, rng), L2PConfig{}, 6);
  l.add_material("BN");
  l.save(dir.path / "l.ckpt");
  L2PModel::from_checkpoint(read_checkpoint(dir.path / "l.ckpt")).save(dir.path / "l2.ckpt");
  CHECK(read_file_bytes(dir.path / "l.ckpt") == read_file_bytes(dir.path / "l2.ckpt"));

  const auto img = Tensor::full({3, 32, 32}, 0.4f);
  auto lg = load_classifier(dir.path / "g.ckpt");
  CHECK(lg->num_materials() == 2);
  CHECK(lg->predict_global(img) == g.predict_global(img));
  auto ll = load_classifier(dir.path / "l.ckpt");
  CHECK(ll->num_materials() == 1);
  const auto a = ll->global_scores(img), b = l.global_scores(img);
  CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
  trained_looking_model().save(dir.path / "c.ckpt");
  CHECK(load_classifier(dir.path / "c.ckpt")->num_materials() == 2);
}

TEST_CASE("atomic writes leave no temporary behind") {
  TempDir dir;
  write_text_atomic(dir.path / "x.txt", "hello");
  write_text_atomic(dir.path / "x.txt", "world");
  const auto bytes = read_file_bytes(dir.path / "x.txt");
  CHECK(std::string(bytes.begin(), bytes.end()) == "world");
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir.path)) ++files;
  CHECK(files == 1);
}
