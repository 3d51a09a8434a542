// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "cliff/checkpoint.hpp"
#include "cliff/classifier.hpp"
#include "cliff/layers.hpp"
#include "cliff/vit.hpp"

namespace cliff {

/// Backbone plus one linear head over the class-by-material label space that
/// gains C rows per registered material. Used for sequential fine-tuning and
/// for the joint upper bound.
class GrowingHeadModel : public Classifier {
 public:
  GrowingHeadModel(const VitConfig& vit, std::uint64_t seed);

  std::size_t num_materials() const override { return names_.size(); }
  const std::vector<std::string>& material_names() const { return names_; }
  /// Appends C randomly initialized head rows; earlier rows are kept.
  std::size_t add_material(const std::string& name);

  Tensor global_scores(const Tensor& image) const override;

  VisionTransformer& backbone() { return backbone_; }
  const VisionTransformer& backbone() const { return backbone_; }
  const Linear& head() const { return head_; }
  ParamList parameters() const;

  CheckpointData to_checkpoint() const;
  static GrowingHeadModel from_checkpoint(const CheckpointData& data);
  void save(const std::filesystem::path& path) const { write_checkpoint(path, to_checkpoint()); }

 private:
  std::uint64_t seed_;
  VisionTransformer backbone_;
  Linear head_;  // [C*M, d]
  std::vector<std::string> names_;
};

struct L2PConfig {
  std::size_t pool_size = 8;
  std::size_t top_k = 2;
  std::size_t prompt_length = 4;
};

/// Prompt-pool baseline: a frozen backbone, a shared pool of (key, prompt)
/// pairs picked per image by query-key cosine, and a growing linear head.
class L2PModel : public Classifier {
 public:
  /// Takes ownership of an already trained backbone and freezes it.
  L2PModel(VisionTransformer backbone, const L2PConfig& config, std::uint64_t seed);

  std::size_t num_materials() const override { return names_.size(); }
  const std::vector<std::string>& material_names() const { return names_; }
  std::size_t add_material(const std::string& name);

  const L2PConfig& config() const { return config_; }
  const VisionTransformer& backbone() const { return backbone_; }
  const Tensor& key(std::size_t i) const { return keys_.at(i); }

  /// Unprompted [CLS] feature, never part of the graph.
  Tensor query(const Tensor& image) const;
  /// Top-k pool indices by cosine(query, key), best first; ties go to the
  /// lower index.
  std::vector<std::size_t> select(const Tensor& query) const;

  struct Output {
    Tensor logits;    // [1, C*M]
    Tensor key_loss;  // mean over selected keys of (1 - cos(query, key))
    std::vector<std::size_t> selected;
  };
  Output forward(const Tensor& image) const;
  Tensor global_scores(const Tensor& image) const override { return forward(image).logits; }

  /// Keys, pool prompts and head; the backbone stays frozen.
  ParamList trainable_parameters() const;
  ParamList parameters() const;

  CheckpointData to_checkpoint() const;
  static L2PModel from_checkpoint(const CheckpointData& data);
  void save(const std::filesystem::path& path) const { write_checkpoint(path, to_checkpoint()); }

 private:
  L2PConfig config_;
  std::uint64_t seed_;
  VisionTransformer backbone_;
  std::vector<Tensor> keys_;  // each [1, d]
  std::vector<Prompt> pool_;
  Linear head_;
  std::vector<std::string> names_;
};

/// Loads any model checkpoint written by this library, dispatching on its
/// metadata. Throws CheckpointError on unknown model kinds.
std::unique_ptr<Classifier> load_classifier(const std::filesystem::path& path);

}  // namespace cliff
