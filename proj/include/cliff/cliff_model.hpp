// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cliff/checkpoint.hpp"
#include "cliff/classifier.hpp"
#include "cliff/layers.hpp"
#include "cliff/vit.hpp"

namespace cliff {

struct CliffConfig {
  VitConfig vit;
  std::size_t prompt_length = 4;
  std::size_t material_embed_dim = 32;
  std::size_t delta_hidden = 0;  // 0 means embed_dim
  std::uint64_t seed = 0;

  std::size_t hidden() const { return delta_hidden ? delta_hidden : vit.embed_dim; }
};

/// Two-layer MLP over [z, e_i]. The output layer starts at zero so a new
/// material's block initially reproduces the base logits.
struct DeltaHead {
  Linear fc1;  // [h, d + d_e]
  Linear fc2;  // [C, h]

  static DeltaHead init(std::size_t feature_dim, std::size_t embed_dim, std::size_t hidden, Rng& rng);
  /// z [1, d], e [1, d_e] -> [1, C]
  Tensor operator()(const Tensor& z, const Tensor& e) const;
  ParamList parameters(const std::string& prefix) const;
  DeltaHead clone() const { return {fc1.clone(), fc2.clone()}; }
};

/// Where each block's features come from.
struct LogitMode {
  enum class Kind { PerMaterialPrompt, SinglePrompt };
  Kind kind = Kind::PerMaterialPrompt;
  std::size_t prompt_index = 0;

  static LogitMode per_material_prompt() { return {}; }
  static LogitMode single_prompt(std::size_t i) { return {Kind::SinglePrompt, i}; }
};

/// Frozen backbone and base head plus, per seen material, a prompt, an
/// embedding row and a delta head. Block i of the global logits is
/// base_logits(x) + delta_i(z, e_i).
class CliffModel : public Classifier {
 public:
  explicit CliffModel(const CliffConfig& config);

  const CliffConfig& config() const { return config_; }
  std::size_t num_materials() const override { return prompts_.size(); }
  std::size_t num_global_labels() const { return kNumClasses * num_materials(); }
  const std::vector<std::string>& material_names() const { return names_; }

  VisionTransformer& backbone() { return backbone_; }
  const VisionTransformer& backbone() const { return backbone_; }
  Linear& base_head() { return base_head_; }
  const Linear& base_head() const { return base_head_; }
  /// Learned map d -> d_e used by the gate loss.
  Linear& gate_projection() { return gate_proj_; }
  const Linear& gate_projection() const { return gate_proj_; }
  Prompt& prompt(std::size_t i);
  const Prompt& prompt(std::size_t i) const;
  DeltaHead& delta_head(std::size_t i);
  const Tensor& embedding(std::size_t i) const;
  /// All embedding rows stacked, [M, d_e].
  Tensor embedding_table() const;

  /// Backbone features [1, d]; `prompt_index` selects a material prompt.
  Tensor features(const Tensor& image) const { return backbone_.forward(image); }
  Tensor prompted_features(const Tensor& image, std::size_t prompt_index) const;

  /// g(f(x)) on unprompted features, [1, C].
  Tensor base_logits(const Tensor& image) const;
  Tensor base_logits_from_features(const Tensor& z) const { return base_head_(z); }
  /// Delta of material i on features z, [1, C].
  Tensor delta(std::size_t i, const Tensor& z) const;

  /// [1, C*M]. Per-material mode runs one prompted pass per material.
  Tensor global_logits(const Tensor& image, LogitMode mode = {}) const;
  /// Assembles blocks from precomputed pieces; `block_features[i]` feeds
  /// delta i.
  Tensor assemble_global(const Tensor& base, std::span<const Tensor> block_features) const;

  Tensor global_scores(const Tensor& image) const override { return global_logits(image); }

  /// Registers a new material with fresh prompt/embedding/delta and freezes
  /// everything else. Returns its index.
  std::size_t add_material(const std::string& name);
  /// Marks backbone and base head as non-trainable.
  void freeze_base();

  ParamList base_parameters() const;
  ParamList material_parameters(std::size_t i) const;
  ParamList parameters() const;

  CliffModel clone() const;

  CheckpointData to_checkpoint() const;
  static CliffModel from_checkpoint(const CheckpointData& data);
  void save(const std::filesystem::path& path) const { write_checkpoint(path, to_checkpoint()); }
  static CliffModel load(const std::filesystem::path& path) { return from_checkpoint(read_checkpoint(path)); }

 private:
  CliffConfig config_;
  VisionTransformer backbone_;
  Linear base_head_;  // [C, d]
  Linear gate_proj_;  // [d_e, d]
  std::vector<Prompt> prompts_;
  std::vector<Tensor> embeddings_;  // each [1, d_e]
  std::vector<DeltaHead> deltas_;
  std::vector<std::string> names_;
};

}  // namespace cliff
