// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "cliff/layers.hpp"

namespace cliff {

struct VitConfig {
  std::size_t image_size = 32;
  std::size_t patch_size = 8;
  std::size_t channels = 3;
  std::size_t embed_dim = 64;
  std::size_t depth = 2;
  std::size_t heads = 4;
  float mlp_ratio = 2.0f;

  std::size_t num_patches() const;
  std::size_t patch_dim() const { return channels * patch_size * patch_size; }
  std::size_t mlp_hidden() const;
  void validate() const;
};

/// Learnable tokens prepended after [CLS]. Each slot owns a learned position.
struct Prompt {
  Tensor tokens;     // [L_p, d]
  Tensor positions;  // [L_p, d]
  std::size_t material_id = 0;

  static Prompt init(std::size_t length, std::size_t dim, std::size_t material_id, Rng& rng);
  std::size_t length() const { return tokens.dim(0); }
  ParamList parameters(const std::string& prefix) const;
  Prompt clone() const { return {tokens.clone(), positions.clone(), material_id}; }
};

/// Token block that goes in front of the patch tokens; concatenation of one
/// or more prompts' tokens with their positions added.
Tensor prompt_rows(std::span<const Prompt* const> prompts);

/// Per-layer attention probabilities, [heads] entries of [T, T] each.
struct AttentionTrace {
  std::vector<std::vector<Tensor>> layers;
};

struct TransformerBlock {
  LayerNormParams norm1;
  Linear qkv;   // [3d, d]
  Linear proj;  // [d, d]
  LayerNormParams norm2;
  Linear fc1;   // [hidden, d]
  Linear fc2;   // [d, hidden]

  ParamList parameters(const std::string& prefix) const;
  TransformerBlock clone() const;
};

/// Pre-norm ViT over non-overlapping patches, read out at the [CLS] token.
class VisionTransformer {
 public:
  VisionTransformer(const VitConfig& config, Rng& rng);

  const VitConfig& config() const { return config_; }

  /// image [C,H,W] -> patch tokens [num_patches, d] with positions added.
  Tensor patch_embed(const Tensor& image) const;

  /// Feature row [1, d]: layer-normed [CLS] after `depth` blocks over
  /// [CLS] ++ prompt rows ++ patch tokens. `prompt_tokens` may be undefined.
  Tensor forward_with_tokens(const Tensor& image, const Tensor& prompt_tokens,
                             AttentionTrace* trace = nullptr) const;
  Tensor forward(const Tensor& image, const Prompt* prompt = nullptr,
                 AttentionTrace* trace = nullptr) const;

  ParamList parameters() const;
  void freeze() { set_trainable(parameters(), false); }
  void unfreeze() { set_trainable(parameters(), true); }
  ParamCount parameter_count() const { return count_params(parameters()); }
  VisionTransformer clone() const;

  /// Rearranges an image into flattened patches [num_patches, C*p*p].
  Tensor extract_patches(const Tensor& image) const;

  // Direct access for tests that construct weights by hand.
  Linear& patch_projection() { return patch_proj_; }
  Tensor& position_embedding() { return pos_embed_; }

 private:
  VisionTransformer() = default;
  Tensor block_forward(const TransformerBlock& block, const Tensor& x,
                       std::vector<Tensor>* trace) const;

  VitConfig config_;
  Linear patch_proj_;  // [d, patch_dim]
  Tensor pos_embed_;   // [num_patches, d]
  Tensor cls_token_;   // [1, d]
  std::vector<TransformerBlock> blocks_;
  LayerNormParams final_norm_;
};

}  // namespace cliff
