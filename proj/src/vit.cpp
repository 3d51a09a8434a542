// SPDX-License-Identifier: Apache-2.0
#include "cliff/vit.hpp"

#include <cmath>

#include "cliff/errors.hpp"

namespace cliff {

std::size_t VitConfig::num_patches() const {
  const std::size_t side = image_size / patch_size;
  return side * side;
}

std::size_t VitConfig::mlp_hidden() const {
  return static_cast<std::size_t>(std::lround(static_cast<double>(embed_dim) * mlp_ratio));
}

void VitConfig::validate() const {
  if (patch_size == 0 || image_size == 0 || image_size % patch_size != 0)
    throw ParameterError("image_size " + std::to_string(image_size) + " not divisible by patch_size " +
                         std::to_string(patch_size));
  if (heads == 0 || embed_dim == 0 || embed_dim % heads != 0)
    throw ParameterError("embed_dim " + std::to_string(embed_dim) + " not divisible by heads " +
                         std::to_string(heads));
  if (depth == 0) throw ParameterError("depth must be >= 1");
  if (!(mlp_ratio > 0.0f) || mlp_hidden() == 0) throw ParameterError("mlp_ratio must be > 0");
}

Prompt Prompt::init(std::size_t length, std::size_t dim, std::size_t material_id, Rng& rng) {
  if (length == 0) throw ParameterError("prompt length must be >= 1");
  return {Tensor::randn({length, dim}, rng, 0.02f, true), Tensor::randn({length, dim}, rng, 0.02f, true),
          material_id};
}

ParamList Prompt::parameters(const std::string& prefix) const {
  return {{prefix + "tokens", tokens}, {prefix + "positions", positions}};
}

Tensor prompt_rows(std::span<const Prompt* const> prompts) {
  std::vector<Tensor> rows;
  rows.reserve(prompts.size());
  for (const Prompt* p : prompts) rows.push_back(add(p->tokens, p->positions));
  if (rows.size() == 1) return rows.front();
  return concat_rows(rows);
}

ParamList TransformerBlock::parameters(const std::string& prefix) const {
  ParamList out;
  append_prefixed(out, prefix + "norm1.", norm1.parameters(""));
  append_prefixed(out, prefix + "qkv.", qkv.parameters(""));
  append_prefixed(out, prefix + "proj.", proj.parameters(""));
  append_prefixed(out, prefix + "norm2.", norm2.parameters(""));
  append_prefixed(out, prefix + "fc1.", fc1.parameters(""));
  append_prefixed(out, prefix + "fc2.", fc2.parameters(""));
  return out;
}

TransformerBlock TransformerBlock::clone() const {
  return {norm1.clone(), qkv.clone(), proj.clone(), norm2.clone(), fc1.clone(), fc2.clone()};
}

VisionTransformer::VisionTransformer(const VitConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  const std::size_t d = config_.embed_dim;
  patch_proj_ = Linear::init(config_.patch_dim(), d, rng, 1.0f / std::sqrt(static_cast<float>(config_.patch_dim())));
  pos_embed_ = Tensor::randn({config_.num_patches(), d}, rng, 0.02f, true);
  cls_token_ = Tensor::randn({1, d}, rng, 0.02f, true);
  for (std::size_t i = 0; i < config_.depth; ++i) {
    TransformerBlock b;
    b.norm1 = LayerNormParams::init(d);
    b.qkv = Linear::init(d, 3 * d, rng);
    b.proj = Linear::init(d, d, rng);
    b.norm2 = LayerNormParams::init(d);
    b.fc1 = Linear::init(d, config_.mlp_hidden(), rng);
    b.fc2 = Linear::init(config_.mlp_hidden(), d, rng);
    blocks_.push_back(std::move(b));
  }
  final_norm_ = LayerNormParams::init(d);
}

Tensor VisionTransformer::extract_patches(const Tensor& image) const {
  const std::size_t s = config_.image_size, p = config_.patch_size, c = config_.channels;
  if (image.rank() != 3 || image.dim(0) != c || image.dim(1) != s || image.dim(2) != s)
    throw DimensionError("image shape " + shape_str(image.shape()) + " does not match config [" +
                         std::to_string(c) + "," + std::to_string(s) + "," + std::to_string(s) + "]");
  const std::size_t side = s / p, pd = config_.patch_dim();
  std::vector<float> out(side * side * pd);
  const auto px = image.data();
  for (std::size_t gy = 0; gy < side; ++gy)
    for (std::size_t gx = 0; gx < side; ++gx) {
      float* row = out.data() + (gy * side + gx) * pd;
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < p; ++y)
          for (std::size_t x = 0; x < p; ++x)
            row[ch * p * p + y * p + x] = px[ch * s * s + (gy * p + y) * s + gx * p + x];
    }
  // The image is data, never a graph input.
  return Tensor::from_data({side * side, pd}, std::move(out));
}

Tensor VisionTransformer::patch_embed(const Tensor& image) const {
  return add(patch_proj_(extract_patches(image)), pos_embed_);
}

Tensor VisionTransformer::block_forward(const TransformerBlock& block, const Tensor& x,
                                        std::vector<Tensor>* trace) const {
  const std::size_t d = config_.embed_dim, heads = config_.heads, dh = d / heads;
  const float inv_sqrt_dh = 1.0f / std::sqrt(static_cast<float>(dh));

  const Tensor qkv = block.qkv(block.norm1(x));
  std::vector<Tensor> head_out;
  head_out.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor q = slice_last(qkv, h * dh, (h + 1) * dh);
    const Tensor k = slice_last(qkv, d + h * dh, d + (h + 1) * dh);
    const Tensor v = slice_last(qkv, 2 * d + h * dh, 2 * d + (h + 1) * dh);
    const Tensor att = softmax(scale(matmul(q, transpose(k)), inv_sqrt_dh));
    if (trace) trace->push_back(att);
    head_out.push_back(matmul(att, v));
  }
  const Tensor h1 = add(x, block.proj(concat_last(head_out)));
  return add(h1, block.fc2(gelu(block.fc1(block.norm2(h1)))));
}

Tensor VisionTransformer::forward_with_tokens(const Tensor& image, const Tensor& prompt_tokens,
                                              AttentionTrace* trace) const {
  std::vector<Tensor> seq{cls_token_};
  if (prompt_tokens.defined()) {
    if (prompt_tokens.rank() != 2 || prompt_tokens.dim(1) != config_.embed_dim)
      throw DimensionError("prompt tokens " + shape_str(prompt_tokens.shape()) +
                           " do not match embed_dim " + std::to_string(config_.embed_dim));
    seq.push_back(prompt_tokens);
  }
  seq.push_back(patch_embed(image));
  Tensor x = concat_rows(seq);
  for (const auto& block : blocks_) {
    std::vector<Tensor>* layer_trace = nullptr;
    if (trace) layer_trace = &trace->layers.emplace_back();
    x = block_forward(block, x, layer_trace);
  }
  return final_norm_(slice_rows(x, 0, 1));
}

Tensor VisionTransformer::forward(const Tensor& image, const Prompt* prompt, AttentionTrace* trace) const {
  if (!prompt) return forward_with_tokens(image, Tensor(), trace);
  const Prompt* one[] = {prompt};
  return forward_with_tokens(image, prompt_rows(one), trace);
}

ParamList VisionTransformer::parameters() const {
  ParamList out;
  append_prefixed(out, "patch_proj.", patch_proj_.parameters(""));
  out.push_back({"pos_embed", pos_embed_});
  out.push_back({"cls_token", cls_token_});
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    append_prefixed(out, "blocks." + std::to_string(i) + ".", blocks_[i].parameters(""));
  append_prefixed(out, "final_norm.", final_norm_.parameters(""));
  return out;
}

VisionTransformer VisionTransformer::clone() const {
  VisionTransformer v;
  v.config_ = config_;
  v.patch_proj_ = patch_proj_.clone();
  v.pos_embed_ = pos_embed_.clone();
  v.cls_token_ = cls_token_.clone();
  for (const auto& b : blocks_) v.blocks_.push_back(b.clone());
  v.final_norm_ = final_norm_.clone();
  return v;
}

}  // namespace cliff
