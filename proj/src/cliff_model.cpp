// SPDX-License-Identifier: Apache-2.0
#include "cliff/cliff_model.hpp"

#include <algorithm>
#include <cmath>

#include "json_util.hpp"

namespace cliff {

DeltaHead DeltaHead::init(std::size_t feature_dim, std::size_t embed_dim, std::size_t hidden, Rng& rng) {
  const std::size_t in = feature_dim + embed_dim;
  return {Linear::init(in, hidden, rng, 1.0f / std::sqrt(static_cast<float>(in))),
          Linear::zeros(hidden, kNumClasses)};
}

Tensor DeltaHead::operator()(const Tensor& z, const Tensor& e) const {
  const Tensor parts[] = {z, e};
  return fc2(gelu(fc1(concat_last(parts))));
}

ParamList DeltaHead::parameters(const std::string& prefix) const {
  ParamList out;
  append_prefixed(out, prefix + "fc1.", fc1.parameters(""));
  append_prefixed(out, prefix + "fc2.", fc2.parameters(""));
  return out;
}

namespace {

VisionTransformer make_backbone(const CliffConfig& c) {
  Rng rng(derive_seed(c.seed, 1));
  return VisionTransformer(c.vit, rng);
}

}  // namespace

CliffModel::CliffModel(const CliffConfig& config) : config_(config), backbone_(make_backbone(config)) {
  if (config_.prompt_length == 0) throw ParameterError("prompt_length must be >= 1");
  if (config_.material_embed_dim == 0) throw ParameterError("material_embed_dim must be >= 1");
  const std::size_t d = config_.vit.embed_dim;
  Rng rng(derive_seed(config_.seed, 2));
  base_head_ = Linear::init(d, kNumClasses, rng);
  gate_proj_ = Linear::init(d, config_.material_embed_dim, rng, 1.0f / std::sqrt(static_cast<float>(d)));
  gate_proj_.weight.set_requires_grad(false);
  gate_proj_.bias.set_requires_grad(false);
}

Prompt& CliffModel::prompt(std::size_t i) {
  if (i >= prompts_.size()) throw IndexError("material index " + std::to_string(i) + " >= " + std::to_string(prompts_.size()));
  return prompts_[i];
}

const Prompt& CliffModel::prompt(std::size_t i) const {
  if (i >= prompts_.size()) throw IndexError("material index " + std::to_string(i) + " >= " + std::to_string(prompts_.size()));
  return prompts_[i];
}

DeltaHead& CliffModel::delta_head(std::size_t i) {
  if (i >= deltas_.size()) throw IndexError("material index " + std::to_string(i) + " >= " + std::to_string(deltas_.size()));
  return deltas_[i];
}

const Tensor& CliffModel::embedding(std::size_t i) const {
  if (i >= embeddings_.size())
    throw IndexError("material index " + std::to_string(i) + " >= " + std::to_string(embeddings_.size()));
  return embeddings_[i];
}

Tensor CliffModel::embedding_table() const {
  if (embeddings_.empty()) return Tensor::zeros({0, config_.material_embed_dim});
  return concat_rows(embeddings_);
}

Tensor CliffModel::prompted_features(const Tensor& image, std::size_t prompt_index) const {
  return backbone_.forward(image, &prompt(prompt_index));
}

Tensor CliffModel::base_logits(const Tensor& image) const { return base_head_(backbone_.forward(image)); }

Tensor CliffModel::delta(std::size_t i, const Tensor& z) const {
  if (i >= deltas_.size())
    throw IndexError("delta: material index " + std::to_string(i) + " >= " + std::to_string(deltas_.size()));
  return deltas_[i](z, embeddings_[i]);
}

Tensor CliffModel::assemble_global(const Tensor& base, std::span<const Tensor> block_features) const {
  if (block_features.size() != num_materials())
    throw DimensionError("assemble_global: " + std::to_string(block_features.size()) + " feature rows for " +
                         std::to_string(num_materials()) + " materials");
  std::vector<Tensor> blocks;
  blocks.reserve(block_features.size());
  for (std::size_t i = 0; i < block_features.size(); ++i) blocks.push_back(add(base, delta(i, block_features[i])));
  return concat_last(blocks);
}

Tensor CliffModel::global_logits(const Tensor& image, LogitMode mode) const {
  if (num_materials() == 0) throw StateError("global_logits: no materials registered");
  const Tensor base = base_logits(image);
  std::vector<Tensor> feats;
  feats.reserve(num_materials());
  switch (mode.kind) {
    case LogitMode::Kind::PerMaterialPrompt:
      for (std::size_t i = 0; i < num_materials(); ++i) feats.push_back(prompted_features(image, i));
      break;
    case LogitMode::Kind::SinglePrompt: {
      const Tensor z = prompted_features(image, mode.prompt_index);
      feats.assign(num_materials(), z);
      break;
    }
    default:
      throw ParameterError("global_logits: unknown mode");
  }
  return assemble_global(base, feats);
}

std::size_t CliffModel::add_material(const std::string& name) {
  if (name.empty()) throw RegistrationError("material name must be non-empty");
  if (std::find(names_.begin(), names_.end(), name) != names_.end())
    throw RegistrationError("material '" + name + "' is already registered");
  set_trainable(parameters(), false);
  const std::size_t m = prompts_.size();
  const std::size_t d = config_.vit.embed_dim;
  Rng rng(derive_seed(config_.seed, 1000 + m));
  prompts_.push_back(Prompt::init(config_.prompt_length, d, m, rng));
  embeddings_.push_back(Tensor::randn({1, config_.material_embed_dim}, rng, 0.02f, true));
  deltas_.push_back(DeltaHead::init(d, config_.material_embed_dim, config_.hidden(), rng));
  names_.push_back(name);
  return m;
}

void CliffModel::freeze_base() { set_trainable(base_parameters(), false); }

ParamList CliffModel::base_parameters() const {
  ParamList out;
  append_prefixed(out, "backbone.", backbone_.parameters());
  append_prefixed(out, "base_head.", base_head_.parameters(""));
  return out;
}

ParamList CliffModel::material_parameters(std::size_t i) const {
  const std::string prefix = "materials." + std::to_string(i) + ".";
  ParamList out;
  append_prefixed(out, prefix + "prompt.", prompt(i).parameters(""));
  out.push_back({prefix + "embedding", embedding(i)});
  append_prefixed(out, prefix + "delta.", deltas_.at(i).parameters(""));
  return out;
}

ParamList CliffModel::parameters() const {
  ParamList out = base_parameters();
  append_prefixed(out, "gate_proj.", gate_proj_.parameters(""));
  for (std::size_t i = 0; i < num_materials(); ++i) {
    auto mp = material_parameters(i);
    out.insert(out.end(), mp.begin(), mp.end());
  }
  return out;
}

CliffModel CliffModel::clone() const {
  CliffModel c = *this;  // shares tensors; replace each with a deep copy
  c.backbone_ = backbone_.clone();
  c.base_head_ = base_head_.clone();
  c.gate_proj_ = gate_proj_.clone();
  for (auto& p : c.prompts_) p = p.clone();
  for (auto& e : c.embeddings_) e = e.clone();
  for (auto& d : c.deltas_) d = d.clone();
  return c;
}

CheckpointData CliffModel::to_checkpoint() const {
  CheckpointData out;
  nlohmann::json meta;
  meta["model"] = "cliff";
  meta["vit"] = detail::vit_to_json(config_.vit);
  meta["prompt_length"] = config_.prompt_length;
  meta["material_embed_dim"] = config_.material_embed_dim;
  meta["delta_hidden"] = config_.delta_hidden;
  meta["seed"] = config_.seed;
  meta["materials"] = names_;
  detail::store_params(out, meta, parameters());
  out.metadata = meta.dump();
  return out;
}

CliffModel CliffModel::from_checkpoint(const CheckpointData& data) {
  const auto meta = detail::parse_metadata(data, "cliff");
  try {
    CliffConfig cfg;
    cfg.vit = detail::vit_from_json(meta.at("vit"));
    cfg.prompt_length = meta.at("prompt_length").get<std::size_t>();
    cfg.material_embed_dim = meta.at("material_embed_dim").get<std::size_t>();
    cfg.delta_hidden = meta.at("delta_hidden").get<std::size_t>();
    cfg.seed = meta.at("seed").get<std::uint64_t>();
    CliffModel model(cfg);
    for (const auto& name : meta.at("materials").get<std::vector<std::string>>()) model.add_material(name);
    detail::restore_params(data, meta, model.parameters());
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(CheckpointError::Kind::Malformed, std::string("checkpoint metadata: ") + e.what());
  }
}

}  // namespace cliff
