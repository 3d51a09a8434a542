// SPDX-License-Identifier: Apache-2.0
#include "cliff/baseline_models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cliff/cliff_model.hpp"
#include "json_util.hpp"

namespace cliff {

namespace {

VisionTransformer make_backbone(const VitConfig& vit, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 1));
  return VisionTransformer(vit, rng);
}

void check_new_name(const std::vector<std::string>& names, const std::string& name) {
  if (name.empty()) throw RegistrationError("material name must be non-empty");
  if (std::find(names.begin(), names.end(), name) != names.end())
    throw RegistrationError("material '" + name + "' is already registered");
}

/// Head with C more output rows; old rows and biases copied, new rows drawn
/// from `rng`, new biases zero.
Linear grow_head(const Linear& head, std::size_t in, Rng& rng) {
  const std::size_t old_rows = head.weight.defined() ? head.weight.dim(0) : 0;
  const std::size_t rows = old_rows + kNumClasses;
  std::vector<float> w(rows * in), b(rows, 0.0f);
  if (old_rows) {
    std::copy(head.weight.data().begin(), head.weight.data().end(), w.begin());
    std::copy(head.bias.data().begin(), head.bias.data().end(), b.begin());
  }
  for (std::size_t i = old_rows * in; i < w.size(); ++i) w[i] = static_cast<float>(rng.normal(0.0, 0.02));
  const bool trainable = head.weight.defined() ? head.weight.requires_grad() : true;
  return {Tensor::from_data({rows, in}, std::move(w), trainable), Tensor::from_data({rows}, std::move(b), trainable)};
}

[[noreturn]] void rethrow_malformed(const nlohmann::json::exception& e) {
  throw CheckpointError(CheckpointError::Kind::Malformed, std::string("checkpoint metadata: ") + e.what());
}

}  // namespace

// ---------------------------------------------------------------------------

GrowingHeadModel::GrowingHeadModel(const VitConfig& vit, std::uint64_t seed)
    : seed_(seed), backbone_(make_backbone(vit, seed)) {}

std::size_t GrowingHeadModel::add_material(const std::string& name) {
  check_new_name(names_, name);
  const std::size_t m = names_.size();
  Rng rng(derive_seed(seed_, 1000 + m));
  head_ = grow_head(head_, backbone_.config().embed_dim, rng);
  names_.push_back(name);
  return m;
}

Tensor GrowingHeadModel::global_scores(const Tensor& image) const {
  if (names_.empty()) throw StateError("global_scores: no materials registered");
  return head_(backbone_.forward(image));
}

ParamList GrowingHeadModel::parameters() const {
  ParamList out;
  append_prefixed(out, "backbone.", backbone_.parameters());
  if (head_.weight.defined()) append_prefixed(out, "head.", head_.parameters(""));
  return out;
}

CheckpointData GrowingHeadModel::to_checkpoint() const {
  CheckpointData out;
  nlohmann::json meta;
  meta["model"] = "growing_head";
  meta["vit"] = detail::vit_to_json(backbone_.config());
  meta["seed"] = seed_;
  meta["materials"] = names_;
  detail::store_params(out, meta, parameters());
  out.metadata = meta.dump();
  return out;
}

GrowingHeadModel GrowingHeadModel::from_checkpoint(const CheckpointData& data) {
  const auto meta = detail::parse_metadata(data, "growing_head");
  try {
    GrowingHeadModel model(detail::vit_from_json(meta.at("vit")), meta.at("seed").get<std::uint64_t>());
    for (const auto& name : meta.at("materials").get<std::vector<std::string>>()) model.add_material(name);
    detail::restore_params(data, meta, model.parameters());
    return model;
  } catch (const nlohmann::json::exception& e) {
    rethrow_malformed(e);
  }
}

// ---------------------------------------------------------------------------

L2PModel::L2PModel(VisionTransformer backbone, const L2PConfig& config, std::uint64_t seed)
    : config_(config), seed_(seed), backbone_(std::move(backbone)) {
  if (config_.pool_size == 0 || config_.top_k == 0 || config_.top_k > config_.pool_size)
    throw ParameterError("L2P top_k must be in [1, pool_size]");
  if (config_.prompt_length == 0) throw ParameterError("prompt_length must be >= 1");
  backbone_.freeze();
  const std::size_t d = backbone_.config().embed_dim;
  Rng rng(derive_seed(seed_, 3));
  for (std::size_t i = 0; i < config_.pool_size; ++i) {
    keys_.push_back(Tensor::randn({1, d}, rng, 1.0f, true));
    pool_.push_back(Prompt::init(config_.prompt_length, d, i, rng));
  }
}

std::size_t L2PModel::add_material(const std::string& name) {
  check_new_name(names_, name);
  const std::size_t m = names_.size();
  Rng rng(derive_seed(seed_, 1000 + m));
  head_ = grow_head(head_, backbone_.config().embed_dim, rng);
  names_.push_back(name);
  return m;
}

Tensor L2PModel::query(const Tensor& image) const {
  NoGradGuard no_grad;
  return backbone_.forward(image);
}

std::vector<std::size_t> L2PModel::select(const Tensor& q) const {
  std::vector<float> score(keys_.size());
  {
    NoGradGuard no_grad;
    for (std::size_t i = 0; i < keys_.size(); ++i) score[i] = cosine_similarity(q, keys_[i]).item();
  }
  std::vector<std::size_t> idx(keys_.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  idx.resize(config_.top_k);
  return idx;
}

L2PModel::Output L2PModel::forward(const Tensor& image) const {
  if (names_.empty()) throw StateError("L2P forward: no materials registered");
  Output out;
  const Tensor q = query(image);
  out.selected = select(q);
  std::vector<const Prompt*> chosen;
  std::vector<Tensor> pulls;
  for (std::size_t i : out.selected) {
    chosen.push_back(&pool_[i]);
    pulls.push_back(reshape(add_scalar(scale(cosine_similarity(q, keys_[i]), -1.0f), 1.0f), {1, 1}));
  }
  out.logits = head_(backbone_.forward_with_tokens(image, prompt_rows(chosen)));
  out.key_loss = mean(concat_last(pulls));
  return out;
}

ParamList L2PModel::trainable_parameters() const {
  ParamList out;
  for (std::size_t i = 0; i < pool_.size(); ++i) {
    out.push_back({"pool." + std::to_string(i) + ".key", keys_[i]});
    append_prefixed(out, "pool." + std::to_string(i) + ".prompt.", pool_[i].parameters(""));
  }
  if (head_.weight.defined()) append_prefixed(out, "head.", head_.parameters(""));
  return out;
}

ParamList L2PModel::parameters() const {
  ParamList out;
  append_prefixed(out, "backbone.", backbone_.parameters());
  const ParamList rest = trainable_parameters();
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

CheckpointData L2PModel::to_checkpoint() const {
  CheckpointData out;
  nlohmann::json meta;
  meta["model"] = "l2p";
  meta["vit"] = detail::vit_to_json(backbone_.config());
  meta["seed"] = seed_;
  meta["pool_size"] = config_.pool_size;
  meta["top_k"] = config_.top_k;
  meta["prompt_length"] = config_.prompt_length;
  meta["materials"] = names_;
  detail::store_params(out, meta, parameters());
  out.metadata = meta.dump();
  return out;
}

L2PModel L2PModel::from_checkpoint(const CheckpointData& data) {
  const auto meta = detail::parse_metadata(data, "l2p");
  try {
    const VitConfig vit = detail::vit_from_json(meta.at("vit"));
    const auto seed = meta.at("seed").get<std::uint64_t>();
    L2PConfig cfg;
    cfg.pool_size = meta.at("pool_size").get<std::size_t>();
    cfg.top_k = meta.at("top_k").get<std::size_t>();
    cfg.prompt_length = meta.at("prompt_length").get<std::size_t>();
    L2PModel model(make_backbone(vit, seed), cfg, seed);
    for (const auto& name : meta.at("materials").get<std::vector<std::string>>()) model.add_material(name);
    detail::restore_params(data, meta, model.parameters());
    return model;
  } catch (const nlohmann::json::exception& e) {
    rethrow_malformed(e);
  }
}

// ---------------------------------------------------------------------------

std::unique_ptr<Classifier> load_classifier(const std::filesystem::path& path) {
  const CheckpointData data = read_checkpoint(path);
  std::string kind;
  try {
    kind = nlohmann::json::parse(data.metadata).value("model", std::string());
  } catch (const nlohmann::json::exception& e) {
    rethrow_malformed(e);
  }
  if (kind == "cliff") return std::make_unique<CliffModel>(CliffModel::from_checkpoint(data));
  if (kind == "growing_head") return std::make_unique<GrowingHeadModel>(GrowingHeadModel::from_checkpoint(data));
  if (kind == "l2p") return std::make_unique<L2PModel>(L2PModel::from_checkpoint(data));
  throw CheckpointError(CheckpointError::Kind::Malformed, "unknown model kind '" + kind + "' in " + path.string());
}

}  // namespace cliff
