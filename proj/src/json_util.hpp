// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "cliff/checkpoint.hpp"
#include "cliff/errors.hpp"
#include "cliff/layers.hpp"
#include "cliff/vit.hpp"
#include "json.hpp"

namespace cliff::detail {

inline nlohmann::json vit_to_json(const VitConfig& c) {
  return {{"image_size", c.image_size}, {"patch_size", c.patch_size}, {"channels", c.channels},
          {"embed_dim", c.embed_dim},   {"depth", c.depth},           {"heads", c.heads},
          {"mlp_ratio", c.mlp_ratio}};
}

inline VitConfig vit_from_json(const nlohmann::json& j) {
  VitConfig c;
  c.image_size = j.at("image_size").get<std::size_t>();
  c.patch_size = j.at("patch_size").get<std::size_t>();
  c.channels = j.at("channels").get<std::size_t>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.depth = j.at("depth").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.mlp_ratio = j.at("mlp_ratio").get<float>();
  return c;
}

inline nlohmann::json parse_metadata(const CheckpointData& data, const std::string& expected_model) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(data.metadata);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(CheckpointError::Kind::Malformed, std::string("checkpoint metadata: ") + e.what());
  }
  if (meta.value("model", std::string()) != expected_model)
    throw CheckpointError(CheckpointError::Kind::Malformed,
                          "checkpoint holds a '" + meta.value("model", std::string("?")) +
                              "' model, expected '" + expected_model + "'");
  return meta;
}

inline void store_params(CheckpointData& out, nlohmann::json& meta, const ParamList& params) {
  nlohmann::json trainable = nlohmann::json::array();
  for (const auto& p : params) {
    out.tensors.push_back({p.name, p.tensor.shape(), {p.tensor.data().begin(), p.tensor.data().end()}});
    if (p.tensor.requires_grad()) trainable.push_back(p.name);
  }
  meta["trainable"] = trainable;
}

inline void restore_params(const CheckpointData& data, const nlohmann::json& meta, const ParamList& params) {
  std::vector<std::string> trainable = meta.at("trainable").get<std::vector<std::string>>();
  for (const auto& p : params) {
    Tensor t = p.tensor;
    data.restore(p.name, t);
    t.set_requires_grad(std::find(trainable.begin(), trainable.end(), p.name) != trainable.end());
  }
  if (data.tensors.size() != params.size())
    throw CheckpointError(CheckpointError::Kind::Malformed,
                          "checkpoint has " + std::to_string(data.tensors.size()) + " tensors, model expects " +
                              std::to_string(params.size()));
}

}  // namespace cliff::detail
