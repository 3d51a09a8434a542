// SPDX-License-Identifier: Apache-2.0
#include "cliff/config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <sstream>

#include "cliff/checkpoint.hpp"
#include "cliff/errors.hpp"

namespace cliff {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_integer(const std::string& key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty())
    throw ConfigError("config key '" + key + "': '" + v + "' is not a non-negative integer");
  return out;
}

float parse_float(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const float f = std::stof(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return f;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': '" + v + "' is not a number");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + key + "': '" + v + "' is not a boolean");
}

std::string fmt(float f) {
  std::ostringstream s;
  s.precision(9);
  s << f;
  return s.str();
}

struct Knob {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define SIZE_KNOB(key, field)                                                                              \
  {                                                                                                        \
    key, Knob {                                                                                            \
      [](RunConfig& c, const std::string& k, const std::string& v) { c.field = parse_integer<std::size_t>(k, v); }, \
          [](const RunConfig& c) { return std::to_string(c.field); }                                       \
    }                                                                                                      \
  }
#define FLOAT_KNOB(key, field)                                                                            \
  {                                                                                                       \
    key, Knob {                                                                                           \
      [](RunConfig& c, const std::string& k, const std::string& v) { c.field = parse_float(k, v); },     \
          [](const RunConfig& c) { return fmt(c.field); }                                                 \
    }                                                                                                     \
  }

const std::vector<std::pair<std::string, Knob>>& knobs() {
  static const std::vector<std::pair<std::string, Knob>> table = {
      {"seed", Knob{[](RunConfig& c, const std::string& k,
                       const std::string& v) { c.set_seed(parse_integer<std::uint64_t>(k, v)); },
                    [](const RunConfig& c) { return std::to_string(c.seed()); }}},
      SIZE_KNOB("epochs_base", train.epochs_base),
      SIZE_KNOB("epochs_incremental", train.epochs_incremental),
      SIZE_KNOB("batch_size", train.batch_size),
      FLOAT_KNOB("lr_base", train.lr_base),
      FLOAT_KNOB("lr_incremental", train.lr_incremental),
      FLOAT_KNOB("lambda_gate", train.lambda_gate),
      FLOAT_KNOB("lambda_mem", train.lambda_mem),
      FLOAT_KNOB("lambda_kd", train.lambda_kd),
      FLOAT_KNOB("kd_temperature", train.kd_temperature),
      FLOAT_KNOB("gate_temperature", train.gate_temperature),
      SIZE_KNOB("buffer_per_task", train.buffer_per_task),
      SIZE_KNOB("replay_batch", train.replay_batch),
      {"augment", Knob{[](RunConfig& c, const std::string& k, const std::string& v) { c.train.augment = parse_bool(k, v); },
                       [](const RunConfig& c) { return std::string(c.train.augment ? "true" : "false"); }}},
      {"cls_own_prompts",
       Knob{[](RunConfig& c, const std::string& k, const std::string& v) { c.train.cls_own_prompts = parse_bool(k, v); },
            [](const RunConfig& c) { return std::string(c.train.cls_own_prompts ? "true" : "false"); }}},
      SIZE_KNOB("l2p_pool_size", train.l2p_pool_size),
      SIZE_KNOB("l2p_top_k", train.l2p_top_k),
      FLOAT_KNOB("l2p_key_weight", train.l2p_key_weight),
      SIZE_KNOB("image_size", model.vit.image_size),
      SIZE_KNOB("patch_size", model.vit.patch_size),
      SIZE_KNOB("embed_dim", model.vit.embed_dim),
      SIZE_KNOB("depth", model.vit.depth),
      SIZE_KNOB("heads", model.vit.heads),
      FLOAT_KNOB("mlp_ratio", model.vit.mlp_ratio),
      SIZE_KNOB("prompt_length", model.prompt_length),
      SIZE_KNOB("material_embed_dim", model.material_embed_dim),
      SIZE_KNOB("delta_hidden", model.delta_hidden),
  };
  return table;
}

#undef SIZE_KNOB
#undef FLOAT_KNOB

}  // namespace

void RunConfig::validate() const {
  train.validate();
  model.vit.validate();
  if (model.prompt_length == 0) throw ConfigError("prompt_length must be >= 1");
  if (model.material_embed_dim == 0) throw ConfigError("material_embed_dim must be >= 1");
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& [k, _] : knobs()) out.push_back(k);
    return out;
  }();
  return keys;
}

void apply_setting(RunConfig& config, const std::string& key, const std::string& value) {
  for (const auto& [k, knob] : knobs())
    if (k == key) return knob.set(config, key, value);
  throw ConfigError("unknown config key '" + key + "'");
}

Setting parse_setting(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  Setting s{trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1))};
  if (s.first.empty()) throw ConfigError("empty key in '" + assignment + "'");
  return s;
}

std::vector<Setting> parse_config_text(const std::string& text) {
  std::vector<Setting> out;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      out.push_back(parse_setting(line));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

std::vector<Setting> read_config_file(const std::filesystem::path& path) {
  std::vector<unsigned char> bytes;
  try {
    bytes = read_file_bytes(path);
  } catch (const CheckpointError&) {
    throw ConfigError("cannot read config file " + path.string());
  }
  return parse_config_text(std::string(bytes.begin(), bytes.end()));
}

RunConfig resolve_config(const std::optional<std::string>& env_seed,
                         const std::optional<std::filesystem::path>& config_file,
                         const std::vector<Setting>& cli_settings) {
  RunConfig config;
  if (env_seed && !env_seed->empty()) {
    try {
      apply_setting(config, "seed", trim(*env_seed));
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("CLIFF_SEED: ") + e.what());
    }
  }
  if (config_file)
    for (const auto& [k, v] : read_config_file(*config_file)) apply_setting(config, k, v);
  for (const auto& [k, v] : cli_settings) apply_setting(config, k, v);
  config.validate();
  return config;
}

std::vector<Setting> config_settings(const RunConfig& config) {
  std::vector<Setting> out;
  for (const auto& [k, knob] : knobs()) out.emplace_back(k, knob.get(config));
  return out;
}

std::string config_to_text(const RunConfig& config) {
  std::string out;
  for (const auto& [k, v] : config_settings(config)) out += k + "=" + v + "\n";
  return out;
}

}  // namespace cliff
