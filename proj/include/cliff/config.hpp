// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cliff/cliff_model.hpp"
#include "cliff/trainer.hpp"

namespace cliff {

/// Everything a training run is parameterized by. `seed` drives both data
/// order and model initialization.
struct RunConfig {
  TrainConfig train;
  CliffConfig model;

  std::uint64_t seed() const { return train.seed; }
  void set_seed(std::uint64_t s) {
    train.seed = s;
    model.seed = s;
  }
  void validate() const;
};

using Setting = std::pair<std::string, std::string>;

/// Every accepted key, in the order config_to_text writes them.
const std::vector<std::string>& config_keys();

/// Applies one key=value pair. Unknown keys and unparsable values raise
/// ConfigError.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);

/// Parses "key = value" lines; '#' starts a comment. Errors carry the line
/// number.
std::vector<Setting> parse_config_text(const std::string& text);
std::vector<Setting> read_config_file(const std::filesystem::path& path);

/// Splits "key=value" as given on the command line.
Setting parse_setting(const std::string& assignment);

/// Layers, lowest first: built-in defaults, the CLIFF_SEED value `env_seed`
/// (if any), the config file, then command-line settings.
RunConfig resolve_config(const std::optional<std::string>& env_seed,
                         const std::optional<std::filesystem::path>& config_file,
                         const std::vector<Setting>& cli_settings);

/// Round-trippable key=value dump.
std::string config_to_text(const RunConfig& config);
std::vector<Setting> config_settings(const RunConfig& config);

}  // namespace cliff
