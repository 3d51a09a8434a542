// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cliff/config.hpp"
#include "cliff/eval.hpp"

namespace cliff {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kRunManifest = "run_manifest.json";
inline constexpr const char* kHistoryFile = "train_history.csv";
inline constexpr const char* kEvalJson = "eval.json";
inline constexpr const char* kEvalText = "eval.txt";

enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitData = 3, kExitRuntime = 4 };

/// Exit code and category label for an exception escaping a command.
ExitCode exit_code_for(const std::exception& e);
std::string error_category(const std::exception& e);

struct GenerateOptions {
  std::uint64_t seed = 0;
  std::filesystem::path out;
  std::size_t n_train = 300;
  std::size_t n_val = 90;
  std::size_t image_size = 32;
  bool force = false;
};

/// Renders the default benchmark and exports it. Returns the dataset checksum.
std::uint64_t cmd_generate(const GenerateOptions& options, std::ostream& log);

struct TrainOptions {
  std::string method;  // cliff, naive, joint, l2p
  std::filesystem::path data_dir;
  std::optional<std::filesystem::path> config_file;
  std::vector<Setting> settings;  // command-line overrides
  std::optional<std::string> env_seed;
  std::filesystem::path out;
  bool force = false;
};

void cmd_train(const TrainOptions& options, std::ostream& log);

struct EvalOptions {
  std::filesystem::path run_dir;
  std::optional<std::filesystem::path> data_dir;  // defaults to the run's dataset
};

/// Fills the accuracy matrix from a finalized run's checkpoints and writes
/// eval.json and eval.txt into the run directory.
MethodReport cmd_eval(const EvalOptions& options, std::ostream& log);

/// Combines evaluated runs; summaries are recomputed from the matrices.
/// Runs over different task lists raise DataError.
RenderedComparison cmd_compare(const std::vector<std::filesystem::path>& run_dirs,
                               const std::optional<std::filesystem::path>& out_json);

/// Full command-line entry point. Failures print one line
/// "error[<category>]: <message>" to `err` and return a nonzero exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cliff
