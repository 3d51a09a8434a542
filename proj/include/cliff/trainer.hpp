// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cliff/cliff_model.hpp"
#include "cliff/optim.hpp"
#include "cliff/synth.hpp"

namespace cliff {

struct TrainConfig {
  std::size_t epochs_base = 30;
  std::size_t epochs_incremental = 20;
  std::size_t batch_size = 16;
  float lr_base = 1e-3f;
  float lr_incremental = 1e-2f;
  float lambda_gate = 0.1f;
  float lambda_mem = 1.0f;
  float lambda_kd = 0.5f;
  float kd_temperature = 2.0f;
  float gate_temperature = 0.1f;
  std::size_t buffer_per_task = 30;
  std::size_t replay_batch = 8;
  bool augment = true;
  /// Current-task logits for L_cls: each block on its own material's
  /// prompt (as at inference) when true, all blocks on the current prompt
  /// when false.
  bool cls_own_prompts = true;
  std::uint64_t seed = 0;

  // Prompt-pool baseline.
  std::size_t l2p_pool_size = 8;
  std::size_t l2p_top_k = 2;
  float l2p_key_weight = 0.5f;

  void validate() const;
};

/// One line of the training history CSV.
struct EpochRecord {
  std::string method;
  std::string phase;  // "base", "task", "joint"
  std::size_t task = 0;
  std::size_t epoch = 0;
  double loss = 0.0;
  double loss_cls = 0.0;
  double loss_gate = 0.0;
  double loss_mem = 0.0;
  double loss_kd = 0.0;
  double train_accuracy = 0.0;  // percent
};

std::string history_csv(std::span<const EpochRecord> records);
void write_history_csv(const std::filesystem::path& path, std::span<const EpochRecord> records);

// ---------------------------------------------------------------------------
// Memory buffer

struct MemoryEntry {
  FlakeSample sample;
  std::size_t task = 0;
};

/// Fixed per-task quota of stored exemplars.
class MemoryBuffer {
 public:
  explicit MemoryBuffer(std::size_t per_task_capacity) : capacity_(per_task_capacity) {}

  /// Stores a finished task's exemplars. Throws StateError if the task is
  /// already present or the quota would be exceeded.
  void add_task(std::size_t task, std::span<const FlakeSample> exemplars);

  std::span<const MemoryEntry> entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t capacity_per_task() const { return capacity_; }
  std::size_t count_for_task(std::size_t task) const;

  /// `n` distinct entries drawn uniformly (all entries when n >= size()).
  std::vector<const MemoryEntry*> sample(std::size_t n, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::vector<MemoryEntry> entries_;
};

/// Uniformly random class-balanced subset of `data`: `per_task` entries with
/// quotas differing by at most one across classes (lower classes take the
/// remainder). Seeded by (seed, task). Throws DataError when a class has
/// fewer samples than its quota or none at all.
std::vector<FlakeSample> build_buffer_exemplars(std::span<const FlakeSample> data, std::size_t task,
                                                std::size_t per_task, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Generic minibatch loop

struct BatchOutcome {
  Tensor loss;
  std::size_t correct = 0;
  std::size_t counted = 0;
  // Term values for the history; zero when unused.
  double cls = 0.0, gate = 0.0, mem = 0.0, kd = 0.0;
};

using BatchLossFn = std::function<BatchOutcome(std::span<const FlakeSample>)>;

/// Shuffled, optionally augmented minibatch order for one epoch.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, Rng& rng);

/// One pass over `data`; returns the epoch record with mean loss terms.
EpochRecord run_epoch(Optimizer& optimizer, std::span<const FlakeSample> data, const BatchLossFn& loss_fn,
                      const TrainConfig& config, std::uint64_t epoch_seed);

/// Per-epoch seed for (phase tag, task, epoch).
std::uint64_t epoch_seed(std::uint64_t root, std::uint64_t phase_tag, std::size_t task, std::size_t epoch);

/// Percentage of samples whose argmax of `logits_fn` equals `target_fn`.
double accuracy(std::span<const FlakeSample> data, const std::function<Tensor(const Tensor&)>& logits_fn,
                const std::function<std::size_t(const FlakeSample&)>& target_fn);

// ---------------------------------------------------------------------------
// CLIFF losses

/// Cosine-similarity gate: logits_i = cos(proj(z), e_i) / temperature over all
/// registered materials, cross-entropy against `material`. Embeddings other
/// than `material`'s are detached.
Tensor gate_loss(const CliffModel& model, const Tensor& z, std::size_t material, float temperature);

struct LossTerms {
  Tensor cls, gate, mem, kd;
  Tensor total;
  std::size_t correct = 0;  // current-task samples whose global argmax is right
};

/// Four-term objective for one batch of task `material`:
///   L = L_cls + lambda_gate L_gate + lambda_mem L_mem + lambda_kd L_kd.
/// `replay` may be empty; `teacher` may be null when lambda_kd == 0 or M == 1.
LossTerms cliff_batch_loss(const CliffModel& model, const CliffModel* teacher, std::size_t material,
                           std::span<const FlakeSample> current, std::span<const MemoryEntry* const> replay,
                           const TrainConfig& config);

// ---------------------------------------------------------------------------
// CLIFF sequence

struct CliffHooks {
  /// After the base phase, with backbone and base head frozen.
  std::function<void(const CliffModel&)> on_base_frozen;
  /// Right after add_material, before any step on the new components.
  std::function<void(const CliffModel&, std::size_t material)> on_material_added;
  /// After a task's components are trained and frozen.
  std::function<void(const CliffModel&, std::size_t task)> on_task_end;
};

/// Drives base training and per-material incremental training, owning the
/// model, the memory buffer and the teacher snapshot.
class CliffTrainer {
 public:
  CliffTrainer(const TrainConfig& train, const CliffConfig& model_config);

  CliffModel& model() { return model_; }
  const CliffModel& model() const { return model_; }
  const MemoryBuffer& buffer() const { return buffer_; }
  const CliffModel* teacher() const { return teacher_ ? &*teacher_ : nullptr; }
  const TrainConfig& config() const { return config_; }
  CliffHooks& hooks() { return hooks_; }
  std::span<const EpochRecord> history() const { return history_; }

  /// Backbone + base head by cross-entropy on task 0, then freeze, register
  /// task 0's components and train them (no replay yet), seed the buffer and
  /// take the first teacher snapshot.
  void train_base(const MaterialTask& task0);
  /// Registers the task's material and trains its components with the full
  /// objective; appends exemplars and refreshes the teacher afterwards.
  void train_incremental(const MaterialTask& task);
  /// train_base on tasks[0] then train_incremental on the rest.
  void run(std::span<const MaterialTask> tasks);

  /// Base-head accuracy (percent) on a set, unprompted.
  double base_accuracy(std::span<const FlakeSample> data) const;

 private:
  void train_components(const MaterialTask& task, std::size_t material);
  void finish_task(const MaterialTask& task, std::size_t material);

  TrainConfig config_;
  CliffModel model_;
  MemoryBuffer buffer_;
  std::optional<CliffModel> teacher_;
  CliffHooks hooks_;
  std::vector<EpochRecord> history_;
};

/// Cross-entropy training of backbone + base head on task 0 followed by
/// freezing both. Deterministic in (config.seed, model seed).
std::vector<EpochRecord> train_base_phase(CliffModel& model, const MaterialTask& task0, const TrainConfig& config,
                                          const std::string& method = "cliff");

/// Trains `params` so that `logits_fn(image)` predicts `target_fn(sample)`
/// by cross-entropy; shared by the base phase and the baselines.
std::vector<EpochRecord> train_cross_entropy(const std::vector<Tensor>& params, std::span<const FlakeSample> data,
                                             const std::function<Tensor(const Tensor&)>& logits_fn,
                                             const std::function<std::size_t(const FlakeSample&)>& target_fn,
                                             std::size_t epochs, float lr, const TrainConfig& config,
                                             const std::string& method, const std::string& phase,
                                             std::size_t task, std::uint64_t phase_tag);

}  // namespace cliff
