// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "cliff/baseline_models.hpp"
#include "cliff/cliff_model.hpp"
#include "cliff/trainer.hpp"

namespace cliff {

template <typename Model>
using TaskEndHook = std::function<void(const Model&, std::size_t task)>;

struct NaiveRun {
  GrowingHeadModel model;
  std::vector<EpochRecord> history;
};

/// Sequential fine-tuning of every weight with cross-entropy on each task in
/// turn; the head grows by C rows per task. Task 0 runs for epochs_base,
/// later tasks for epochs_incremental, all at lr_base.
NaiveRun train_naive_finetune(std::span<const MaterialTask> tasks, const TrainConfig& config,
                              const VitConfig& vit, std::uint64_t model_seed,
                              const TaskEndHook<GrowingHeadModel>& on_task_end = {});

struct JointRun {
  GrowingHeadModel model;
  std::vector<EpochRecord> history;
};

/// All tasks concatenated in task order.
std::vector<FlakeSample> joint_training_set(std::span<const MaterialTask> tasks);
/// Batches (indices into joint_training_set) that train_joint uses in `epoch`.
std::vector<std::vector<std::size_t>> joint_epoch_batches(std::size_t union_size, const TrainConfig& config,
                                                          std::size_t epoch);

/// One training phase over the union with C*M labels for epochs_base epochs.
JointRun train_joint(std::span<const MaterialTask> tasks, const TrainConfig& config, const VitConfig& vit,
                     std::uint64_t model_seed);

struct L2PRun {
  L2PModel model;
  std::vector<EpochRecord> history;
};

/// Base phase identical to CLIFF's (same backbone init and data order), then
/// per task: grow the head and train keys, pool prompts and head with
/// CE + l2p_key_weight * key pull for epochs_incremental at lr_incremental.
L2PRun train_l2p_baseline(std::span<const MaterialTask> tasks, const TrainConfig& config,
                          const CliffConfig& model_config, const TaskEndHook<L2PModel>& on_task_end = {});

}  // namespace cliff
