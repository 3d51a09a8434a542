// SPDX-License-Identifier: Apache-2.0
#include "cliff/baselines.hpp"

#include "cliff/errors.hpp"

namespace cliff {

namespace {

constexpr std::uint64_t kTagNaive = 0x4A1E;
constexpr std::uint64_t kTagJoint = 0x101A;
constexpr std::uint64_t kTagL2P = 0x12B0;

void require_tasks(std::span<const MaterialTask> tasks) {
  if (tasks.empty()) throw DataError("no tasks to train on");
  for (const auto& t : tasks)
    if (t.split.train.empty()) throw DataError("task '" + t.profile.name + "' has no training samples");
}

}  // namespace

NaiveRun train_naive_finetune(std::span<const MaterialTask> tasks, const TrainConfig& config,
                              const VitConfig& vit, std::uint64_t model_seed,
                              const TaskEndHook<GrowingHeadModel>& on_task_end) {
  require_tasks(tasks);
  config.validate();
  NaiveRun run{GrowingHeadModel(vit, model_seed), {}};
  auto& model = run.model;
  for (std::size_t m = 0; m < tasks.size(); ++m) {
    model.add_material(tasks[m].profile.name);
    const std::size_t offset = m * kNumClasses;
    auto records = train_cross_entropy(
        tensors_of(model.parameters()), tasks[m].split.train,
        [&](const Tensor& img) { return model.global_scores(img); },
        [offset](const FlakeSample& s) { return offset + s.label(); },
        m == 0 ? config.epochs_base : config.epochs_incremental, config.lr_base, config, "naive", "task", m,
        kTagNaive);
    run.history.insert(run.history.end(), records.begin(), records.end());
    if (on_task_end) on_task_end(model, m);
  }
  return run;
}

std::vector<FlakeSample> joint_training_set(std::span<const MaterialTask> tasks) {
  std::vector<FlakeSample> out;
  for (std::size_t m = 0; m < tasks.size(); ++m)
    for (FlakeSample s : tasks[m].split.train) {
      s.material_id = m;
      out.push_back(std::move(s));
    }
  return out;
}

std::vector<std::vector<std::size_t>> joint_epoch_batches(std::size_t union_size, const TrainConfig& config,
                                                          std::size_t epoch) {
  Rng rng(epoch_seed(config.seed, kTagJoint, 0, epoch));
  return epoch_batches(union_size, config.batch_size, rng);
}

JointRun train_joint(std::span<const MaterialTask> tasks, const TrainConfig& config, const VitConfig& vit,
                     std::uint64_t model_seed) {
  require_tasks(tasks);
  config.validate();
  JointRun run{GrowingHeadModel(vit, model_seed), {}};
  auto& model = run.model;
  for (const auto& t : tasks) model.add_material(t.profile.name);
  const auto data = joint_training_set(tasks);
  run.history = train_cross_entropy(
      tensors_of(model.parameters()), data, [&](const Tensor& img) { return model.global_scores(img); },
      [](const FlakeSample& s) { return s.global_label(); }, config.epochs_base, config.lr_base, config, "joint",
      "joint", 0, kTagJoint);
  return run;
}

L2PRun train_l2p_baseline(std::span<const MaterialTask> tasks, const TrainConfig& config,
                          const CliffConfig& model_config, const TaskEndHook<L2PModel>& on_task_end) {
  require_tasks(tasks);
  config.validate();
  CliffModel base(model_config);
  std::vector<EpochRecord> history = train_base_phase(base, tasks[0], config, "l2p");

  L2PConfig l2p;
  l2p.pool_size = config.l2p_pool_size;
  l2p.top_k = config.l2p_top_k;
  l2p.prompt_length = model_config.prompt_length;
  L2PRun run{L2PModel(base.backbone().clone(), l2p, model_config.seed), std::move(history)};
  auto& model = run.model;

  for (std::size_t m = 0; m < tasks.size(); ++m) {
    model.add_material(tasks[m].profile.name);
    Optimizer opt(tensors_of(model.trainable_parameters()), {OptimizerKind::Adam, config.lr_incremental});
    const std::size_t offset = m * kNumClasses;
    const BatchLossFn loss_fn = [&](std::span<const FlakeSample> batch) {
      std::vector<Tensor> rows, pulls;
      std::vector<std::size_t> targets;
      BatchOutcome out;
      for (const auto& s : batch) {
        L2PModel::Output o = model.forward(s.image);
        targets.push_back(offset + s.label());
        if (argmax_lowest(o.logits.data()) == targets.back()) ++out.correct;
        rows.push_back(std::move(o.logits));
        pulls.push_back(reshape(o.key_loss, {1, 1}));
      }
      const Tensor ce = softmax_cross_entropy(concat_rows(rows), targets);
      const Tensor pull = mean(concat_last(pulls));
      out.loss = add(ce, scale(pull, config.l2p_key_weight));
      out.cls = ce.item();
      out.counted = batch.size();
      return out;
    };
    for (std::size_t e = 0; e < config.epochs_incremental; ++e) {
      EpochRecord rec = run_epoch(opt, tasks[m].split.train, loss_fn, config, epoch_seed(config.seed, kTagL2P, m, e));
      rec.method = "l2p";
      rec.phase = "task";
      rec.task = m;
      rec.epoch = e;
      run.history.push_back(std::move(rec));
    }
    if (on_task_end) on_task_end(model, m);
  }
  return run;
}

}  // namespace cliff
