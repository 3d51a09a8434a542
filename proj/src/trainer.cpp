// SPDX-License-Identifier: Apache-2.0
#include "cliff/trainer.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "cliff/checkpoint.hpp"
#include "cliff/errors.hpp"

namespace cliff {

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (lambda_gate < 0.0f || lambda_mem < 0.0f || lambda_kd < 0.0f)
    throw ConfigError("loss coefficients must be >= 0");
  if (!(kd_temperature > 0.0f)) throw ConfigError("kd_temperature must be > 0");
  if (!(gate_temperature > 0.0f)) throw ConfigError("gate_temperature must be > 0");
  if (buffer_per_task < kNumClasses)
    throw ConfigError("buffer_per_task must be >= " + std::to_string(kNumClasses));
  if (lr_base < 0.0f || lr_incremental < 0.0f) throw ConfigError("learning rates must be >= 0");
  if (l2p_pool_size == 0 || l2p_top_k == 0 || l2p_top_k > l2p_pool_size)
    throw ConfigError("l2p_top_k must be in [1, l2p_pool_size]");
  if (l2p_key_weight < 0.0f) throw ConfigError("l2p_key_weight must be >= 0");
}

std::string history_csv(std::span<const EpochRecord> records) {
  std::ostringstream out;
  out.precision(9);
  out << "method,phase,task,epoch,loss,loss_cls,loss_gate,loss_mem,loss_kd,train_accuracy\n";
  for (const auto& r : records)
    out << r.method << ',' << r.phase << ',' << r.task << ',' << r.epoch << ',' << r.loss << ',' << r.loss_cls
        << ',' << r.loss_gate << ',' << r.loss_mem << ',' << r.loss_kd << ',' << r.train_accuracy << '\n';
  return out.str();
}

void write_history_csv(const std::filesystem::path& path, std::span<const EpochRecord> records) {
  write_text_atomic(path, history_csv(records));
}

// ---------------------------------------------------------------------------

void MemoryBuffer::add_task(std::size_t task, std::span<const FlakeSample> exemplars) {
  if (count_for_task(task) != 0) throw StateError("memory buffer already holds task " + std::to_string(task));
  if (exemplars.size() > capacity_)
    throw StateError("memory buffer: " + std::to_string(exemplars.size()) + " exemplars exceed the per-task capacity " +
                     std::to_string(capacity_));
  for (const auto& s : exemplars) entries_.push_back({s, task});
}

std::size_t MemoryBuffer::count_for_task(std::size_t task) const {
  return static_cast<std::size_t>(
      std::count_if(entries_.begin(), entries_.end(), [&](const MemoryEntry& e) { return e.task == task; }));
}

std::vector<const MemoryEntry*> MemoryBuffer::sample(std::size_t n, Rng& rng) const {
  std::vector<std::size_t> idx(entries_.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(idx));
  idx.resize(std::min(n, idx.size()));
  std::vector<const MemoryEntry*> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(&entries_[i]);
  return out;
}

std::vector<FlakeSample> build_buffer_exemplars(std::span<const FlakeSample> data, std::size_t task,
                                                std::size_t per_task, std::uint64_t seed) {
  if (per_task < kNumClasses)
    throw ParameterError("build_buffer_exemplars: need at least one exemplar per class");
  std::array<std::vector<std::size_t>, kNumClasses> by_class;
  for (std::size_t i = 0; i < data.size(); ++i) by_class[data[i].label()].push_back(i);
  Rng rng(derive_seed(seed, 0xB0FF0000ULL + task));
  std::vector<FlakeSample> out;
  out.reserve(per_task);
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const std::size_t quota = per_task / kNumClasses + (c < per_task % kNumClasses ? 1 : 0);
    auto& pool = by_class[c];
    if (pool.empty())
      throw DataError("build_buffer_exemplars: class " + std::string(thickness_name(thickness_from_index(c))) +
                      " has no samples in task " + std::to_string(task));
    if (pool.size() < quota)
      throw DataError("build_buffer_exemplars: class " + std::string(thickness_name(thickness_from_index(c))) +
                      " has " + std::to_string(pool.size()) + " samples, quota is " + std::to_string(quota));
    rng.shuffle(std::span<std::size_t>(pool));
    pool.resize(quota);
    std::sort(pool.begin(), pool.end());
    for (std::size_t i : pool) out.push_back(data[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::uint64_t epoch_seed(std::uint64_t root, std::uint64_t phase_tag, std::size_t task, std::size_t epoch) {
  return derive_seed(derive_seed(derive_seed(root, phase_tag), task), epoch);
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw ParameterError("batch_size must be >= 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch_size)
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
  return out;
}

EpochRecord run_epoch(Optimizer& optimizer, std::span<const FlakeSample> data, const BatchLossFn& loss_fn,
                      const TrainConfig& config, std::uint64_t seed) {
  if (data.empty()) throw DataError("training set is empty");
  Rng rng(seed);
  EpochRecord rec;
  std::size_t correct = 0, counted = 0;
  const auto batches = epoch_batches(data.size(), config.batch_size, rng);
  std::vector<FlakeSample> batch;
  for (const auto& idx : batches) {
    batch.clear();
    for (std::size_t i : idx) batch.push_back(config.augment ? augment(data[i], rng) : data[i]);
    optimizer.zero_grad();
    BatchOutcome out = loss_fn(batch);
    out.loss.backward();
    optimizer.step();
    const double w = static_cast<double>(idx.size());
    rec.loss += out.loss.item() * w;
    rec.loss_cls += out.cls * w;
    rec.loss_gate += out.gate * w;
    rec.loss_mem += out.mem * w;
    rec.loss_kd += out.kd * w;
    correct += out.correct;
    counted += out.counted;
  }
  const double n = static_cast<double>(data.size());
  rec.loss /= n;
  rec.loss_cls /= n;
  rec.loss_gate /= n;
  rec.loss_mem /= n;
  rec.loss_kd /= n;
  rec.train_accuracy = counted ? 100.0 * static_cast<double>(correct) / static_cast<double>(counted) : 0.0;
  return rec;
}

double accuracy(std::span<const FlakeSample> data, const std::function<Tensor(const Tensor&)>& logits_fn,
                const std::function<std::size_t(const FlakeSample&)>& target_fn) {
  if (data.empty()) return 0.0;
  NoGradGuard no_grad;
  std::size_t correct = 0;
  for (const auto& s : data)
    if (argmax_lowest(logits_fn(s.image).data()) == target_fn(s)) ++correct;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(data.size());
}

std::vector<EpochRecord> train_cross_entropy(const std::vector<Tensor>& params, std::span<const FlakeSample> data,
                                             const std::function<Tensor(const Tensor&)>& logits_fn,
                                             const std::function<std::size_t(const FlakeSample&)>& target_fn,
                                             std::size_t epochs, float lr, const TrainConfig& config,
                                             const std::string& method, const std::string& phase,
                                             std::size_t task, std::uint64_t phase_tag) {
  if (data.empty()) throw DataError(method + " " + phase + ": training set is empty");
  Optimizer opt(params, {OptimizerKind::Adam, lr});
  const BatchLossFn loss_fn = [&](std::span<const FlakeSample> batch) {
    std::vector<Tensor> rows;
    std::vector<std::size_t> targets;
    BatchOutcome out;
    for (const auto& s : batch) {
      rows.push_back(logits_fn(s.image));
      targets.push_back(target_fn(s));
      if (argmax_lowest(rows.back().data()) == targets.back()) ++out.correct;
    }
    out.counted = batch.size();
    out.loss = softmax_cross_entropy(concat_rows(rows), targets);
    out.cls = out.loss.item();
    return out;
  };
  std::vector<EpochRecord> history;
  for (std::size_t e = 0; e < epochs; ++e) {
    EpochRecord rec = run_epoch(opt, data, loss_fn, config, epoch_seed(config.seed, phase_tag, task, e));
    rec.method = method;
    rec.phase = phase;
    rec.task = task;
    rec.epoch = e;
    history.push_back(std::move(rec));
  }
  return history;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::uint64_t kTagBase = 0xBA5E;
constexpr std::uint64_t kTagTask = 0x7A5C;
constexpr std::uint64_t kTagReplay = 0x4E91;

Tensor as_row(const Tensor& scalar) { return reshape(scalar, {1, 1}); }

Tensor gate_logits(const CliffModel& model, const Tensor& z, std::size_t material, float temperature) {
  const std::size_t M = model.num_materials();
  if (M == 0) throw StateError("gate_loss: no materials registered");
  if (material >= M)
    throw IndexError("gate_loss: material " + std::to_string(material) + " >= " + std::to_string(M));
  const Tensor q = model.gate_projection()(z);
  std::vector<Tensor> cols;
  cols.reserve(M);
  for (std::size_t i = 0; i < M; ++i) {
    const Tensor e = i == material ? model.embedding(i) : model.embedding(i).detach();
    cols.push_back(as_row(scale(cosine_similarity(q, e), 1.0f / temperature)));
  }
  return concat_last(cols);
}

}  // namespace

Tensor gate_loss(const CliffModel& model, const Tensor& z, std::size_t material, float temperature) {
  if (!(temperature > 0.0f)) throw ParameterError("gate temperature must be > 0");
  const std::size_t target[] = {material};
  return softmax_cross_entropy(gate_logits(model, z, material, temperature), target);
}

LossTerms cliff_batch_loss(const CliffModel& model, const CliffModel* teacher, std::size_t material,
                           std::span<const FlakeSample> current, std::span<const MemoryEntry* const> replay,
                           const TrainConfig& config) {
  const std::size_t M = model.num_materials();
  if (material >= M) throw IndexError("cliff_batch_loss: material " + std::to_string(material) + " not registered");
  if (current.empty()) throw DataError("cliff_batch_loss: empty batch");
  if (M > 1 && config.lambda_kd > 0.0f && !teacher)
    throw ConfigError("distillation weight > 0 with more than one material requires a teacher snapshot");
  if (M > 1 && config.lambda_mem > 0.0f && replay.empty())
    throw ConfigError("replay weight > 0 with more than one material requires a non-empty memory buffer");

  LossTerms t;
  std::vector<Tensor> cls_rows, gate_rows;
  std::vector<std::size_t> cls_targets, gate_targets;
  // Blocks of frozen materials carry no trainable state, so their features
  // are computed without recording a graph.
  const auto features_for = [&](const Tensor& image, const Tensor& z_current) {
    std::vector<Tensor> feats;
    feats.reserve(M);
    for (std::size_t i = 0; i < M; ++i) {
      if (i == material) {
        feats.push_back(z_current);
      } else {
        NoGradGuard no_grad;
        feats.push_back(model.prompted_features(image, i));
      }
    }
    return feats;
  };

  for (const auto& s : current) {
    const Tensor z = model.prompted_features(s.image, material);
    const std::vector<Tensor> feats = config.cls_own_prompts ? features_for(s.image, z) : std::vector<Tensor>(M, z);
    cls_rows.push_back(model.assemble_global(model.base_logits(s.image), feats));
    cls_targets.push_back(material * kNumClasses + s.label());
    if (argmax_lowest(cls_rows.back().data()) == cls_targets.back()) ++t.correct;
    gate_rows.push_back(gate_logits(model, z, material, config.gate_temperature));
    gate_targets.push_back(material);
  }
  t.cls = softmax_cross_entropy(concat_rows(cls_rows), cls_targets);
  t.gate = softmax_cross_entropy(concat_rows(gate_rows), gate_targets);

  if (replay.empty()) {
    t.mem = Tensor::scalar(0.0f);
    t.kd = Tensor::scalar(0.0f);
  } else {
    std::vector<Tensor> mem_rows, teacher_rows;
    std::vector<std::size_t> mem_targets;
    for (const MemoryEntry* e : replay) {
      const Tensor& img = e->sample.image;
      const std::vector<Tensor> feats = features_for(img, model.prompted_features(img, material));
      mem_rows.push_back(model.assemble_global(model.base_logits(img), feats));
      mem_targets.push_back(e->task * kNumClasses + e->sample.label());
      if (teacher) {
        NoGradGuard no_grad;
        teacher_rows.push_back(teacher->global_logits(img));
      }
    }
    const Tensor student = concat_rows(mem_rows);
    t.mem = softmax_cross_entropy(student, mem_targets);
    if (teacher) {
      const std::size_t past = teacher->num_materials() * kNumClasses;
      if (past > student.dim(1)) throw DimensionError("teacher has more materials than the student");
      t.kd = kl_divergence_with_temperature(slice_last(student, 0, past), concat_rows(teacher_rows),
                                            config.kd_temperature);
    } else {
      t.kd = Tensor::scalar(0.0f);
    }
  }
  t.total = add(add(add(t.cls, scale(t.gate, config.lambda_gate)), scale(t.mem, config.lambda_mem)),
                scale(t.kd, config.lambda_kd));
  return t;
}

// ---------------------------------------------------------------------------

CliffTrainer::CliffTrainer(const TrainConfig& train, const CliffConfig& model_config)
    : config_(train), model_(model_config), buffer_(train.buffer_per_task) {
  config_.validate();
}

double CliffTrainer::base_accuracy(std::span<const FlakeSample> data) const {
  return accuracy(
      data, [&](const Tensor& img) { return model_.base_logits(img); },
      [](const FlakeSample& s) { return s.label(); });
}

std::vector<EpochRecord> train_base_phase(CliffModel& model, const MaterialTask& task0, const TrainConfig& config,
                                          const std::string& method) {
  if (model.num_materials() != 0) throw StateError("train_base: model already has registered materials");
  if (task0.split.train.empty()) throw DataError("train_base: task 0 has no training samples");
  set_trainable(model.base_parameters(), true);
  auto records = train_cross_entropy(
      tensors_of(model.base_parameters()), task0.split.train,
      [&](const Tensor& img) { return model.base_logits(img); }, [](const FlakeSample& s) { return s.label(); },
      config.epochs_base, config.lr_base, config, method, "base", 0, kTagBase);
  model.freeze_base();
  return records;
}

void CliffTrainer::train_base(const MaterialTask& task0) {
  auto records = train_base_phase(model_, task0, config_);
  history_.insert(history_.end(), records.begin(), records.end());
  if (hooks_.on_base_frozen) hooks_.on_base_frozen(model_);
  train_components(task0, 0);
}

void CliffTrainer::train_incremental(const MaterialTask& task) {
  if (model_.num_materials() == 0) throw StateError("train_incremental: call train_base first");
  train_components(task, model_.num_materials());
}

void CliffTrainer::run(std::span<const MaterialTask> tasks) {
  if (tasks.empty()) throw DataError("no tasks to train on");
  train_base(tasks[0]);
  for (std::size_t m = 1; m < tasks.size(); ++m) train_incremental(tasks[m]);
}

void CliffTrainer::train_components(const MaterialTask& task, std::size_t expected) {
  if (task.split.train.empty()) throw DataError("task '" + task.profile.name + "' has no training samples");
  const std::size_t m = model_.add_material(task.profile.name);
  if (m != expected) throw StateError("material index mismatch");
  if (hooks_.on_material_added) hooks_.on_material_added(model_, m);

  const ParamList gate = model_.gate_projection().parameters("gate_proj.");
  set_trainable(gate, true);
  std::vector<Tensor> params = tensors_of(model_.material_parameters(m));
  for (const auto& p : gate) params.push_back(p.tensor);
  Optimizer opt(params, {OptimizerKind::Adam, config_.lr_incremental});

  const bool use_replay = m > 0 && (config_.lambda_mem > 0.0f || config_.lambda_kd > 0.0f);
  const CliffModel* teacher = m > 0 && config_.lambda_kd > 0.0f ? this->teacher() : nullptr;
  Rng replay_rng(epoch_seed(config_.seed, kTagReplay, m, 0));
  const BatchLossFn loss_fn = [&](std::span<const FlakeSample> batch) {
    std::vector<const MemoryEntry*> replay;
    if (use_replay) replay = buffer_.sample(config_.replay_batch, replay_rng);
    LossTerms t = cliff_batch_loss(model_, teacher, m, batch, replay, config_);
    BatchOutcome out;
    out.cls = t.cls.item();
    out.gate = t.gate.item();
    out.mem = t.mem.item();
    out.kd = t.kd.item();
    out.loss = std::move(t.total);
    out.correct = t.correct;
    out.counted = batch.size();
    return out;
  };
  for (std::size_t e = 0; e < config_.epochs_incremental; ++e) {
    EpochRecord rec = run_epoch(opt, task.split.train, loss_fn, config_, epoch_seed(config_.seed, kTagTask, m, e));
    rec.method = "cliff";
    rec.phase = "task";
    rec.task = m;
    rec.epoch = e;
    history_.push_back(std::move(rec));
  }
  set_trainable(gate, false);
  finish_task(task, m);
}

void CliffTrainer::finish_task(const MaterialTask& task, std::size_t material) {
  set_trainable(model_.material_parameters(material), false);
  const auto exemplars = build_buffer_exemplars(task.split.train, material, config_.buffer_per_task, config_.seed);
  buffer_.add_task(material, exemplars);
  teacher_.emplace(model_.clone());
  set_trainable(teacher_->parameters(), false);
  if (hooks_.on_task_end) hooks_.on_task_end(model_, material);
}

}  // namespace cliff
