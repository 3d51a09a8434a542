// SPDX-License-Identifier: Apache-2.0
// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits nonzero if any criterion fails.
#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cliff/app.hpp"
#include "cliff/baselines.hpp"
#include "cliff/checkpoint.hpp"
#include "cliff/eval.hpp"
#include "cliff/trainer.hpp"
#include "published_matrices.hpp"

using namespace cliff;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

constexpr std::uint64_t kSeed = 0;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct Verdict {
  int id;
  std::string name;
  bool pass;
  std::string detail;
};

std::vector<Verdict> verdicts;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  verdicts.push_back({id, name, pass, detail});
  std::cout << "criterion " << id << " " << (pass ? "PASS" : "FAIL") << ": " << name << " | " << detail << "\n"
            << std::flush;
}

// ---------------------------------------------------------------------------

void criterion_metrics() {
  const auto t0 = Clock::now();
  using namespace cliff::testing;
  struct Expect {
    const char* what;
    double got, want;
  };
  const Expect cases[] = {
      {"joint avg", avg_accuracy(published_joint()), 92.11},
      {"naive avg", avg_accuracy(published_naive()), 17.85},
      {"naive forgetting", forgetting(published_naive()), 84.20},
      {"l2p avg", avg_accuracy(published_l2p()), 36.99},
      {"l2p forgetting", forgetting(published_l2p()), 59.73},
      {"cliff avg", avg_accuracy(published_cliff()), 56.96},
      {"cliff forgetting", forgetting(published_cliff()), 34.80},
  };
  bool ok = true;
  double worst = 0.0;
  for (const auto& c : cases) {
    worst = std::max(worst, std::abs(c.got - c.want));
    ok = ok && std::abs(c.got - c.want) <= 0.005;
  }
  const double secs = seconds_since(t0);
  ok = ok && secs < 1.0;
  report(1, "metric arithmetic on published matrices", ok,
         "8 summary values (joint forgetting undefined), max |diff| " + fmt("%.4f", worst) + ", " +
             fmt("%.3f", secs) + " s");
}

// ---------------------------------------------------------------------------

Tensor random_param(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  return Tensor::randn(std::move(shape), rng, 1.0f, true);
}

Tensor weighted(const Tensor& y, std::uint64_t seed = 99) {
  Rng rng(seed);
  return sum(multiply(y, Tensor::randn(y.shape(), rng, 1.0f)));
}

void criterion_gradients() {
  const auto t0 = Clock::now();
  GradCheckOptions opt;
  opt.step = 1e-2f;
  Tensor a = random_param({3, 4}, 21), b = random_param({3, 4}, 22), c = random_param({4, 5}, 20);
  Tensor w = random_param({5, 4}, 23), bias = random_param({5}, 24), row = random_param({4}, 25);
  Tensor v = random_param({6}, 26), u = random_param({6}, 27);
  Tensor gamma = random_param({4}, 28), beta = random_param({4}, 29), table = random_param({5, 3}, 30);
  const Tensor teacher = Tensor::from_data(b.shape(), {b.data().begin(), b.data().end()});
  const std::size_t idx[] = {4, 0, 4};
  const std::size_t targets[] = {0, 3, 1};

  struct Case {
    const char* op;
    std::function<Tensor()> fn;
    std::vector<Tensor> inputs;
  };
  const std::vector<Case> cases = {
      {"matmul", [&] { return weighted(matmul(a, c)); }, {a, c}},
      {"linear", [&] { return weighted(linear(a, w, bias)); }, {a, w, bias}},
      {"add", [&] { return weighted(add(a, b)); }, {a, b}},
      {"add_row", [&] { return weighted(add_row(a, row)); }, {a, row}},
      {"add_scalar", [&] { return weighted(add_scalar(a, 0.7f)); }, {a}},
      {"multiply", [&] { return weighted(multiply(a, b)); }, {a, b}},
      {"scale", [&] { return weighted(scale(a, -1.3f)); }, {a}},
      {"transpose", [&] { return weighted(transpose(a)); }, {a}},
      {"reshape", [&] { return weighted(reshape(a, {2, 6})); }, {a}},
      {"concat_last", [&] { const Tensor p[] = {a, b}; return weighted(concat_last(p)); }, {a, b}},
      {"concat_rows", [&] { const Tensor p[] = {a, b}; return weighted(concat_rows(p)); }, {a, b}},
      {"slice_last", [&] { return weighted(slice_last(a, 1, 3)); }, {a}},
      {"slice_rows", [&] { return weighted(slice_rows(a, 1, 3)); }, {a}},
      {"sum", [&] { return sum(a); }, {a}},
      {"mean", [&] { return mean(multiply(a, a)); }, {a}},
      {"layer_norm", [&] { return weighted(layer_norm(a, gamma, beta)); }, {a, gamma, beta}},
      {"gelu", [&] { return weighted(gelu(a)); }, {a}},
      {"softmax", [&] { return weighted(softmax(a)); }, {a}},
      {"embedding", [&] { return weighted(embedding(table, idx)); }, {table}},
      {"softmax_cross_entropy", [&] { return softmax_cross_entropy(a, targets); }, {a}},
      {"cosine_similarity", [&] { return cosine_similarity(v, u); }, {v, u}},
      {"kl_divergence_with_temperature", [&] { return kl_divergence_with_temperature(a, teacher, 2.0f); }, {a}},
  };
  double worst = 0.0;
  std::string worst_op;
  for (const auto& cs : cases) {
    std::vector<Tensor> in = cs.inputs;
    const double e = check_gradients(cs.fn, in, opt).max_relative_error;
    if (e > worst) {
      worst = e;
      worst_op = cs.op;
    }
  }

  VitConfig cfg;
  cfg.depth = 1;
  Rng rng(10);
  VisionTransformer vit(cfg, rng);
  Prompt prompt = Prompt::init(2, cfg.embed_dim, 0, rng);
  Tensor head_w = Tensor::randn({3, cfg.embed_dim}, rng, 0.3f, true);
  Tensor head_b = Tensor::zeros({3}, true);
  Rng img_rng(11);
  const Tensor img = render_flake(default_profiles()[1], 1, Thickness::Few, img_rng).image;
  const std::size_t target[] = {1};
  std::vector<Tensor> params = tensors_of(vit.parameters());
  params.push_back(prompt.tokens);
  params.push_back(prompt.positions);
  params.push_back(head_w);
  params.push_back(head_b);
  GradCheckOptions vopt = opt;
  vopt.max_entries = 200;
  const auto vr = check_gradients(
      [&] { return softmax_cross_entropy(linear(vit.forward(img, &prompt), head_w, head_b), target); }, params, vopt);

  const double secs = seconds_since(t0);
  const bool ok = worst <= 5e-3 && vr.max_relative_error <= 5e-3 && secs < 30.0;
  report(2, "finite-difference gradients", ok,
         std::to_string(cases.size()) + " ops max rel err " + fmt("%.2e", worst) + " (" + worst_op +
             "), 1-block ViT max rel err " + fmt("%.2e", vr.max_relative_error) + " over " +
             std::to_string(vr.entries_checked) + " entries, " + fmt("%.1f", secs) + " s");
}

// ---------------------------------------------------------------------------

struct SequentialResult {
  EvalMatrix matrix;
  double seconds = 0.0;
};

std::vector<std::string> task_names(const std::vector<MaterialTask>& tasks) {
  std::vector<std::string> out;
  for (const auto& t : tasks) out.push_back(t.profile.name);
  return out;
}

std::vector<std::vector<FlakeSample>> validation_sets(const std::vector<MaterialTask>& tasks) {
  std::vector<std::vector<FlakeSample>> out;
  for (const auto& t : tasks) out.push_back(t.split.validation);
  return out;
}

template <typename Model>
void add_eval_row(EvalMatrix& m, const Model& model, const std::vector<std::vector<FlakeSample>>& vals,
                  std::size_t step) {
  m.add_row(m.task_names[step], evaluate_step(model, std::span(vals).first(step + 1)));
}


std::string diagonal_text(const EvalMatrix& m) {
  std::string s;
  for (std::size_t t = 0; t < m.num_rows(); ++t) s += (t ? "/" : "") + fmt("%.1f", *m.acc[t][t]);
  return s;
}

bool diagonal_above(const EvalMatrix& m, double threshold) {
  for (std::size_t t = 0; t < m.num_rows(); ++t)
    if (!(*m.acc[t][t] > threshold)) return false;
  return true;
}

struct CliffRunChecks {
  SequentialResult result;
  double base_accuracy = 0.0;
  bool base_bitwise = false;
  bool past_bitwise = false;
  std::size_t preservation_checked = 0, preservation_mismatch = 0;
  double kd_max = 0.0;
  double gate_m1 = 0.0;
  double linearity_error = 0.0;
};

CliffRunChecks run_cliff_with_checks(const std::vector<MaterialTask>& tasks, const TrainConfig& train,
                                     const CliffConfig& model_cfg) {
  CliffRunChecks out;
  const auto vals = validation_sets(tasks);
  out.result.matrix.task_names = task_names(tasks);

  std::vector<Tensor> probes;
  for (std::size_t i = 0; probes.size() < 50; ++i) probes.push_back(tasks[i % 4].split.validation[i / 4].image);

  CliffTrainer tr(train, model_cfg);
  std::vector<std::vector<float>> base_snap;
  std::vector<std::vector<std::vector<float>>> task_snaps;

  tr.hooks().on_base_frozen = [&](const CliffModel& m) {
    base_snap = snapshot_values(m.base_parameters());
    out.base_accuracy = tr.base_accuracy(tasks[0].split.validation);
  };
  tr.hooks().on_material_added = [&](const CliffModel& m, std::size_t k) {
    NoGradGuard no_grad;
    for (const Tensor& img : probes) {
      const Tensor g = m.global_logits(img);
      ++out.preservation_checked;
      if (argmax_lowest(g.data().subspan(3 * k, 3)) != argmax_lowest(m.base_logits(img).data()))
        ++out.preservation_mismatch;
    }
    const auto first = std::span(tasks[k].split.train).first(train.batch_size);
    if (k == 0) {
      for (const auto& s : first)
        out.gate_m1 = std::max(out.gate_m1, static_cast<double>(std::abs(
                                                gate_loss(m, m.prompted_features(s.image, 0), 0, train.gate_temperature)
                                                    .item())));
      return;
    }
    Rng pick(derive_seed(train.seed, 0xACCE97 + k));
    const auto replay = tr.buffer().sample(train.replay_batch, pick);
    const LossTerms t = cliff_batch_loss(m, tr.teacher(), k, first, replay, train);
    out.kd_max = std::max(out.kd_max, static_cast<double>(std::abs(t.kd.item())));
  };
  tr.hooks().on_task_end = [&](const CliffModel& m, std::size_t t) {
    task_snaps.push_back(snapshot_values(m.material_parameters(t)));
    add_eval_row(out.result.matrix, m, vals, t);
  };

  const auto t0 = Clock::now();
  tr.run(tasks);
  out.result.seconds = seconds_since(t0);

  const CliffModel& m = tr.model();
  out.base_bitwise = bitwise_equal(m.base_parameters(), base_snap);
  out.past_bitwise = true;
  for (std::size_t t = 0; t < task_snaps.size(); ++t)
    out.past_bitwise = out.past_bitwise && bitwise_equal(m.material_parameters(t), task_snaps[t]);

  // Linearity on a fixed batch against a teacher that disagrees with the
  // student, so every term is nonzero.
  CliffModel teacher = m.clone();
  for (float& x : teacher.delta_head(0).fc2.bias.mutable_data()) x += 1.5f;
  Rng pick(5);
  const auto replay = tr.buffer().sample(train.replay_batch, pick);
  const auto batch = std::span(tasks[3].split.train).first(train.batch_size);
  TrainConfig weights = train;
  weights.lambda_gate = 0.37f;
  weights.lambda_mem = 1.3f;
  weights.lambda_kd = 0.61f;
  NoGradGuard no_grad;
  const LossTerms lt = cliff_batch_loss(m, &teacher, 3, batch, replay, weights);
  const double sum_terms = static_cast<double>(lt.cls.item()) + 0.37 * lt.gate.item() + 1.3 * lt.mem.item() +
                           0.61 * lt.kd.item();
  out.linearity_error = std::abs(lt.total.item() - sum_terms);
  if (!(lt.kd.item() > 0.0f)) out.linearity_error = INFINITY;
  return out;
}

// ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  const auto bytes = read_file_bytes(p);
  return {bytes.begin(), bytes.end()};
}

int run_cli_binary(const std::string& args, const fs::path& log) {
  const std::string cmd =
      "'" + std::string(CLIFF_CLI_PATH) + "' " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void criterion_determinism() {
  const auto t0 = Clock::now();
  const fs::path root = fs::temp_directory_path() / ("cliff_accept_" + std::to_string(std::random_device{}()));
  fs::create_directories(root);
  std::string detail;
  bool ok = true;
  std::string eval_json[2];
  for (int k = 0; k < 2 && ok; ++k) {
    const fs::path data = root / ("data" + std::to_string(k)), run = root / ("run" + std::to_string(k));
    const fs::path log = root / "log.txt";
    const std::string seed = " --seed " + std::to_string(kSeed);
    if (run_cli_binary("generate --out '" + data.string() + "'" + seed, log) != 0 ||
        run_cli_binary("train --method cliff --data-dir '" + data.string() + "' --out '" + run.string() + "'" + seed,
                       log) != 0 ||
        run_cli_binary("eval --run-dir '" + run.string() + "'", log) != 0) {
      ok = false;
      detail = "pipeline " + std::to_string(k) + " failed: " + slurp(log);
      break;
    }
    eval_json[k] = slurp(run / kEvalJson);
  }
  if (ok) {
    ok = !eval_json[0].empty() && eval_json[0] == eval_json[1];
    detail = std::string(ok ? "identical" : "different") + " eval.json (" + std::to_string(eval_json[0].size()) +
             " bytes), " + fmt("%.0f", seconds_since(t0)) + " s";
  }
  fs::remove_all(root);
  report(7, "generate -> train(cliff) -> eval twice is byte-identical", ok, detail);
}

}  // namespace

int main() {
  const auto suite_start = Clock::now();
  criterion_metrics();
  criterion_gradients();

  const auto tasks = default_benchmark(kSeed);
  const auto vals = validation_sets(tasks);
  TrainConfig train;
  train.seed = kSeed;
  CliffConfig model_cfg;
  model_cfg.seed = kSeed;

  const CliffRunChecks cliff = run_cliff_with_checks(tasks, train, model_cfg);
  std::cout << "# cliff matrix\n" << render_comparison(std::vector<MethodReport>{{"cliff", cliff.result.matrix}}).text;

  report(3, "freeze and preservation invariants after 4-task CLIFF training",
         cliff.base_bitwise && cliff.past_bitwise && cliff.preservation_mismatch == 0 &&
             cliff.preservation_checked == 200 && cliff.result.seconds < 12 * 60,
         std::string("backbone+base head ") + (cliff.base_bitwise ? "bitwise equal" : "CHANGED") +
             ", past materials " + (cliff.past_bitwise ? "bitwise equal" : "CHANGED") + ", new-block argmax " +
             std::to_string(cliff.preservation_checked - cliff.preservation_mismatch) + "/" +
             std::to_string(cliff.preservation_checked) + " match base, " + fmt("%.0f", cliff.result.seconds) +
             " s");

  SequentialResult naive, l2p, joint, ablation;
  {
    naive.matrix.task_names = task_names(tasks);
    const auto t0 = Clock::now();
    train_naive_finetune(tasks, train, model_cfg.vit, kSeed,
                         [&](const GrowingHeadModel& m, std::size_t t) { add_eval_row(naive.matrix, m, vals, t); });
    naive.seconds = seconds_since(t0);
  }
  {
    l2p.matrix.task_names = task_names(tasks);
    const auto t0 = Clock::now();
    train_l2p_baseline(tasks, train, model_cfg,
                       [&](const L2PModel& m, std::size_t t) { add_eval_row(l2p.matrix, m, vals, t); });
    l2p.seconds = seconds_since(t0);
  }
  {
    joint.matrix.task_names = task_names(tasks);
    const auto t0 = Clock::now();
    const JointRun r = train_joint(tasks, train, model_cfg.vit, kSeed);
    joint.matrix.add_row("Ensemble", evaluate_step(r.model, vals));
    joint.seconds = seconds_since(t0);
  }
  std::cout << "# baseline matrices\n"
            << render_comparison(std::vector<MethodReport>{
                                     {"naive", naive.matrix}, {"l2p", l2p.matrix}, {"joint", joint.matrix}})
                   .text;

  const double f_cliff = forgetting(cliff.result.matrix), f_l2p = forgetting(l2p.matrix),
               f_naive = forgetting(naive.matrix);
  const double a_cliff = avg_accuracy(cliff.result.matrix), a_naive = avg_accuracy(naive.matrix),
               a_joint = avg_accuracy(joint.matrix);
  const double slowest = std::max({cliff.result.seconds, naive.seconds, l2p.seconds, joint.seconds});
  report(4, "forgetting and accuracy ordering on the default benchmark",
         f_cliff < f_l2p && f_l2p < f_naive && f_naive - f_cliff >= 15.0 && a_joint >= a_cliff &&
             a_cliff >= a_naive && slowest < 10 * 60,
         "forgetting cliff " + fmt("%.2f", f_cliff) + " < l2p " + fmt("%.2f", f_l2p) + " < naive " +
             fmt("%.2f", f_naive) + " (gap " + fmt("%.2f", f_naive - f_cliff) + "); avg joint " +
             fmt("%.2f", a_joint) + " >= cliff " + fmt("%.2f", a_cliff) + " >= naive " + fmt("%.2f", a_naive) +
             "; slowest method " + fmt("%.0f", slowest) + " s");

  {
    TrainConfig no_replay = train;
    no_replay.lambda_mem = 0.0f;
    no_replay.lambda_kd = 0.0f;
    ablation.matrix.task_names = task_names(tasks);
    const auto t0 = Clock::now();
    CliffTrainer tr(no_replay, model_cfg);
    tr.hooks().on_task_end = [&](const CliffModel& m, std::size_t t) { add_eval_row(ablation.matrix, m, vals, t); };
    tr.run(tasks);
    ablation.seconds = seconds_since(t0);
  }
  const double f_ablation = forgetting(ablation.matrix);
  std::cout << "# ablation matrix\n"
            << render_comparison(std::vector<MethodReport>{{"cliff without replay/kd", ablation.matrix}}).text;
  report(5, "removing replay and distillation increases forgetting",
         f_ablation > f_cliff && ablation.seconds < 20 * 60,
         "forgetting without replay/kd " + fmt("%.2f", f_ablation) + " vs full " + fmt("%.2f", f_cliff) + ", " +
             fmt("%.0f", ablation.seconds) + " s");

  report(6, "base competence and per-task diagonals",
         cliff.base_accuracy > 80.0 && diagonal_above(cliff.result.matrix, 70.0) &&
             diagonal_above(naive.matrix, 70.0) && diagonal_above(l2p.matrix, 70.0),
         "base " + fmt("%.2f", cliff.base_accuracy) + "; diagonals cliff " + diagonal_text(cliff.result.matrix) +
             ", naive " + diagonal_text(naive.matrix) + ", l2p " + diagonal_text(l2p.matrix));

  criterion_determinism();

  report(8, "loss-term contracts",
         cliff.kd_max <= 1e-6 && cliff.gate_m1 <= 1e-6 && cliff.linearity_error <= 1e-5,
         "max |L_kd| at task start " + fmt("%.2e", cliff.kd_max) + ", max L_gate at M=1 " +
             fmt("%.2e", cliff.gate_m1) + ", linearity error " + fmt("%.2e", cliff.linearity_error));

  const double total = seconds_since(suite_start);
  std::size_t passed = 0;
  for (const auto& v : verdicts) passed += v.pass;
  std::cout << "summary: " << passed << "/" << verdicts.size() << " criteria passed in " << fmt("%.0f", total)
            << " s\n";
  return passed == verdicts.size() ? 0 : 1;
}
