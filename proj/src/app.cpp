// SPDX-License-Identifier: Apache-2.0
#include "cliff/app.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <ostream>

#include "CLI11.hpp"
#include "cliff/baselines.hpp"
#include "cliff/checkpoint.hpp"
#include "cliff/dataset_io.hpp"
#include "cliff/errors.hpp"
#include "json.hpp"

namespace cliff {

namespace fs = std::filesystem;
using nlohmann::json;

ExitCode exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ParameterError*>(&e) ||
      dynamic_cast<const RegistrationError*>(&e) || dynamic_cast<const CLI::Error*>(&e))
    return kExitUsage;
  if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const CheckpointError*>(&e)) return kExitData;
  return kExitRuntime;
}

std::string error_category(const std::exception& e) {
  if (const auto* ce = dynamic_cast<const Error*>(&e)) return ce->category();
  if (dynamic_cast<const CLI::Error*>(&e)) return "usage";
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return "io";
  return "runtime";
}

namespace {

json read_json_file(const fs::path& path, const std::string& what) {
  std::vector<unsigned char> bytes;
  try {
    bytes = read_file_bytes(path);
  } catch (const CheckpointError&) {
    throw DataError("cannot read " + what + " " + path.string());
  }
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw DataError("malformed " + what + " " + path.string() + ": " + e.what());
  }
}

void write_manifest(const fs::path& run_dir, const json& manifest) {
  write_text_atomic(run_dir / kRunManifest, manifest.dump(2) + "\n");
}

std::string utc_stamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

void prepare_run_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force) throw ConfigError("run directory " + dir.string() + " is not empty (use --force)");
    for (const auto& entry : fs::directory_iterator(dir)) {
      const std::string name = entry.path().filename().string();
      const bool ours = name == kRunManifest || name == kHistoryFile || name == kEvalJson || name == kEvalText ||
                        entry.path().extension() == ".ckpt";
      if (ours) fs::remove(entry.path());
    }
  }
  fs::create_directories(dir);
}

std::string step_file(std::size_t step) { return "step_" + std::to_string(step) + ".ckpt"; }

}  // namespace

std::uint64_t cmd_generate(const GenerateOptions& o, std::ostream& log) {
  if (o.out.empty()) throw ConfigError("--out is required");
  const auto tasks = default_benchmark(o.seed, o.n_train, o.n_val, o.image_size);
  const std::uint64_t checksum = export_dataset(o.out, tasks, o.seed, o.force);
  log << "generated " << tasks.size() << " tasks x (" << o.n_train << " train + " << o.n_val
      << " validation) in " << o.out.string() << " checksum " << hex64(checksum) << "\n";
  return checksum;
}

void cmd_train(const TrainOptions& o, std::ostream& log) {
  static const std::vector<std::string> methods = {"cliff", "naive", "joint", "l2p"};
  if (std::find(methods.begin(), methods.end(), o.method) == methods.end())
    throw ConfigError("unknown method '" + o.method + "' (expected cliff, naive, joint or l2p)");
  if (o.out.empty()) throw ConfigError("--out is required");
  const RunConfig cfg = resolve_config(o.env_seed, o.config_file, o.settings);
  const DatasetInfo data = import_dataset(o.data_dir);
  const std::vector<MaterialTask>& tasks = data.tasks;

  prepare_run_dir(o.out, o.force);
  json manifest;
  manifest["run_id"] = utc_stamp() + "-s" + std::to_string(cfg.seed());
  manifest["tool_version"] = kToolVersion;
  manifest["method"] = o.method;
  manifest["kind"] = o.method == "joint" ? "joint" : "sequential";
  json cfg_json = json::object();
  for (const auto& [k, v] : config_settings(cfg)) cfg_json[k] = v;
  manifest["config"] = cfg_json;
  json materials = json::array();
  for (const auto& t : tasks) materials.push_back(t.profile.name);
  manifest["materials"] = materials;
  manifest["dataset_dir"] = fs::absolute(o.data_dir).lexically_normal().string();
  manifest["dataset_checksum"] = hex64(data.checksum);
  manifest["checkpoints"] = json::array();
  manifest["history"] = kHistoryFile;
  manifest["finalized"] = false;
  write_manifest(o.out, manifest);

  auto record_checkpoint = [&](std::size_t step, const std::string& label, const std::string& file) {
    manifest["checkpoints"].push_back({{"step", step}, {"label", label}, {"path", file}});
    write_manifest(o.out, manifest);
    log << o.method << ": step " << step << " (" << label << ") saved to " << file << "\n" << std::flush;
  };
  const auto label_of = [&](std::size_t t) { return tasks[t].profile.name; };

  std::vector<EpochRecord> history;
  if (o.method == "cliff") {
    CliffTrainer trainer(cfg.train, cfg.model);
    trainer.hooks().on_task_end = [&](const CliffModel& model, std::size_t t) {
      model.save(o.out / step_file(t));
      record_checkpoint(t, label_of(t), step_file(t));
    };
    trainer.run(tasks);
    history.assign(trainer.history().begin(), trainer.history().end());
  } else if (o.method == "naive") {
    auto run = train_naive_finetune(tasks, cfg.train, cfg.model.vit, cfg.seed(),
                                    [&](const GrowingHeadModel& model, std::size_t t) {
                                      model.save(o.out / step_file(t));
                                      record_checkpoint(t, label_of(t), step_file(t));
                                    });
    history = std::move(run.history);
  } else if (o.method == "l2p") {
    auto run = train_l2p_baseline(tasks, cfg.train, cfg.model, [&](const L2PModel& model, std::size_t t) {
      model.save(o.out / step_file(t));
      record_checkpoint(t, label_of(t), step_file(t));
    });
    history = std::move(run.history);
  } else {
    auto run = train_joint(tasks, cfg.train, cfg.model.vit, cfg.seed());
    run.model.save(o.out / "joint.ckpt");
    record_checkpoint(tasks.size() - 1, "Ensemble", "joint.ckpt");
    history = std::move(run.history);
  }
  write_history_csv(o.out / kHistoryFile, history);

  for (const auto& c : manifest["checkpoints"])
    if (!fs::exists(o.out / c.at("path").get<std::string>()))
      throw StateError("checkpoint " + c.at("path").get<std::string>() + " vanished before finalize");
  manifest["finalized"] = true;
  write_manifest(o.out, manifest);
  log << o.method << ": run finalized in " << o.out.string() << "\n";
}

MethodReport cmd_eval(const EvalOptions& o, std::ostream& log) {
  const json manifest = read_json_file(o.run_dir / kRunManifest, "run manifest");
  try {
    if (!manifest.at("finalized").get<bool>())
      throw StateError("run " + o.run_dir.string() + " is not finalized (interrupted training?)");
    const fs::path data_dir = o.data_dir ? *o.data_dir : fs::path(manifest.at("dataset_dir").get<std::string>());
    const DatasetInfo data = import_dataset(data_dir);
    if (hex64(data.checksum) != manifest.at("dataset_checksum").get<std::string>())
      throw DataError("dataset at " + data_dir.string() + " differs from the one the run was trained on");
    const auto materials = manifest.at("materials").get<std::vector<std::string>>();
    if (materials.size() > data.tasks.size()) throw DataError("dataset has fewer tasks than the run");
    std::vector<std::vector<FlakeSample>> validation;
    for (std::size_t t = 0; t < materials.size(); ++t) {
      if (data.tasks[t].profile.name != materials[t])
        throw DataError("dataset task " + std::to_string(t) + " is " + data.tasks[t].profile.name + ", run expects " +
                        materials[t]);
      validation.push_back(data.tasks[t].split.validation);
    }
    const bool joint = manifest.at("kind").get<std::string>() == "joint";

    MethodReport report;
    report.method = manifest.at("method").get<std::string>();
    report.matrix.task_names = materials;
    for (const auto& c : manifest.at("checkpoints")) {
      const auto step = c.at("step").get<std::size_t>();
      const auto label = c.at("label").get<std::string>();
      const fs::path path = o.run_dir / c.at("path").get<std::string>();
      if (!fs::exists(path))
        throw CheckpointError(CheckpointError::Kind::Io,
                              "checkpoint for step " + std::to_string(step) + " (" + label + ") missing: " + path.string());
      std::unique_ptr<Classifier> model;
      try {
        model = load_classifier(path);
      } catch (const CheckpointError& e) {
        throw CheckpointError(e.kind(), "step " + std::to_string(step) + ": " + e.what());
      }
      const std::size_t upto = joint ? materials.size() : step + 1;
      const auto row = evaluate_step(*model, std::span(validation).first(upto));
      report.matrix.add_row(label, row);
      log << report.method << ": evaluated step " << step << " (" << label << ")\n";
    }
    report.matrix.validate();
    write_text_atomic(o.run_dir / kEvalJson, report_to_json(report) + "\n");
    const MethodReport one[] = {report};
    write_text_atomic(o.run_dir / kEvalText, render_comparison(one).text);
    return report;
  } catch (const json::exception& e) {
    throw DataError("malformed run manifest: " + std::string(e.what()));
  }
}

RenderedComparison cmd_compare(const std::vector<fs::path>& run_dirs, const std::optional<fs::path>& out_json) {
  if (run_dirs.empty()) throw ConfigError("compare needs at least one run directory");
  std::vector<MethodReport> reports;
  for (const auto& dir : run_dirs) {
    const fs::path p = dir / kEvalJson;
    if (!fs::exists(p)) throw DataError("run " + dir.string() + " has not been evaluated (no " + kEvalJson + ")");
    const auto bytes = read_file_bytes(p);
    reports.push_back(report_from_json(std::string(bytes.begin(), bytes.end())));
    if (reports.back().matrix.task_names != reports.front().matrix.task_names)
      throw DataError("run " + dir.string() + " was evaluated on a different task list than " +
                      run_dirs.front().string());
  }
  RenderedComparison r = render_comparison(reports);
  if (out_json) write_text_atomic(*out_json, r.json + "\n");
  return r;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Material-incremental flake classification experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  const char* env = std::getenv("CLIFF_SEED");
  const std::optional<std::string> env_seed = env ? std::optional<std::string>(env) : std::nullopt;

  GenerateOptions gen;
  std::optional<std::uint64_t> gen_seed;
  auto* g = app.add_subcommand("generate", "Render the synthetic four-material benchmark");
  g->add_option("--seed", gen_seed, "Root seed (default: CLIFF_SEED or 0)");
  g->add_option("--out", gen.out, "Output dataset directory")->required();
  g->add_option("--n-train", gen.n_train, "Training samples per task")->capture_default_str();
  g->add_option("--n-val", gen.n_val, "Validation samples per task")->capture_default_str();
  g->add_option("--image-size", gen.image_size, "Image side in pixels")->capture_default_str();
  g->add_flag("--force", gen.force, "Overwrite an existing dataset");

  TrainOptions train;
  std::optional<std::uint64_t> train_seed;
  std::optional<std::string> config_path;
  std::vector<std::string> sets;
  auto* t = app.add_subcommand("train", "Train one method over the task sequence");
  t->add_option("--method", train.method, "cliff, naive, joint or l2p")
      ->required()
      ->check(CLI::IsMember({"cliff", "naive", "joint", "l2p"}));
  t->add_option("--data-dir", train.data_dir, "Dataset directory")->required();
  t->add_option("--config", config_path, "key=value config file");
  t->add_option("--set", sets, "Override one config key (key=value); repeatable");
  t->add_option("--seed", train_seed, "Seed (same as --set seed=N)");
  t->add_option("--out", train.out, "Run directory")->required();
  t->add_flag("--force", train.force, "Reuse a non-empty run directory");

  EvalOptions ev;
  std::optional<std::string> eval_data;
  auto* e = app.add_subcommand("eval", "Fill the accuracy matrix of a finished run");
  e->add_option("--run-dir", ev.run_dir, "Run directory")->required();
  e->add_option("--data-dir", eval_data, "Dataset directory (default: the one used for training)");

  std::vector<std::string> compare_dirs;
  std::optional<std::string> compare_out;
  auto* c = app.add_subcommand("compare", "Print evaluated runs side by side");
  c->add_option("--run-dirs", compare_dirs, "Evaluated run directories")->required();
  c->add_option("--out", compare_out, "Write the combined JSON here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& pe) {
    if (pe.get_exit_code() == 0) {
      app.exit(pe, out, err);
      return kExitOk;
    }
    err << "error[usage]: " << pe.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*g) {
      gen.seed = gen_seed ? *gen_seed : 0;
      if (!gen_seed && env_seed) {
        RunConfig probe;
        apply_setting(probe, "seed", *env_seed);
        gen.seed = probe.seed();
      }
      cmd_generate(gen, out);
    } else if (*t) {
      train.env_seed = env_seed;
      if (config_path) train.config_file = fs::path(*config_path);
      for (const auto& s : sets) train.settings.push_back(parse_setting(s));
      if (train_seed) train.settings.emplace_back("seed", std::to_string(*train_seed));
      cmd_train(train, out);
    } else if (*e) {
      if (eval_data) ev.data_dir = fs::path(*eval_data);
      const MethodReport r = cmd_eval(ev, out);
      const MethodReport one[] = {r};
      out << render_comparison(one).text;
    } else if (*c) {
      std::vector<fs::path> dirs(compare_dirs.begin(), compare_dirs.end());
      std::optional<fs::path> o;
      if (compare_out) o = fs::path(*compare_out);
      out << cmd_compare(dirs, o).text;
    }
  } catch (const std::exception& ex) {
    std::string msg = ex.what();
    for (auto& ch : msg)
      if (ch == '\n') ch = ' ';
    err << "error[" << error_category(ex) << "]: " << msg << "\n";
    return exit_code_for(ex);
  }
  return kExitOk;
}

}  // namespace cliff
