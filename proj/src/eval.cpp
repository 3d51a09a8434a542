// SPDX-License-Identifier: Apache-2.0
#include "cliff/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "cliff/errors.hpp"
#include "json.hpp"

namespace cliff {

void EvalMatrix::add_row(const std::string& label, std::span<const double> values) {
  if (values.size() > num_tasks())
    throw DimensionError("eval row has " + std::to_string(values.size()) + " values for " +
                         std::to_string(num_tasks()) + " tasks");
  std::vector<std::optional<double>> row(num_tasks());
  for (std::size_t t = 0; t < values.size(); ++t) row[t] = values[t];
  row_labels.push_back(label);
  acc.push_back(std::move(row));
}

void EvalMatrix::validate() const {
  if (row_labels.size() != acc.size()) throw DataError("eval matrix: row label count differs from row count");
  for (const auto& row : acc) {
    if (row.size() != num_tasks()) throw DataError("eval matrix: row width differs from task count");
    for (const auto& v : row)
      if (v && !(*v >= 0.0 && *v <= 100.0)) throw DataError("eval matrix: accuracy outside [0, 100]");
  }
}

bool EvalMatrix::is_lower_triangular() const {
  if (acc.size() != num_tasks()) return false;
  for (std::size_t s = 0; s < acc.size(); ++s)
    for (std::size_t t = 0; t < num_tasks(); ++t)
      if (acc[s][t].has_value() != (t <= s)) return false;
  return true;
}

double avg_accuracy(const EvalMatrix& m) {
  if (m.acc.empty() || m.num_tasks() == 0) throw StateError("avg_accuracy: empty matrix");
  const auto& last = m.acc.back();
  if (last.size() != m.num_tasks()) throw StateError("avg_accuracy: final row is incomplete");
  double total = 0.0;
  for (const auto& v : last) {
    if (!v) throw StateError("avg_accuracy: final row is incomplete");
    total += *v;
  }
  return total / static_cast<double>(last.size());
}

double forgetting(const EvalMatrix& m) {
  const std::size_t M = m.num_tasks();
  if (M < 2) throw StateError("forgetting needs at least two tasks");
  if (!m.is_lower_triangular()) throw StateError("forgetting needs one lower-triangular row per task");
  double total = 0.0;
  for (std::size_t t = 0; t + 1 < M; ++t) {
    double peak = *m.acc[t][t];
    for (std::size_t s = t + 1; s < M; ++s) peak = std::max(peak, *m.acc[s][t]);
    total += peak - *m.acc[M - 1][t];
  }
  return total / static_cast<double>(M - 1);
}

namespace {

double percent(std::size_t correct, std::size_t n) {
  return 100.0 * static_cast<double>(correct) / static_cast<double>(n);
}

void require_nonempty(std::span<const FlakeSample> validation, std::size_t task) {
  if (validation.empty()) throw DataError("validation set of task " + std::to_string(task) + " is empty");
}

}  // namespace

double task_accuracy_serial(const Classifier& model, std::span<const FlakeSample> validation, std::size_t task) {
  require_nonempty(validation, task);
  std::size_t correct = 0;
  for (const auto& s : validation)
    if (model.predict_global(s.image) == task * kNumClasses + s.label()) ++correct;
  return percent(correct, validation.size());
}

double task_accuracy(const Classifier& model, std::span<const FlakeSample> validation, std::size_t task) {
  require_nonempty(validation, task);
  const auto n = static_cast<std::ptrdiff_t>(validation.size());
  std::size_t correct = 0;
#pragma omp parallel for reduction(+ : correct) schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& s = validation[static_cast<std::size_t>(i)];
    if (model.predict_global(s.image) == task * kNumClasses + s.label()) ++correct;
  }
  return percent(correct, validation.size());
}

std::vector<double> evaluate_step(const Classifier& model,
                                  std::span<const std::vector<FlakeSample>> validation_sets) {
  if (validation_sets.empty()) throw DataError("evaluate_step: no validation sets");
  std::vector<double> row;
  row.reserve(validation_sets.size());
  for (std::size_t t = 0; t < validation_sets.size(); ++t)
    row.push_back(task_accuracy(model, validation_sets[t], t));
  return row;
}

SummaryReport summarize(const MethodReport& report) {
  SummaryReport s;
  s.method = report.method;
  s.avg_accuracy = avg_accuracy(report.matrix);
  if (report.matrix.num_tasks() >= 2 && report.matrix.is_lower_triangular())
    s.forgetting = forgetting(report.matrix);
  return s;
}

namespace {

nlohmann::json report_json(const MethodReport& report) {
  const SummaryReport s = summarize(report);
  nlohmann::json matrix = nlohmann::json::array();
  for (const auto& row : report.matrix.acc) {
    nlohmann::json r = nlohmann::json::array();
    for (const auto& v : row) r.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
    matrix.push_back(std::move(r));
  }
  nlohmann::json j;
  j["method"] = report.method;
  j["task_names"] = report.matrix.task_names;
  j["row_labels"] = report.matrix.row_labels;
  j["matrix"] = std::move(matrix);
  j["avg_accuracy"] = s.avg_accuracy;
  j["forgetting"] = s.forgetting ? nlohmann::json(*s.forgetting) : nlohmann::json(nullptr);
  return j;
}

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string pad_left(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

std::string pad_right(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

}  // namespace

std::string report_to_json(const MethodReport& report) { return report_json(report).dump(2); }

MethodReport report_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    MethodReport r;
    r.method = j.at("method").get<std::string>();
    r.matrix.task_names = j.at("task_names").get<std::vector<std::string>>();
    const auto& rows = j.at("matrix");
    if (j.contains("row_labels")) {
      r.matrix.row_labels = j.at("row_labels").get<std::vector<std::string>>();
    } else {
      for (std::size_t s = 0; s < rows.size(); ++s)
        r.matrix.row_labels.push_back(s < r.matrix.task_names.size() ? r.matrix.task_names[s] : "row");
    }
    for (const auto& row : rows) {
      std::vector<std::optional<double>> out;
      for (const auto& v : row) out.push_back(v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()));
      r.matrix.acc.push_back(std::move(out));
    }
    r.matrix.validate();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed evaluation JSON: ") + e.what());
  }
}

RenderedComparison render_comparison(std::span<const MethodReport> reports) {
  if (reports.empty()) throw ParameterError("render_comparison: no reports");
  std::ostringstream text;
  nlohmann::json all = nlohmann::json::array();
  for (const auto& r : reports) {
    r.matrix.validate();
    const SummaryReport s = summarize(r);
    std::size_t label_width = std::string("Trained on").size();
    for (const auto& l : r.matrix.row_labels) label_width = std::max(label_width, l.size());
    std::size_t col = 8;
    for (const auto& t : r.matrix.task_names) col = std::max(col, t.size() + 2);

    text << "== " << r.method << " ==\n";
    text << pad_right("Trained on", label_width) << " |";
    for (const auto& t : r.matrix.task_names) text << pad_left(t, col);
    text << '\n';
    for (std::size_t i = 0; i < r.matrix.num_rows(); ++i) {
      text << pad_right(r.matrix.row_labels[i], label_width) << " |";
      for (const auto& v : r.matrix.acc[i]) text << pad_left(v ? fixed2(*v) : "-", col);
      text << '\n';
    }
    text << "Avg. Accuracy: " << fixed2(s.avg_accuracy) << '%';
    if (s.forgetting) text << " Forgetting: " << fixed2(*s.forgetting) << '%';
    text << "\n\n";
    all.push_back(report_json(r));
  }
  return {text.str(), all.dump(2)};
}

}  // namespace cliff
