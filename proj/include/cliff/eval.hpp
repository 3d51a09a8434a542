// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cliff/classifier.hpp"
#include "cliff/synth.hpp"

namespace cliff {

/// Accuracy (percent) per training step and task. Sequential runs fill a
/// lower triangle with one row per step; a joint run has a single complete
/// row. Missing cells are nullopt.
struct EvalMatrix {
  std::vector<std::string> task_names;  // columns
  std::vector<std::string> row_labels;  // one per row
  std::vector<std::vector<std::optional<double>>> acc;

  std::size_t num_tasks() const { return task_names.size(); }
  std::size_t num_rows() const { return acc.size(); }

  /// Appends row s with values for tasks 0..values.size()-1.
  void add_row(const std::string& label, std::span<const double> values);
  /// Entries in [0, 100], row widths match, cells beyond a row's values unset.
  void validate() const;
  /// One row per task with exactly the cells t <= s present.
  bool is_lower_triangular() const;

  bool operator==(const EvalMatrix&) const = default;
};

/// Mean of the last row. Throws StateError if that row is incomplete.
double avg_accuracy(const EvalMatrix& m);

/// Mean over tasks t < M-1 of (max over s >= t of acc[s][t]) - acc[M-1][t].
/// Throws StateError when M < 2 or the matrix is not lower-triangular.
double forgetting(const EvalMatrix& m);

/// Accuracy (percent) on `validation` of task `task`: a sample counts only
/// when the predicted global index equals task * C + label. Throws DataError
/// on an empty set.
double task_accuracy(const Classifier& model, std::span<const FlakeSample> validation, std::size_t task);
/// Same count, one thread.
double task_accuracy_serial(const Classifier& model, std::span<const FlakeSample> validation, std::size_t task);

/// Row s of the matrix: accuracy on each of the given validation sets, set
/// t belonging to task t. Samples are scored in parallel.
std::vector<double> evaluate_step(const Classifier& model,
                                  std::span<const std::vector<FlakeSample>> validation_sets);

struct MethodReport {
  std::string method;
  EvalMatrix matrix;
};

struct SummaryReport {
  std::string method;
  double avg_accuracy = 0.0;
  std::optional<double> forgetting;  // undefined for joint rows and M == 1
};

SummaryReport summarize(const MethodReport& report);

std::string report_to_json(const MethodReport& report);
/// Parses the JSON written by report_to_json; throws DataError when malformed.
MethodReport report_from_json(const std::string& text);

struct RenderedComparison {
  std::string text;
  std::string json;  // array of report objects
};

/// Table with one block per method: trained-on rows, tested-on columns and
/// a summary line, values rounded to two decimals.
RenderedComparison render_comparison(std::span<const MethodReport> reports);

}  // namespace cliff
