// SPDX-License-Identifier: Apache-2.0
// Accuracy matrices as printed in the published comparison table, used to
// check the metric arithmetic.
#pragma once

#include <vector>

#include "cliff/eval.hpp"

namespace cliff::testing {

inline EvalMatrix published_matrix(const std::vector<std::vector<double>>& rows) {
  EvalMatrix m;
  for (std::size_t t = 0; t < rows.size(); ++t) m.task_names.push_back("T" + std::to_string(t + 1));
  for (std::size_t s = 0; s < rows.size(); ++s) m.add_row("T" + std::to_string(s + 1), rows[s]);
  return m;
}

inline EvalMatrix published_joint() {
  EvalMatrix m;
  m.task_names = {"T1", "T2", "T3", "T4"};
  const std::vector<double> row{92.68, 92.04, 90.91, 92.82};
  m.add_row("Ensemble", row);
  return m;
}

inline EvalMatrix published_naive() {
  return published_matrix({{91.46}, {10.98, 86.09}, {8.54, 22.23, 83.77}, {4.88, 3.20, 0.65, 62.68}});
}

inline EvalMatrix published_l2p() {
  return published_matrix({{85.37}, {60.98, 82.34}, {57.32, 52.88, 87.66}, {53.66, 21.23, 1.30, 71.77}});
}

inline EvalMatrix published_cliff() {
  return published_matrix({{90.24}, {86.59, 79.33}, {64.63, 77.70, 79.87}, {56.10, 44.79, 44.16, 82.78}});
}

}  // namespace cliff::testing
