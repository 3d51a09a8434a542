// SPDX-License-Identifier: Apache-2.0
// Serial reference kernels against their OpenMP counterparts.
#include <benchmark/benchmark.h>

#include <vector>

#include "cliff/cliff_model.hpp"
#include "cliff/eval.hpp"
#include "cliff/kernels.hpp"
#include "cliff/rng.hpp"
#include "cliff/synth.hpp"

namespace {

using cliff::kernels::GemmShape;
using cliff::kernels::Layout;

std::vector<float> random_buffer(std::size_t n, std::uint64_t seed) {
  cliff::Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return v;
}

template <auto Kernel>
void BM_gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const GemmShape shape{n, n, n};
  const auto a = random_buffer(n * n, 1), b = random_buffer(n * n, 2);
  std::vector<float> c(n * n);
  for (auto _ : state) {
    Kernel(shape, Layout::Normal, Layout::Trans, a, b, c, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

BENCHMARK_TEMPLATE(BM_gemm, cliff::kernels::gemm_serial)->Arg(64)->Arg(128)->Arg(256);
BENCHMARK_TEMPLATE(BM_gemm, cliff::kernels::gemm_parallel)->Arg(64)->Arg(128)->Arg(256);

struct EvalFixture {
  cliff::CliffModel model;
  std::vector<cliff::FlakeSample> validation;

  EvalFixture() : model(config()) {
    model.add_material("bench");
    validation = cliff::default_benchmark(3, 3, 60, 32).front().split.validation;
  }

  static cliff::CliffConfig config() {
    cliff::CliffConfig c;
    c.vit.image_size = 32;
    return c;
  }
};

EvalFixture& eval_fixture() {
  static EvalFixture f;
  return f;
}

void BM_task_accuracy_serial(benchmark::State& state) {
  auto& f = eval_fixture();
  for (auto _ : state) benchmark::DoNotOptimize(cliff::task_accuracy_serial(f.model, f.validation, 0));
}

void BM_task_accuracy_parallel(benchmark::State& state) {
  auto& f = eval_fixture();
  for (auto _ : state) benchmark::DoNotOptimize(cliff::task_accuracy(f.model, f.validation, 0));
}

BENCHMARK(BM_task_accuracy_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_task_accuracy_parallel)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
