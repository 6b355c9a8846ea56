#include "benchmark/benchmark.h"

#include "dialoflow/blockmask.hpp"

namespace {

void BM_BuildMask(benchmark::State& state) {
  int64_t n = state.range(0);
  dialoflow::blockmask::MaskSpec spec{8, 1, 1};
  for (auto _ : state) {
    auto mask = dialoflow::blockmask::build_mask(n, spec);
    benchmark::DoNotOptimize(mask);
  }
  state.SetItemsProcessed(state.iterations() * n * n);
}

void BM_ComposeReachability(benchmark::State& state) {
  int64_t n = state.range(0);
  auto h = dialoflow::blockmask::build_mask(n, {8, 1, 0});
  auto f = dialoflow::blockmask::build_mask(n, {8, 0, 1});
  std::vector<dialoflow::blockmask::BlockMask> stack{h, f, h};
  for (auto _ : state) {
    auto r = dialoflow::blockmask::compose_reachability(stack);
    benchmark::DoNotOptimize(r);
  }
}

}  // namespace

BENCHMARK(BM_BuildMask)->Range(64, 1024);
BENCHMARK(BM_ComposeReachability)->Range(64, 256);
