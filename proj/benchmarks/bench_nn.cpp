#include "benchmark/benchmark.h"

#include "dialoflow/cfm.hpp"
#include "dialoflow/graph.hpp"
#include "dialoflow/param_store.hpp"

using namespace dialoflow;

namespace {

void BM_MaskedAttention(benchmark::State& state) {
  int64_t n = state.range(0);
  int64_t d = 64;
  nn::RngState rng(1);
  nn::Tensor q = nn::randn({n, d}, rng);
  nn::Tensor k = nn::randn({n, d}, rng);
  nn::Tensor v = nn::randn({n, d}, rng);
  nn::BoolMatrix mask = nn::causal_mask(n);
  for (auto _ : state) {
    nn::Tape t;
    auto out = nn::attention(t, t.constant(q), t.constant(k), t.constant(v), mask);
    benchmark::DoNotOptimize(t.value(out).raw());
  }
  state.SetItemsProcessed(state.iterations() * n * n * d);
}

void BM_ChunkDecodeWindow(benchmark::State& state) {
  cfm::CfmConfig cfg;
  cfg.hidden = 32;
  cfg.heads = 4;
  cfg.feat_dim = 8;
  cfg.frame_ratio = 2;
  cfg.block = 8;
  cfg.layer_masks = {{8, 1, 0}, {8, 0, 1}};
  cfg.max_frames = 4096;
  cfm::CfmModel model = cfm::CfmModel::init(cfg);
  cfm::ChunkPlan plan;
  plan.block = 8;
  plan.past = 1;
  plan.future = 1;
  plan.n_ode = 4;
  std::vector<int32_t> tokens(static_cast<size_t>(state.range(0)), 5);
  std::vector<double> spk(16, 0.25);
  for (auto _ : state) {
    nn::Tensor out = cfm::chunk_decode(model, tokens, spk, plan, 3);
    benchmark::DoNotOptimize(out.raw());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_MaskedAttention)->Range(32, 256);
BENCHMARK(BM_ChunkDecodeWindow)->Arg(32)->Arg(64);

BENCHMARK_MAIN();
