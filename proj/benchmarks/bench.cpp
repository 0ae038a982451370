#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "part/dataset.hpp"
#include "part/discovery.hpp"
#include "part/model.hpp"
#include "part/train.hpp"
#include "part/transformer.hpp"

using namespace part;

namespace {

Tensor uniform(Shape shape, std::mt19937_64& rng, double lo, double hi) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

// One transformer layer forward on a square grid of side state.range(0), C = 32, 4 heads.
void BM_AttentionForward(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const PosMode mode = state.range(1) ? PosMode::relative : PosMode::none;
  std::mt19937_64 rng(1);
  LayerShape shape;
  shape.channels = 32;
  shape.heads = 4;
  shape.mode = mode;
  shape.grid_w = shape.grid_h = side;
  LayerParams layer = init_layer(shape, rng);
  const OffsetTable table = OffsetTable::sinusoid(side, side, 32);
  const Tensor X = uniform({side * side, 32}, rng, -1.0, 1.0);
  AttentionOptions opts;
  opts.mode = mode;
  opts.table = mode == PosMode::relative ? &table : nullptr;
  for (auto _ : state) {
    Tape tape;
    const LayerVars vars = bind(tape, layer, mode);
    benchmark::DoNotOptimize(transformer_layer(tape.constant(X), vars, opts).value().data().data());
  }
}
BENCHMARK(BM_AttentionForward)->Args({6, 0})->Args({6, 1})->Args({12, 1})->Unit(benchmark::kMicrosecond);

void BM_DiscoverParts(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(2);
  const Tensor X = uniform({side, side, 32}, rng, 0.0, 1.0);
  const DiscoveryConfig cfg;
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(discover_parts(X, cfg, seed++).parts.size());
}
BENCHMARK(BM_DiscoverParts)->Arg(6)->Arg(12)->Unit(benchmark::kMicrosecond);

// Forward, backward and gradient accumulation for one 16-image batch at default settings.
void BM_TrainBatch(benchmark::State& state) {
  SynthSpec spec;
  spec.per_class = 5;
  const Split split = generate_dataset(spec);
  ModelConfig cfg;
  cfg.relation = state.range(0) != 0;
  PartModel model(cfg, spec.size, spec.size, 3);
  std::vector<const Sample*> batch;
  for (std::size_t i = 0; i < 16; ++i) batch.push_back(&split.train[i * split.train.size() / 16]);
  const DiscoveryConfig discovery;
  std::uint64_t step = 0;
  for (auto _ : state) {
    for (auto* p : model.parameters()) p->zero_grad();
    benchmark::DoNotOptimize(accumulate_batch(model, batch, discovery, step++, 1));
  }
}
BENCHMARK(BM_TrainBatch)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
