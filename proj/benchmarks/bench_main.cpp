#include <benchmark/benchmark.h>

#include <random>

#include "scoreprop/io.hpp"
#include "scoreprop/model.hpp"
#include "scoreprop/ops.hpp"
#include "scoreprop/rf.hpp"
#include "scoreprop/score.hpp"

using namespace scoreprop;

namespace {

Tensor random_input(const std::vector<std::int64_t>& shape, std::uint32_t seed) {
  Tensor t(shape);
  std::mt19937 rng(seed);
  for (float& v : t.data) v = static_cast<float>(rng() >> 8) * (1.0f / 16777216.0f);
  return t;
}

void bm_conv2d(benchmark::State& state) {
  const auto c = state.range(0);
  const auto hw = state.range(1);
  const Tensor in = random_input({c, hw, hw}, 1);
  Tensor w({c, c, 3, 3});
  std::mt19937 rng(2);
  for (float& v : w.data) v = static_cast<float>(rng() >> 8) * (1.0f / 16777216.0f) - 0.5f;
  const std::vector<float> b(static_cast<std::size_t>(c), 0.1f);
  for (auto _ : state) {
    benchmark::DoNotOptimize(conv2d_forward(in, w, b, HW{1, 1}, HW{1, 1}));
  }
  state.SetItemsProcessed(state.iterations() * c * c * hw * hw * 9);
}
BENCHMARK(bm_conv2d)->Args({16, 64})->Args({32, 32})->Args({64, 16});

void bm_toy_forward(benchmark::State& state) {
  const ModelGraph model = io::make_toy_model(3, 2, {8, 16}, 32);
  const Tensor in = random_input({3, 32, 32}, 4);
  for (auto _ : state) {
    benchmark::DoNotOptimize(forward_with_tape(model, in));
  }
}
BENCHMARK(bm_toy_forward);

void bm_toy_explain(benchmark::State& state) {
  const ModelGraph model = io::make_toy_model(5, 2, {8, 16}, 32);
  const Tensor in = random_input({3, 32, 32}, 6);
  const ForwardTape tape = forward_with_tape(model, in);
  score::ExplainOptions options;
  options.keep_layer_tensors = false;
  for (auto _ : state) {
    benchmark::DoNotOptimize(score::explain(model, tape, {0, 1, 2, 3, 4}, options));
  }
}
BENCHMARK(bm_toy_explain);

void bm_gaussian_splat(benchmark::State& state) {
  rf::RfEntry e;
  e.extent_h = e.extent_w = 20;
  e.jump_h = e.jump_w = 32;
  e.rf_h = e.rf_w = 189;
  e.center_h = e.center_w = 10.0;
  Tensor map({20, 20});
  std::mt19937 rng(7);
  for (float& v : map.data) v = static_cast<float>(rng() >> 8) * (1.0f / 16777216.0f) - 0.5f;
  const rf::SplatConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(rf::gaussian_splat(map, e, cfg, 640, 640));
  }
}
BENCHMARK(bm_gaussian_splat);

}  // namespace

BENCHMARK_MAIN();
