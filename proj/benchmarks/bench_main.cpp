// Copyright 2026 The strokeseg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "strokeseg/inference.hpp"
#include "strokeseg/layers.hpp"
#include "strokeseg/metrics.hpp"
#include "strokeseg/random.hpp"
#include "strokeseg/segresnet.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace strokeseg;

namespace {

void BM_Conv3x3Forward(benchmark::State& state) {
  const auto n = state.range(0);
  const int ch = static_cast<int>(state.range(1));
  nn::Conv3d<float> conv("c", {ch, ch, 3, 1, false});
  std::mt19937_64 rng(1);
  conv.init(rng);
  nn::Tensor<float> x(1, ch, {n, n, n});
  std::normal_distribution<float> g;
  for (auto& v : x.data) v = g(rng);
  for (auto _ : state) benchmark::DoNotOptimize(conv.forward(x));
  state.SetItemsProcessed(state.iterations() * x.voxels());
}
BENCHMARK(BM_Conv3x3Forward)->Args({32, 8})->Args({32, 32})->Args({64, 8})->Unit(benchmark::kMillisecond);

void BM_ConnectedComponents(benchmark::State& state) {
  const auto n = state.range(0);
  Geometry g;
  g.dims = {n, n, n};
  SegmentationMask m(g);
  std::mt19937_64 rng(7);
  std::bernoulli_distribution fg(0.3);
  for (auto& v : m.labels) v = fg(rng);
  for (auto _ : state) benchmark::DoNotOptimize(metrics::connected_components(m));
  state.SetItemsProcessed(state.iterations() * g.dims.voxels());
}
BENCHMARK(BM_ConnectedComponents)->Arg(32)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_SlidingWindowTiny(benchmark::State& state) {
  nn::NetworkConfig cfg;
  cfg.init_filters = 4;
  cfg.blocks_down = {1, 1, 1};
  cfg.blocks_up = {1, 1};
  cfg.ds_heads = 2;
  nn::SegResNet<float> net(cfg, 3);
  Geometry g;
  g.dims = {48, 48, 48};
  prep::MultiChannelVolume vol(g, {"DWI", "ADC"});
  std::mt19937_64 rng(5);
  std::normal_distribution<float> d;
  for (auto& v : vol.data) v = d(rng);
  const infer::SlidingWindowOptions opts{{32, 32, 32}, 0.5};
  for (auto _ : state) benchmark::DoNotOptimize(infer::sliding_window_predict(net, vol, opts));
}
BENCHMARK(BM_SlidingWindowTiny)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
