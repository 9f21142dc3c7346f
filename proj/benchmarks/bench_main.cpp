#include <benchmark/benchmark.h>

#include "dfusion/color.hpp"
#include "dfusion/denoiser.hpp"
#include "dfusion/fusion.hpp"
#include "dfusion/metrics.hpp"
#include "dfusion/synthetic.hpp"

using namespace dfusion;

namespace {

Tensor uniform(Rng& rng, std::vector<std::size_t> dims) {
  Tensor t(std::move(dims));
  for (double& v : t.data()) v = rng.uniform();
  return t;
}

void BM_Conv2d(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const auto channels = static_cast<std::size_t>(state.range(1));
  Rng rng(1);
  const Tensor in = uniform(rng, {side, side, channels});
  const Tensor k = uniform(rng, {3, 3, channels, channels});
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(in, k, 1, 1));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(side * side * channels * channels * 9));
}
BENCHMARK(BM_Conv2d)->Args({32, 16})->Args({64, 32})->Args({160, 32});

void BM_PredictNoise(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const auto width = static_cast<std::size_t>(state.range(1));
  const Denoiser net = Denoiser::initialize(DenoiserConfig{width, 64}, make_linear_schedule(200, 1e-4, 0.02), 1);
  const MultiChannelImage x = synthesize_pair(side, side, 1, 0).image().to_diffusion_range();
  for (auto _ : state) benchmark::DoNotOptimize(net.predict_noise(x, 50));
}
BENCHMARK(BM_PredictNoise)->Args({32, 16})->Args({64, 16})->Args({64, 32})->Unit(benchmark::kMillisecond);

void BM_Fuse(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const Denoiser net = Denoiser::initialize(DenoiserConfig{16, 64}, make_linear_schedule(200, 1e-4, 0.02), 1);
  FusionConfig config;
  const FusionHead head = FusionHead::initialize(config, net.config().expansive_widths(), 2);
  const MultiChannelImage pair = synthesize_pair(side, side, 1, 0).image();
  for (auto _ : state) benchmark::DoNotOptimize(fuse(pair, &net, &head, config));
}
BENCHMARK(BM_Fuse)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_Ciede2000(benchmark::State& state) {
  const Lab a{50.0, 2.6772, -79.7751}, b{50.0, 0.0, -82.7485};
  for (auto _ : state) benchmark::DoNotOptimize(ciede2000(a, b));
}
BENCHMARK(BM_Ciede2000);

void BM_EvaluatePair(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const SyntheticPair p = synthesize_pair(side, side, 3, 0);
  const SourcePair sources{p.id, p.visible, p.infrared};
  Rng rng(4);
  const Tensor fused = uniform(rng, {side, side, 3});
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_pair(sources, fused));
}
BENCHMARK(BM_EvaluatePair)->Arg(32)->Arg(128)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
