#include <benchmark/benchmark.h>

#include "osxr/inference.hpp"
#include "osxr/layers.hpp"
#include "osxr/ops.hpp"
#include "osxr/synthetic.hpp"

using namespace osxr;

namespace {

Tensor uniform(Shape shape, std::uint64_t seed) { return Tensor::of(std::move(shape), Uniform{-1.0, 1.0, seed}); }

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = uniform({n, n}, 1), b = uniform({n, n}, 2);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256);

void BM_Conv2d(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const auto x = uniform({batch, 8, 32, 32}, 3), k = uniform({16, 8, 3, 3}, 4);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, k, 1, 1));
}
BENCHMARK(BM_Conv2d)->Arg(1)->Arg(8);

void BM_EmbeddingForward(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  EmbeddingNetwork net{EmbeddingConfig{}};
  const auto x = Tensor::of({batch, 1, 64, 64}, Uniform{0.0, 1.0, 5});
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_EmbeddingForward)->Arg(1)->Arg(32);

void BM_EmbeddingBackward(benchmark::State& state) {
  EmbeddingNetwork net{EmbeddingConfig{}};
  const auto x = Tensor::of({8, 1, 64, 64}, Uniform{0.0, 1.0, 6});
  for (auto _ : state) {
    auto loss = sum(net.forward(x));
    backward(loss);
    for (auto& p : net.parameters()) p.clear_grad();
  }
}
BENCHMARK(BM_EmbeddingBackward);

void BM_ClassEnergies(benchmark::State& state) {
  const auto per_category = static_cast<std::size_t>(state.range(0));
  EmbeddingNetwork net{EmbeddingConfig{}};
  std::vector<ImageSample> samples;
  for (const std::string cat : {"blob", "hbar", "vbar"})
    for (std::size_t i = 0; i < per_category; ++i)
      samples.push_back({cat + std::to_string(i), synthetic_image(cat, 64, 0.1, i), cat, Source::real, Split::train});
  const auto standard = select_standard_set(samples, per_category, std::nullopt, net);
  const auto query = normalize_resize(synthetic_image("hbar", 64, 0.1, 999), 64, 64);
  for (auto _ : state) benchmark::DoNotOptimize(class_energies(query, standard, net));
}
BENCHMARK(BM_ClassEnergies)->Arg(1)->Arg(10);

}  // namespace
BENCHMARK_MAIN();
