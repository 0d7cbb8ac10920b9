// Serial reference kernels against the im2col/GEMM path. Thread count for the
// optimized path follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include <random>

#include "ikm/ikm.hpp"
#include "ikm/ops.hpp"

namespace {

using ikm::ConvParams;
using ikm::Tensor;

template <typename T>
Tensor<T> filled(ikm::Shape s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  Tensor<T> t(std::move(s));
  for (auto& v : t.values()) v = static_cast<T>(u(rng));
  return t;
}

struct Case {
  Tensor<float> x;
  ConvParams<float> p;
  Tensor<float> grad;
};

// Batch 4, C -> C, 3x3 "same" conv on a size x size map.
Case make_case(std::size_t channels, std::size_t size) {
  std::mt19937_64 rng(1);
  Case c{filled<float>({4, channels, size, size}, rng),
         {filled<float>({channels, channels, 3, 3}, rng), filled<float>({channels}, rng),
          {1, 1, 1}},
         filled<float>({4, channels, size, size}, rng)};
  return c;
}

void set_counters(benchmark::State& state, std::size_t channels, std::size_t size) {
  const double macs = 4.0 * channels * channels * 9 * size * size;
  state.counters["MAC/s"] =
      benchmark::Counter(macs, benchmark::Counter::kIsIterationInvariantRate);
}

void BM_ConvForwardReference(benchmark::State& state) {
  const auto c = make_case(state.range(0), state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(ikm::reference::conv2d_forward(c.x, c.p));
  set_counters(state, state.range(0), state.range(1));
}

void BM_ConvForward(benchmark::State& state) {
  const auto c = make_case(state.range(0), state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(ikm::conv2d_forward(c.x, c.p));
  set_counters(state, state.range(0), state.range(1));
}

void BM_ConvBackwardReference(benchmark::State& state) {
  const auto c = make_case(state.range(0), state.range(1));
  for (auto _ : state)
    benchmark::DoNotOptimize(ikm::reference::conv2d_backward(c.x, c.p, c.grad));
  set_counters(state, state.range(0), state.range(1));
}

void BM_ConvBackward(benchmark::State& state) {
  const auto c = make_case(state.range(0), state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(ikm::conv2d_backward(c.x, c.p, c.grad));
  set_counters(state, state.range(0), state.range(1));
}

// Full IKM layer: attention generation plus the per-image group conv.
void BM_IkmForward(benchmark::State& state) {
  const auto c = make_case(state.range(0), state.range(1));
  const auto cfg = ikm::CagConfig::for_kernel(3, 3, 1, 0.0);
  for (auto _ : state) benchmark::DoNotOptimize(ikm::ikm_conv_forward(c.x, c.p, cfg));
  set_counters(state, state.range(0), state.range(1));
}

void shapes(benchmark::internal::Benchmark* b) {
  b->Args({16, 32})->Args({32, 48})->Args({64, 48})->Unit(benchmark::kMillisecond);
}

BENCHMARK(BM_ConvForwardReference)->Apply(shapes);
BENCHMARK(BM_ConvForward)->Apply(shapes);
BENCHMARK(BM_ConvBackwardReference)->Apply(shapes);
BENCHMARK(BM_ConvBackward)->Apply(shapes);
BENCHMARK(BM_IkmForward)->Apply(shapes);

}  // namespace

BENCHMARK_MAIN();
