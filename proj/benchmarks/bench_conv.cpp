#include <benchmark/benchmark.h>

#include "flattenet/conv.hpp"
#include "flattenet/rng.hpp"

using namespace flattenet;

namespace {

void bench_conv(benchmark::State& state, ConvSpec spec, Dims in) {
    Rng rng(1);
    auto x = Tensor<float>::uniform(in, 1.0f, rng);
    auto w = Tensor<float>::uniform(spec.weight_dims(), 0.1f, rng);
    for (auto _ : state) {
        auto y = conv2d_forward(x, spec, w);
        benchmark::DoNotOptimize(y.data());
    }
    const Dims out = spec.out_dims(in);
    state.SetItemsProcessed(state.iterations() * out.numel() * (spec.c_in / spec.groups) *
                            spec.k * spec.k);
}

void BM_depthwise3x3(benchmark::State& state) {
    bench_conv(state, ConvSpec{256, 256, 3, 1, 256}, {1, 256, 16, 16});
}

void BM_pointwise_grouped(benchmark::State& state) {
    bench_conv(state, ConvSpec{256, 256, 1, 1, 32}, {1, 256, 16, 16});
}

void BM_dense3x3(benchmark::State& state) {
    bench_conv(state, ConvSpec{64, 64, 3, 1, 1}, {1, 64, 32, 32});
}

void BM_conv_backward(benchmark::State& state) {
    ConvSpec spec{128, 128, 3, 1, 128};
    Dims in{1, 128, 16, 16};
    Rng rng(2);
    auto x = Tensor<float>::uniform(in, 1.0f, rng);
    auto w = Tensor<float>::uniform(spec.weight_dims(), 0.1f, rng);
    auto dy = Tensor<float>::uniform(spec.out_dims(in), 1.0f, rng);
    for (auto _ : state) {
        auto g = conv2d_backward(x, spec, w, dy);
        benchmark::DoNotOptimize(g.dx.data());
    }
}

} // namespace

BENCHMARK(BM_depthwise3x3);
BENCHMARK(BM_pointwise_grouped);
BENCHMARK(BM_dense3x3);
BENCHMARK(BM_conv_backward);

BENCHMARK_MAIN();
