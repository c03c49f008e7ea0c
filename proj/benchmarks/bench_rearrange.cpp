#include <benchmark/benchmark.h>

#include "flattenet/rng.hpp"
#include "flattenet/shuffle.hpp"

using namespace flattenet;

namespace {

void BM_rearrange_default_geometry(benchmark::State& state) {
    Rng rng(5);
    auto x = Tensor<float>::uniform({1, 2048, 8, 8}, 1.0f, rng);
    RearrangeSpec spec{8, 32, RearrangeMode::CsPs, 0};
    for (auto _ : state) {
        auto y = rearrange_R(x, spec);
        benchmark::DoNotOptimize(y.data());
    }
    state.SetBytesProcessed(state.iterations() * x.numel() * static_cast<std::int64_t>(sizeof(float)));
}

void BM_rearrange_roundtrip(benchmark::State& state) {
    Rng rng(6);
    auto x = Tensor<float>::uniform({1, 512, 8, 8}, 1.0f, rng);
    RearrangeSpec spec{4, 32, RearrangeMode::CsPs, 0};
    for (auto _ : state) {
        auto back = rearrange_R_inv(rearrange_R(x, spec), spec);
        benchmark::DoNotOptimize(back.data());
    }
}

void BM_channel_shuffle(benchmark::State& state) {
    Rng rng(7);
    auto x = Tensor<float>::uniform({1, 2048, 8, 8}, 1.0f, rng);
    for (auto _ : state) {
        auto y = channel_shuffle(x, 64);
        benchmark::DoNotOptimize(y.data());
    }
}

} // namespace

BENCHMARK(BM_rearrange_default_geometry);
BENCHMARK(BM_rearrange_roundtrip);
BENCHMARK(BM_channel_shuffle);
