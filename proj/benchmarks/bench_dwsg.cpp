#include <benchmark/benchmark.h>

#include "flattenet/dwsg.hpp"
#include "flattenet/rng.hpp"

using namespace flattenet;

namespace {

// default block shape at a scaled-down channel count
void BM_dwsg_forward(benchmark::State& state) {
    const std::int64_t c = state.range(0);
    Rng rng(3);
    Sequential<float> seq("bench");
    append_dwsg(seq, DwsgConvSpec{3, 1, 32, 32, 64, 1, true}, c, "bench", rng);
    auto x = Tensor<float>::uniform({1, c, 8, 8}, 1.0f, rng);
    for (auto _ : state) {
        auto y = seq.forward(x, false);
        benchmark::DoNotOptimize(y.data());
    }
}

void BM_dwsg_train_step(benchmark::State& state) {
    const std::int64_t c = state.range(0);
    Rng rng(4);
    Sequential<float> seq("bench");
    append_dwsg(seq, DwsgConvSpec{3, 1, 32, 32, 64, 1, true}, c, "bench", rng);
    auto x = Tensor<float>::uniform({2, c, 8, 8}, 1.0f, rng);
    auto dy = Tensor<float>::uniform({2, c, 8, 8}, 1.0f, rng);
    for (auto _ : state) {
        auto y = seq.forward(x, true);
        auto dx = seq.backward(dy);
        benchmark::DoNotOptimize(dx.data());
        zero_grads(seq.params());
    }
}

} // namespace

BENCHMARK(BM_dwsg_forward)->Arg(256)->Arg(512);
BENCHMARK(BM_dwsg_train_step)->Arg(256);
