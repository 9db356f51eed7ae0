// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "saqt/formats.hpp"
#include "saqt/quant.hpp"
#include "saqt/rng.hpp"
#include "saqt/tensor.hpp"

namespace {

saqt::Tensor random_tensor(int rows, int cols, std::uint64_t seed) {
    saqt::Tensor x({rows, cols});
    saqt::Rng rng(seed);
    for (auto& v : x.values())
        v = static_cast<float>(rng.uniform_sym(4.0));
    return x;
}

void bm_fake_quantize_per_tensor(benchmark::State& state) {
    const saqt::Tensor x = random_tensor(64, static_cast<int>(state.range(0)), 1);
    saqt::QuantSpec spec;
    for (auto _ : state) {
        saqt::Tensor y = saqt::fake_quantize(x, spec);
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(x.size()));
}
BENCHMARK(bm_fake_quantize_per_tensor)->Arg(64)->Arg(1024)->Arg(4096);

void bm_fake_quantize_per_token(benchmark::State& state) {
    const saqt::Tensor x = random_tensor(64, static_cast<int>(state.range(0)), 2);
    saqt::QuantSpec spec;
    spec.granularity = saqt::Granularity::per_token;
    for (auto _ : state) {
        saqt::Tensor y = saqt::fake_quantize(x, spec);
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(x.size()));
}
BENCHMARK(bm_fake_quantize_per_token)->Arg(64)->Arg(1024)->Arg(4096);

void bm_fp8_round_trip(benchmark::State& state) {
    const saqt::Fp8Format fmt =
        state.range(0) ? saqt::Fp8Format::e4m3() : saqt::Fp8Format::e5m2();
    const saqt::Tensor x = random_tensor(64, 1024, 3);
    for (auto _ : state) {
        float acc = 0.0f;
        for (float v : x.values())
            acc += saqt::fp8_decode(saqt::fp8_encode(v, fmt), fmt);
        benchmark::DoNotOptimize(acc);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(x.size()));
}
BENCHMARK(bm_fp8_round_trip)->Arg(0)->Arg(1);

void bm_fp16_round(benchmark::State& state) {
    const saqt::Tensor x = random_tensor(64, 1024, 4);
    for (auto _ : state) {
        float acc = 0.0f;
        for (float v : x.values())
            acc += saqt::fp16_round(v);
        benchmark::DoNotOptimize(acc);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(x.size()));
}
BENCHMARK(bm_fp16_round);

}  // namespace

BENCHMARK_MAIN();
