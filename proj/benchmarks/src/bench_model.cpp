// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "saqt/model.hpp"
#include "saqt/plan.hpp"
#include "saqt/tokens.hpp"

namespace {

void bm_forward_full(benchmark::State& state) {
    const saqt::ModelBundle model = saqt::synth_model(saqt::default_synth_config(), {}, 1);
    const auto tokens =
        saqt::generate_stream(7, static_cast<int>(state.range(0)), model.config.vocab_size);
    for (auto _ : state) {
        saqt::Tensor logits = saqt::forward(model, tokens);
        benchmark::DoNotOptimize(logits.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bm_forward_full)->Arg(16)->Arg(64);

void bm_forward_int8(benchmark::State& state) {
    const saqt::ModelBundle model = saqt::synth_model(saqt::default_synth_config(), {}, 1);
    const auto tokens =
        saqt::generate_stream(7, static_cast<int>(state.range(0)), model.config.vocab_size);
    const saqt::PrecisionPlan plan = saqt::uniform_plan(8);
    for (auto _ : state) {
        saqt::Tensor logits = saqt::forward(model, tokens, &plan);
        benchmark::DoNotOptimize(logits.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bm_forward_int8)->Arg(16)->Arg(64);

void bm_calibrate(benchmark::State& state) {
    const saqt::ModelBundle model = saqt::synth_model(saqt::default_synth_config(), {}, 1);
    const auto tokens = saqt::generate_stream(7, 32, model.config.vocab_size);
    std::vector<saqt::QuantSite> sites;
    for (int layer = 1; layer <= model.config.n_layers; ++layer)
        for (saqt::SiteKind kind : saqt::default_scope())
            sites.push_back({layer, kind});
    for (auto _ : state) {
        auto scales = saqt::calibrate_static_scales(model, tokens, sites, 8);
        benchmark::DoNotOptimize(scales);
    }
}
BENCHMARK(bm_calibrate);

}  // namespace
