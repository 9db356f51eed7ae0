// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "saqt/errors.hpp"
#include "saqt/model.hpp"
#include "saqt/profile.hpp"
#include "saqt/rng.hpp"
#include "saqt/tokens.hpp"

using saqt::Boundary;
using saqt::SiteId;
using saqt::SiteKind;
using saqt::SpikeReport;
using saqt::StatsAccumulator;
using saqt::Tensor;

namespace {

saqt::ModelBundle spiked_model(std::uint64_t seed) {
    saqt::SpikeInjection inject;
    inject.channels.push_back({2, SiteKind::down, 0, 300.0f});
    return saqt::synth_model(saqt::default_synth_config(), inject, seed);
}

}  // namespace

TEST_CASE("accumulator stats of a known tensor") {
    Tensor t({2, 2}, {1.0f, -2.0f, 3.0f, 0.0f});
    StatsAccumulator acc;
    acc.add(t);
    const auto s = acc.finalize(SiteId{1, SiteKind::q, Boundary::input});
    CHECK(s.count == 4);
    CHECK(s.mean == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(s.std_dev == doctest::Approx(std::sqrt(3.25)).epsilon(1e-12));
    CHECK(s.max_abs == 3.0);
    CHECK(s.token_argmax == 1);  // row of the 3.0
}

TEST_CASE("sharded accumulation matches one pass") {
    saqt::Rng rng(12);
    Tensor whole({30, 8});
    for (auto& v : whole.values())
        v = static_cast<float>(rng.uniform_sym(5.0));
    whole(17, 3) = 40.0f;  // unambiguous argmax

    StatsAccumulator once;
    once.add(whole);

    auto shard = [&](std::size_t r0, std::size_t r1) {
        Tensor part({r1 - r0, 8});
        for (std::size_t r = r0; r < r1; ++r)
            for (std::size_t c = 0; c < 8; ++c)
                part(r - r0, c) = whole(r, c);
        StatsAccumulator a;
        a.add(part, static_cast<std::int64_t>(r0));
        return a;
    };
    StatsAccumulator s1 = shard(0, 10), s2 = shard(10, 18), s3 = shard(18, 30);

    StatsAccumulator left = s1;
    left.merge(s2);
    left.merge(s3);
    StatsAccumulator right = s2;
    right.merge(s3);
    StatsAccumulator lr = s1;
    lr.merge(right);

    const SiteId id{1, SiteKind::v, Boundary::output};
    for (const StatsAccumulator* m : {&left, &lr}) {
        const auto a = m->finalize(id);
        const auto b = once.finalize(id);
        CHECK(a.count == b.count);
        CHECK(a.max_abs == b.max_abs);  // max and count merge exactly
        CHECK(a.token_argmax == 17);
        CHECK(a.mean == doctest::Approx(b.mean).epsilon(1e-6));
        CHECK(a.std_dev == doctest::Approx(b.std_dev).epsilon(1e-6));
    }
}

TEST_CASE("sigma rule flags the lone outlier") {
    Tensor t({1000});
    t[423] = 1000.0f;
    const auto hits = saqt::detect_sigma(t);
    REQUIRE(hits.size() == 1);
    CHECK(hits[0] == 423);

    Tensor flat({64});
    std::fill(flat.values().begin(), flat.values().end(), 2.5f);
    CHECK(saqt::detect_sigma(flat).empty());

    CHECK_THROWS_AS(saqt::detect_sigma(Tensor({1}, {1.0f})), std::invalid_argument);
    CHECK_THROWS_AS(saqt::detect_sigma(t, 0.0), std::invalid_argument);
}

TEST_CASE("spread rule thresholds are inclusive") {
    // 4 layers, 3 dims, 50 tokens: the default fractions demand at least
    // 1 layer (0.25*4) and at least 3 tokens (0.06*50), both met exactly.
    saqt::DimensionStats dims;
    dims.n_layers = 4;
    dims.d_model = 3;
    dims.seq_len = 50;
    dims.layer_dim_max.assign(4 * 3, 0.0f);
    dims.token_dim_max.assign(50 * 3, 0.0f);

    dims.layer_dim_max[2 * 3 + 0] = 6.0f;  // dim 0: exactly one layer at exactly 6.0
    for (int t : {5, 19, 40})
        dims.token_dim_max[t * 3 + 0] = 6.0f;  // and exactly three tokens

    dims.layer_dim_max[1 * 3 + 1] = 9.0f;  // dim 1: enough layers...
    for (int t : {5, 19})
        dims.token_dim_max[t * 3 + 1] = 9.0f;  // ...but only two tokens

    for (int t = 0; t < 50; ++t)
        dims.token_dim_max[t * 3 + 2] = 5.999f;  // dim 2: never reaches 6.0

    const auto flagged = saqt::detect_llmint8(dims);
    REQUIRE(flagged.size() == 1);
    CHECK(flagged[0] == 0);

    saqt::DimensionStats bad = dims;
    bad.layer_dim_max.pop_back();
    CHECK_THROWS_AS(saqt::detect_llmint8(bad), std::invalid_argument);
    CHECK_THROWS_AS(saqt::detect_llmint8(saqt::DimensionStats{}), std::invalid_argument);
}

TEST_CASE("collect_stats covers every site in fixed order") {
    const auto model = spiked_model(3);
    const auto toks = saqt::generate_stream(7, 24, model.config.vocab_size);
    const auto report = saqt::collect_stats(model, toks, "seed:7:len:24");

    CHECK(report.model_id == model.model_id);
    CHECK(report.stream_id == "seed:7:len:24");
    CHECK(report.seq_len == 24);
    REQUIRE(report.sites.size() == static_cast<std::size_t>(model.config.n_layers) * 18);
    CHECK(report.sites.front().site == SiteId{1, SiteKind::q, Boundary::input});
    CHECK(report.sites[1].site == SiteId{1, SiteKind::q, Boundary::output});
    CHECK(report.sites.back().site ==
          SiteId{model.config.n_layers, SiteKind::rmsnorm_post, Boundary::output});
    for (const auto& s : report.sites) {
        CHECK(s.count > 0);
        CHECK(std::isfinite(s.max_abs));
    }

    const auto* down_out = report.find(SiteId{2, SiteKind::down, Boundary::output});
    REQUIRE(down_out != nullptr);
    CHECK(down_out->max_abs > 100.0);  // the injected channel fires
    CHECK(report.find(SiteId{99, SiteKind::down, Boundary::output}) == nullptr);

    // every threshold site really is above theta, and none is missing
    for (const auto& id : report.threshold_sites)
        CHECK(report.find(id)->max_abs > report.theta);
    CHECK(report.threshold_sites ==
          saqt::detect_threshold(report, report.theta));

    CHECK_THROWS_AS(saqt::collect_stats(model, {}, "x"), std::invalid_argument);
    CHECK_THROWS_AS(saqt::collect_stats(model, toks, "x", -1.0), std::invalid_argument);
}

TEST_CASE("raising theta can only shrink the threshold set") {
    const auto model = spiked_model(3);
    const auto toks = saqt::generate_stream(7, 24, model.config.vocab_size);
    const auto report = saqt::collect_stats(model, toks, "s");
    std::size_t prev = saqt::detect_threshold(report, 1.0).size();
    for (double theta : {10.0, 100.0, 1000.0, 1e6}) {
        const std::size_t n = saqt::detect_threshold(report, theta).size();
        CHECK(n <= prev);
        prev = n;
    }
    CHECK_THROWS_AS(saqt::detect_threshold(report, 0.0), std::invalid_argument);
}

TEST_CASE("a stream-opener spike pins the residual argmax to position 0") {
    saqt::SpikeInjection inject;
    inject.bot = true;
    const auto model = saqt::synth_model(saqt::default_synth_config(), inject, 21);
    const auto toks = saqt::generate_stream(4, 32, model.config.vocab_size);
    const auto report = saqt::collect_stats(model, toks, "s");
    for (int layer = 1; layer <= model.config.n_layers; ++layer) {
        const auto* s = report.find(SiteId{layer, SiteKind::rmsnorm_in, Boundary::input});
        REQUIRE(s != nullptr);
        CHECK(s->token_argmax == 0);
        CHECK(s->max_abs >= 150.0);  // the planted 300 dominates every layer input
    }
    CHECK_FALSE(report.llmint8_dims.empty());
}

TEST_CASE("curve export") {
    const auto model = spiked_model(3);
    const auto toks = saqt::generate_stream(7, 16, model.config.vocab_size);
    const auto report = saqt::collect_stats(model, toks, "s");
    const std::string csv = saqt::export_curves_csv(report, SiteKind::down);

    REQUIRE(csv.rfind("layer,input_max_abs,output_max_abs\n", 0) == 0);
    std::size_t rows = 0;
    for (char c : csv)
        rows += c == '\n';
    CHECK(rows == static_cast<std::size_t>(model.config.n_layers) + 1);
    CHECK(csv.find("\n2,") != std::string::npos);

    SpikeReport empty;
    empty.n_layers = 2;
    CHECK_THROWS_AS(saqt::export_curves_csv(empty, SiteKind::down), saqt::DataError);
}

TEST_CASE("report json round-trips every field exactly") {
    const auto model = spiked_model(9);
    const auto toks = saqt::generate_stream(13, 20, model.config.vocab_size);
    const auto report = saqt::collect_stats(model, toks, "seed:13:len:20", 50.0);

    const auto back = saqt::report_from_json(saqt::report_to_json(report));
    CHECK(back.model_id == report.model_id);
    CHECK(back.stream_id == report.stream_id);
    CHECK(back.n_layers == report.n_layers);
    CHECK(back.d_model == report.d_model);
    CHECK(back.seq_len == report.seq_len);
    CHECK(back.theta == report.theta);
    REQUIRE(back.sites.size() == report.sites.size());
    for (std::size_t i = 0; i < report.sites.size(); ++i) {
        CHECK(back.sites[i].site == report.sites[i].site);
        CHECK(back.sites[i].max_abs == report.sites[i].max_abs);
        CHECK(back.sites[i].mean == report.sites[i].mean);
        CHECK(back.sites[i].std_dev == report.sites[i].std_dev);
        CHECK(back.sites[i].token_argmax == report.sites[i].token_argmax);
        CHECK(back.sites[i].count == report.sites[i].count);
    }
    CHECK(back.sigma_sites == report.sigma_sites);
    CHECK(back.llmint8_dims == report.llmint8_dims);
    CHECK(back.threshold_sites == report.threshold_sites);
    CHECK(back.dims.n_layers == report.dims.n_layers);
    CHECK(back.dims.layer_dim_max == report.dims.layer_dim_max);
    CHECK(back.dims.token_dim_max == report.dims.token_dim_max);

    CHECK_THROWS_AS(saqt::report_from_json("{ not json"), saqt::DataError);
    CHECK_THROWS_AS(saqt::report_from_json("{\"model_id\": 1}"), saqt::DataError);
}

TEST_CASE("report files") {
    namespace fs = std::filesystem;
    const fs::path dir =
        fs::temp_directory_path() / ("saqt_profile_test_" + std::to_string(::getpid()));
    fs::create_directories(dir);

    const auto model = spiked_model(9);
    const auto toks = saqt::generate_stream(13, 12, model.config.vocab_size);
    const auto report = saqt::collect_stats(model, toks, "s");
    const std::string path = (dir / "report.json").string();
    saqt::save_report(report, path);
    const auto back = saqt::load_report(path);
    CHECK(back.model_id == report.model_id);
    CHECK(back.sites.size() == report.sites.size());
    CHECK_THROWS_AS(saqt::load_report((dir / "missing.json").string()), saqt::DataError);
    fs::remove_all(dir);
}
