// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "saqt/errors.hpp"
#include "saqt/model.hpp"
#include "saqt/quant.hpp"
#include "saqt/rng.hpp"
#include "saqt/tokens.hpp"

using saqt::Granularity;
using saqt::QuantSpec;
using saqt::Tensor;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed, double amp = 3.0) {
    Tensor t(std::move(shape));
    saqt::Rng rng(seed);
    for (auto& v : t.values())
        v = static_cast<float>(rng.uniform_sym(amp));
    return t;
}

// Exhaustive argmin over the integer levels of the grid: tries every k in
// [-maxlev, maxlev], keeps the level whose reconstructed value float(k*delta)
// is closest to x, breaking exact ties toward even k. The quantizer computes
// the level by division; agreement across random data shows the shortcut
// lands on the true nearest grid point.
float nearest_on_grid(float x, double delta, int bits) {
    const int maxlev = saqt::quant_max_level(bits);
    float best = 0.0f;
    double best_err = std::numeric_limits<double>::infinity();
    long best_k = 0;
    for (int k = -maxlev; k <= maxlev; ++k) {
        const float v = static_cast<float>(k * delta);
        const double err = std::fabs(double(v) - double(x));
        const bool wins =
            err < best_err || (err == best_err && k % 2 == 0 && best_k % 2 != 0);
        if (wins) {
            best_err = err;
            best = v;
            best_k = k;
        }
    }
    return best;
}

}  // namespace

TEST_CASE("quant_max_level") {
    CHECK(saqt::quant_max_level(8) == 127);
    CHECK(saqt::quant_max_level(4) == 7);
    CHECK(saqt::quant_max_level(2) == 1);
}

TEST_CASE("spec validation") {
    QuantSpec ok;
    saqt::validate(ok);
    QuantSpec low;
    low.bits = 1;
    CHECK_THROWS_AS(saqt::validate(low), std::invalid_argument);
    QuantSpec high;
    high.bits = 9;
    CHECK_THROWS_AS(saqt::validate(high), std::invalid_argument);
    QuantSpec bad_scale;
    bad_scale.static_scale = 0.0;
    CHECK_THROWS_AS(saqt::validate(bad_scale), std::invalid_argument);
    bad_scale.static_scale = -1.0;
    CHECK_THROWS_AS(saqt::validate(bad_scale), std::invalid_argument);
}

TEST_CASE("granularity strings") {
    CHECK(saqt::granularity_from_string("per_tensor") == Granularity::per_tensor);
    CHECK(saqt::granularity_from_string("per_token") == Granularity::per_token);
    CHECK(std::string(to_string(Granularity::per_token)) == "per_token");
    CHECK_THROWS_AS(saqt::granularity_from_string("per_channel"), saqt::DataError);
}

TEST_CASE("scale of a known tensor") {
    Tensor t({1, 2}, {254.0f, -10.0f});
    CHECK(saqt::compute_scale(t, 8) == 2.0);
    Tensor z({2, 2}, {0.0f, 0.0f, 0.0f, 0.0f});
    CHECK(saqt::compute_scale(z, 8) == 1.0);
    QuantSpec spec;
    const Tensor qz = saqt::fake_quantize(z, spec);
    for (float v : qz.values())
        CHECK(v == 0.0f);
}

TEST_CASE("three-bit example") {
    // max|x| = 2, levels -3..3, delta = 2/3; 1.0 lands on level 2 -> 4/3
    Tensor t({1, 2}, {1.0f, -2.0f});
    QuantSpec spec;
    spec.bits = 3;
    const Tensor q = saqt::fake_quantize(t, spec);
    CHECK(q(0, 0) == static_cast<float>(2 * (2.0 / 3.0)));
    CHECK(q(0, 1) == -2.0f);
}

TEST_CASE("quantizer matches the exhaustive grid search") {
    for (int bits : {2, 3, 5, 8}) {
        for (std::uint64_t seed = 1; seed <= 4; ++seed) {
            const Tensor x = random_tensor({8, 16}, seed * 19 + bits, seed == 1 ? 0.01 : 40.0);
            QuantSpec spec;
            spec.bits = bits;
            const Tensor q = saqt::fake_quantize(x, spec);
            const double delta = saqt::compute_scale(x, bits);
            for (std::size_t i = 0; i < x.size(); ++i) {
                const float expect = nearest_on_grid(x.values()[i], delta, bits);
                REQUIRE(std::memcmp(&q.values()[i], &expect, sizeof(float)) == 0);
            }

            QuantSpec row_spec = spec;
            row_spec.granularity = Granularity::per_token;
            const Tensor qr = saqt::fake_quantize(x, row_spec);
            for (std::size_t r = 0; r < x.rows(); ++r) {
                Tensor row({1, x.row_width()});
                for (std::size_t j = 0; j < x.row_width(); ++j)
                    row(0, j) = x(r, j);
                const double row_delta = saqt::compute_scale(row, bits);
                for (std::size_t j = 0; j < x.row_width(); ++j) {
                    const float expect = nearest_on_grid(x(r, j), row_delta, bits);
                    const float got = qr(r, j);
                    REQUIRE(std::memcmp(&got, &expect, sizeof(float)) == 0);
                }
            }
        }
    }
}

TEST_CASE("quantization is a fixed point") {
    for (int bits = 2; bits <= 8; ++bits) {
        for (auto gran : {Granularity::per_tensor, Granularity::per_token}) {
            const Tensor x = random_tensor({6, 10}, 100 + bits, 25.0);
            QuantSpec spec;
            spec.bits = bits;
            spec.granularity = gran;
            const Tensor once = saqt::fake_quantize(x, spec);
            const Tensor twice = saqt::fake_quantize(once, spec);
            REQUIRE(bit_equal(once, twice));
        }
    }
}

TEST_CASE("error is bounded by half the step") {
    for (int bits : {2, 4, 8}) {
        const Tensor x = random_tensor({16, 16}, 7 + bits, 12.0);
        QuantSpec spec;
        spec.bits = bits;
        const Tensor q = saqt::fake_quantize(x, spec);
        const double delta = saqt::compute_scale(x, bits);
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double err = std::fabs(double(q.values()[i]) - double(x.values()[i]));
            // tiny slack: the grid value is stored as a float
            CHECK(err <= delta / 2.0 * (1.0 + 2e-5));
        }
    }
}

TEST_CASE("per-token rows are independent") {
    Tensor x = random_tensor({4, 8}, 42, 2.0);
    QuantSpec spec;
    spec.granularity = Granularity::per_token;
    const Tensor before = saqt::fake_quantize(x, spec);
    x(3, 0) = 1000.0f;  // blowing up one row must not disturb the others
    const Tensor after = saqt::fake_quantize(x, spec);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t j = 0; j < 8; ++j)
            CHECK(before(r, j) == after(r, j));

    QuantSpec flat;
    flat.granularity = Granularity::per_tensor;
    const Tensor coarse = saqt::fake_quantize(x, flat);
    bool all_rows_equal = true;
    for (std::size_t r = 0; r < 3 && all_rows_equal; ++r)
        for (std::size_t j = 0; j < 8; ++j)
            if (coarse(r, j) != after(r, j))
                all_rows_equal = false;
    CHECK_FALSE(all_rows_equal);  // the shared scale does disturb them
}

TEST_CASE("a static scale collapses per-token to per-tensor") {
    const Tensor x = random_tensor({5, 9}, 8, 6.0);
    QuantSpec a;
    a.granularity = Granularity::per_token;
    a.static_scale = 0.05;
    QuantSpec b;
    b.granularity = Granularity::per_tensor;
    b.static_scale = 0.05;
    CHECK(bit_equal(saqt::fake_quantize(x, a), saqt::fake_quantize(x, b)));
}

TEST_CASE("token exclusion") {
    Tensor x = random_tensor({5, 8}, 31, 2.0);
    x(2, 3) = 400.0f;  // outlier sits in the excluded row
    QuantSpec spec;
    const Tensor q = saqt::fake_quantize_excluding_token(x, spec, 2);

    for (std::size_t j = 0; j < 8; ++j)
        CHECK(q(2, j) == x(2, j));

    // remaining rows match quantizing the tensor with the row removed
    Tensor rest({4, 8});
    std::size_t out = 0;
    for (std::size_t r = 0; r < 5; ++r) {
        if (r == 2)
            continue;
        for (std::size_t j = 0; j < 8; ++j)
            rest(out, j) = x(r, j);
        ++out;
    }
    const Tensor qrest = saqt::fake_quantize(rest, spec);
    out = 0;
    for (std::size_t r = 0; r < 5; ++r) {
        if (r == 2)
            continue;
        for (std::size_t j = 0; j < 8; ++j)
            CHECK(q(r, j) == qrest(out, j));
        ++out;
    }

    CHECK(saqt::compute_scale(rest, 8) <= saqt::compute_scale(x, 8));
    CHECK_THROWS_AS(saqt::fake_quantize_excluding_token(x, spec, 5), std::invalid_argument);
    CHECK_THROWS_AS(
        saqt::fake_quantize_excluding_token(Tensor({4}, {1, 2, 3, 4}), spec, 0),
        std::invalid_argument);
}

TEST_CASE("weight quantization is per-tensor") {
    const Tensor w = random_tensor({8, 8}, 77, 0.5);
    QuantSpec spec;
    spec.bits = 6;
    CHECK(bit_equal(saqt::quantize_weights(w, 6), saqt::fake_quantize(w, spec)));
}

TEST_CASE("calibration replays the dynamic run exactly") {
    auto model = saqt::synth_model(saqt::default_synth_config(), {}, 3);
    const auto tokens = saqt::generate_stream(17, 48, model.config.vocab_size);

    std::vector<saqt::QuantSite> sites;
    for (int layer = 1; layer <= model.config.n_layers; ++layer)
        for (auto kind : saqt::default_scope())
            if (saqt::is_linear(kind))
                sites.push_back({layer, kind});

    const auto scales = saqt::calibrate_static_scales(model, tokens, sites, 8);
    const auto again = saqt::calibrate_static_scales(model, tokens, sites, 8);
    REQUIRE(scales.size() == sites.size());
    CHECK(scales == again);
    for (const auto& [site, delta] : scales)
        CHECK(delta > 0.0);

    const auto plan = saqt::uniform_plan(8);
    const Tensor dynamic_logits = saqt::forward(model, tokens, &plan);

    model.static_scales = scales;
    saqt::EvalOptions opts;
    opts.use_static_scales = true;
    const Tensor static_logits = saqt::forward(model, tokens, &plan, opts);
    REQUIRE(bit_equal(dynamic_logits, static_logits));

    // a different stream sees different maxima, so the replay no longer holds
    const auto other = saqt::generate_stream(18, 48, model.config.vocab_size);
    CHECK_FALSE(bit_equal(saqt::forward(model, other, &plan),
                          saqt::forward(model, other, &plan, opts)));
}

TEST_CASE("static evaluation without calibration is an error") {
    auto model = saqt::synth_model(saqt::default_synth_config(), {}, 3);
    const auto tokens = saqt::generate_stream(17, 16, model.config.vocab_size);
    const auto plan = saqt::uniform_plan(8);
    saqt::EvalOptions opts;
    opts.use_static_scales = true;
    CHECK_THROWS_WITH_AS(saqt::forward(model, tokens, &plan, opts),
                         doctest::Contains("no calibrated scale"), saqt::DataError);
}
