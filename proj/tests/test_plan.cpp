// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "saqt/errors.hpp"
#include "saqt/plan.hpp"
#include "saqt/profile.hpp"

using saqt::Boundary;
using saqt::HighApplies;
using saqt::PlanSite;
using saqt::PrecisionPlan;
using saqt::SiteId;
using saqt::SiteKind;
using saqt::SiteStats;
using saqt::SpikeReport;
using saqt::Treatment;
using saqt::TriggerBoundary;

namespace {

struct Hot {
    int layer;
    SiteKind kind;
    Boundary boundary;
    double max_abs;
};

// A report skeleton with cold down/out rows everywhere and the given maxima
// written on top; enough surface for the planner, which reads nothing else.
SpikeReport fake_report(int n_layers, const std::vector<Hot>& hot) {
    SpikeReport r;
    r.model_id = "synth:test";
    r.n_layers = n_layers;
    for (int l = 1; l <= n_layers; ++l)
        for (auto kind : {SiteKind::down, SiteKind::out, SiteKind::gate})
            for (auto b : {Boundary::input, Boundary::output}) {
                SiteStats s;
                s.site = {l, kind, b};
                s.max_abs = 1.0;
                r.sites.push_back(s);
            }
    for (const Hot& h : hot)
        for (auto& s : r.sites)
            if (s.site == SiteId{h.layer, h.kind, h.boundary})
                s.max_abs = h.max_abs;
    return r;
}

PlanSite site(int layer, SiteKind kind, TriggerBoundary b,
              Treatment t = Treatment::fp16()) {
    return PlanSite{layer, kind, b, t};
}

}  // namespace

TEST_CASE("default scope is the seven projections") {
    const auto scope = saqt::default_scope();
    REQUIRE(scope.size() == 7);
    CHECK(scope == std::vector<SiteKind>{SiteKind::q, SiteKind::k, SiteKind::v, SiteKind::out,
                                         SiteKind::gate, SiteKind::up, SiteKind::down});
    for (auto k : scope)
        CHECK(saqt::is_linear(k));
}

TEST_CASE("treatment strings") {
    for (int b = 2; b <= 8; ++b) {
        const auto t = saqt::treatment_from_string("int" + std::to_string(b));
        CHECK(t == Treatment::integer(b));
        CHECK(to_string(t) == "int" + std::to_string(b));
    }
    CHECK(saqt::treatment_from_string("fp16") == Treatment::fp16());
    CHECK(saqt::treatment_from_string("fp8_e5m2") == Treatment::fp8_e5m2());
    CHECK(saqt::treatment_from_string("fp8_e4m3") == Treatment::fp8_e4m3());
    CHECK(saqt::treatment_from_string("full") == Treatment::full());
    CHECK(to_string(Treatment::fp8_e4m3()) == "fp8_e4m3");
    for (const char* bad : {"int1", "int9", "int10", "INT8", "fp32", "foo", ""})
        CHECK_THROWS_AS(saqt::treatment_from_string(bad), saqt::DataError);
    CHECK(Treatment::fp16().is_high());
    CHECK(Treatment::fp8_e5m2().is_high());
    CHECK_FALSE(Treatment::integer(8).is_high());
    CHECK_FALSE(Treatment::full().is_high());
}

TEST_CASE("high_applies and boundary strings") {
    for (auto h : {HighApplies::activations, HighApplies::weights, HighApplies::both})
        CHECK(saqt::high_applies_from_string(to_string(h)) == h);
    CHECK_THROWS_AS(saqt::high_applies_from_string("acts"), saqt::DataError);
    for (auto b : {TriggerBoundary::input, TriggerBoundary::output, TriggerBoundary::both,
                   TriggerBoundary::unspecified})
        CHECK(saqt::trigger_boundary_from_string(to_string(b)) == b);
    CHECK_THROWS_AS(saqt::trigger_boundary_from_string("neither"), saqt::DataError);
}

TEST_CASE("treatment_for resolves listed, default and out-of-scope sites") {
    PrecisionPlan p = saqt::uniform_plan(6);
    CHECK(p.treatment_for(3, SiteKind::q) == Treatment::integer(6));
    CHECK(p.treatment_for(1, SiteKind::rmsnorm_in) == Treatment::full());

    p.sites.push_back(site(3, SiteKind::down, TriggerBoundary::output));
    CHECK(p.treatment_for(3, SiteKind::down) == Treatment::fp16());
    CHECK(p.treatment_for(4, SiteKind::down) == Treatment::integer(6));

    p.scope = {SiteKind::down};
    CHECK(p.treatment_for(3, SiteKind::q) == Treatment::full());
    CHECK(p.treatment_for(4, SiteKind::down) == Treatment::integer(6));

    const PrecisionPlan full = saqt::full_plan();
    CHECK(full.treatment_for(2, SiteKind::up) == Treatment::full());

    CHECK_THROWS_AS(saqt::uniform_plan(1), std::invalid_argument);
    CHECK_THROWS_AS(saqt::uniform_plan(9), std::invalid_argument);
}

TEST_CASE("targeted planner reproduces known hot-layer patterns") {
    // early + final down layers
    auto plan = saqt::build_targeted_plan(fake_report(
        32, {{2, SiteKind::down, Boundary::output, 450.0},
             {32, SiteKind::down, Boundary::output, 280.0}}));
    CHECK(plan.model_id == "synth:test");
    CHECK(plan.sites == std::vector<PlanSite>{site(2, SiteKind::down, TriggerBoundary::output),
                                              site(32, SiteKind::down, TriggerBoundary::output)});

    // late out projection joins, one site hot on the input side
    plan = saqt::build_targeted_plan(fake_report(
        32, {{2, SiteKind::down, Boundary::input, 800.0},
             {31, SiteKind::down, Boundary::output, 130.0},
             {32, SiteKind::out, Boundary::output, 101.0}}));
    CHECK(plan.sites == std::vector<PlanSite>{site(2, SiteKind::down, TriggerBoundary::input),
                                              site(31, SiteKind::down, TriggerBoundary::output),
                                              site(32, SiteKind::out, TriggerBoundary::output)});

    // deeper model, a site hot on both boundaries
    plan = saqt::build_targeted_plan(fake_report(
        40, {{4, SiteKind::down, Boundary::output, 200.0},
             {39, SiteKind::down, Boundary::output, 350.0},
             {40, SiteKind::out, Boundary::input, 180.0},
             {40, SiteKind::out, Boundary::output, 220.0}}));
    CHECK(plan.sites == std::vector<PlanSite>{site(4, SiteKind::down, TriggerBoundary::output),
                                              site(39, SiteKind::down, TriggerBoundary::output),
                                              site(40, SiteKind::out, TriggerBoundary::both)});

    // cluster at the end: down and out of the same layer both listed
    plan = saqt::build_targeted_plan(fake_report(
        32, {{2, SiteKind::down, Boundary::output, 500.0},
             {31, SiteKind::down, Boundary::output, 180.0},
             {32, SiteKind::down, Boundary::input, 120.0},
             {32, SiteKind::down, Boundary::output, 400.0},
             {32, SiteKind::out, Boundary::output, 110.0}}));
    CHECK(plan.sites == std::vector<PlanSite>{site(2, SiteKind::down, TriggerBoundary::output),
                                              site(31, SiteKind::down, TriggerBoundary::output),
                                              site(32, SiteKind::down, TriggerBoundary::both),
                                              site(32, SiteKind::out, TriggerBoundary::output)});
}

TEST_CASE("targeted planner ignores other kinds and respects theta strictly") {
    // a blazing gate site and a down site at exactly theta select nothing
    const auto plan = saqt::build_targeted_plan(fake_report(
        12, {{5, SiteKind::gate, Boundary::output, 9000.0},
             {10, SiteKind::down, Boundary::output, 100.0}}));
    CHECK(plan.sites.empty());
    CHECK(plan.default_bits == 8);

    const auto custom = saqt::build_targeted_plan(
        fake_report(12, {{10, SiteKind::down, Boundary::output, 100.0}}), 99.0,
        Treatment::fp8_e5m2(), 6);
    REQUIRE(custom.sites.size() == 1);
    CHECK(custom.sites[0].treatment == Treatment::fp8_e5m2());
    CHECK(custom.default_bits == 6);

    CHECK_THROWS_AS(
        saqt::build_targeted_plan(fake_report(2, {}), 100.0, Treatment::integer(8)),
        std::invalid_argument);
    CHECK_THROWS_AS(
        saqt::build_targeted_plan(fake_report(2, {}), 100.0, Treatment::full()),
        std::invalid_argument);
    CHECK_THROWS_AS(saqt::build_targeted_plan(fake_report(2, {}), 0.0),
                    std::invalid_argument);
    CHECK_THROWS_AS(saqt::build_targeted_plan(fake_report(2, {}), 100.0,
                                              Treatment::fp16(), 1),
                    std::invalid_argument);
}

TEST_CASE("random plans are deterministic, disjoint and sorted") {
    const auto report = fake_report(8, {{2, SiteKind::down, Boundary::output, 500.0},
                                        {7, SiteKind::out, Boundary::output, 200.0}});
    const auto reference = saqt::build_targeted_plan(report);
    REQUIRE(reference.sites.size() == 2);

    std::set<std::vector<std::pair<int, SiteKind>>> distinct;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto a = saqt::build_random_plan(report, reference, seed);
        const auto b = saqt::build_random_plan(report, reference, seed);
        CHECK(a.sites == b.sites);
        CHECK(a.seed == seed);
        CHECK(a.model_id == report.model_id);
        CHECK(a.default_bits == reference.default_bits);
        REQUIRE(a.sites.size() == reference.sites.size());

        std::vector<std::pair<int, SiteKind>> picks;
        for (std::size_t i = 0; i < a.sites.size(); ++i) {
            const auto& s = a.sites[i];
            CHECK((s.kind == SiteKind::down || s.kind == SiteKind::out));
            CHECK(s.treatment == Treatment::fp16());
            CHECK(s.boundary == TriggerBoundary::unspecified);
            // never lands on a reference pick
            for (const auto& r : reference.sites)
                CHECK((s.layer != r.layer || s.kind != r.kind));
            if (i > 0)
                CHECK(std::tie(a.sites[i - 1].layer, a.sites[i - 1].kind) <
                      std::tie(s.layer, s.kind));
            picks.emplace_back(s.layer, s.kind);
        }
        distinct.insert(picks);
    }
    CHECK(distinct.size() > 1);  // the seed really does steer the draw

    // a reference covering every candidate leaves nothing to draw from
    const auto tiny = fake_report(1, {{1, SiteKind::down, Boundary::output, 500.0},
                                      {1, SiteKind::out, Boundary::output, 500.0}});
    const auto all_taken = saqt::build_targeted_plan(tiny);
    REQUIRE(all_taken.sites.size() == 2);
    CHECK_THROWS_AS(saqt::build_random_plan(tiny, all_taken, 1), std::invalid_argument);
}

TEST_CASE("plan json round-trips losslessly") {
    PrecisionPlan p;
    p.model_id = "synth:seed=11:L8:d64:h4:ff172:v256";
    p.default_bits = 5;
    p.scope = {SiteKind::down, SiteKind::out, SiteKind::q};
    p.high_applies = HighApplies::activations;
    p.sites.push_back(site(2, SiteKind::down, TriggerBoundary::both));
    p.sites.push_back(site(3, SiteKind::out, TriggerBoundary::input, Treatment::fp8_e4m3()));
    p.sites.push_back(site(4, SiteKind::q, TriggerBoundary::unspecified, Treatment::integer(4)));
    p.seed = 777;

    const auto back = saqt::plan_from_json(saqt::plan_to_json(p));
    CHECK(back.model_id == p.model_id);
    CHECK(back.default_bits == 5);
    CHECK(back.default_full == false);
    CHECK(back.scope == p.scope);
    CHECK(back.high_applies == HighApplies::activations);
    CHECK(back.sites == p.sites);
    CHECK(back.seed == p.seed);

    PrecisionPlan full = saqt::full_plan();
    const auto full_back = saqt::plan_from_json(saqt::plan_to_json(full));
    CHECK(full_back.default_full);
    CHECK(!full_back.seed.has_value());
}

TEST_CASE("plan json rejects inconsistent documents") {
    const std::string good = saqt::plan_to_json(saqt::uniform_plan(8));

    auto corrupt = [&](const std::string& from, const std::string& to) {
        std::string text = good;
        const auto at = text.find(from);
        REQUIRE(at != std::string::npos);
        text.replace(at, from.size(), to);
        return text;
    };

    CHECK_THROWS_AS(saqt::plan_from_json("{ nope"), saqt::DataError);
    CHECK_THROWS_AS(saqt::plan_from_json("{}"), saqt::DataError);
    CHECK_THROWS_AS(saqt::plan_from_json(corrupt("precision_plan", "spike_report")),
                    saqt::DataError);
    CHECK_THROWS_AS(saqt::plan_from_json(corrupt("\"schema_version\": 1", "\"schema_version\": 2")),
                    saqt::DataError);
    // default_treatment says int8 but default_bits says 4
    CHECK_THROWS_AS(saqt::plan_from_json(corrupt("\"default_bits\": 8", "\"default_bits\": 4")),
                    saqt::DataError);
    CHECK_THROWS_AS(saqt::plan_from_json(corrupt("\"default_bits\": 8", "\"default_bits\": 12")),
                    saqt::DataError);
    CHECK_THROWS_AS(saqt::plan_from_json(corrupt("\"q\"", "\"rmsnorm_in\"")), saqt::DataError);
}
