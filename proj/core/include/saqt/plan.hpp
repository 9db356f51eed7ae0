// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "saqt/sites.hpp"

namespace saqt {

struct SpikeReport;  // profile.hpp

enum class TreatmentKind : std::uint8_t { integer, fp16, fp8_e5m2, fp8_e4m3, full };

// What a site runs in: b-bit symmetric integer fake quantization, one of the
// software-emulated float formats, or untouched full precision.
struct Treatment {
    TreatmentKind kind = TreatmentKind::integer;
    int bits = 8;  // integer kind only

    static Treatment integer(int bits) { return {TreatmentKind::integer, bits}; }
    static Treatment fp16() { return {TreatmentKind::fp16, 0}; }
    static Treatment fp8_e5m2() { return {TreatmentKind::fp8_e5m2, 0}; }
    static Treatment fp8_e4m3() { return {TreatmentKind::fp8_e4m3, 0}; }
    static Treatment full() { return {TreatmentKind::full, 0}; }

    bool is_high() const {
        return kind == TreatmentKind::fp16 || kind == TreatmentKind::fp8_e5m2 ||
               kind == TreatmentKind::fp8_e4m3;
    }
    auto operator<=>(const Treatment&) const = default;
};

std::string to_string(const Treatment& t);            // "int8", "fp16", "fp8_e5m2", ...
Treatment treatment_from_string(const std::string&);  // DataError on unknown

// Whether a high-precision treatment covers the projection's input
// activations, its weights, or both (the default).
enum class HighApplies : std::uint8_t { activations, weights, both };

const char* to_string(HighApplies h);
HighApplies high_applies_from_string(const std::string& s);

// Which boundary's statistic put a site on the plan. Informational: execution
// treats the projection as a unit either way.
enum class TriggerBoundary : std::uint8_t { input, output, both, unspecified };

const char* to_string(TriggerBoundary b);
TriggerBoundary trigger_boundary_from_string(const std::string& s);

struct PlanSite {
    int layer = 1;  // 1-based, like everything user visible
    SiteKind kind = SiteKind::down;
    TriggerBoundary boundary = TriggerBoundary::unspecified;
    Treatment treatment;
    auto operator<=>(const PlanSite&) const = default;
};

// The seven linear projections of a decoder layer. Softmax, the attention
// matmuls and the norms are never quantized and stay outside any scope.
std::vector<SiteKind> default_scope();

struct PrecisionPlan {
    std::string model_id;
    int default_bits = 8;
    bool default_full = false;  // true: unlisted in-scope sites stay full precision
    std::vector<SiteKind> scope = default_scope();
    HighApplies high_applies = HighApplies::both;
    std::vector<PlanSite> sites;
    std::optional<std::uint64_t> seed;  // present on randomly drawn plans

    // full for non-linear or out-of-scope kinds; the listed treatment for a
    // listed (layer, kind); otherwise the default treatment.
    Treatment treatment_for(int layer, SiteKind kind) const;
};

// Uniform b-bit plan over the default scope (the naive baseline).
PrecisionPlan uniform_plan(int bits);

// Everything full precision; evaluating it must match no plan at all.
PrecisionPlan full_plan();

// down/out sites whose input or output max_abs exceeds theta get `high`;
// every other in-scope site gets int(bits).
PrecisionPlan build_targeted_plan(const SpikeReport& report, double theta = 100.0,
                                  Treatment high = Treatment::fp16(), int bits = 8);

// Same number of high sites as `reference`, drawn uniformly without
// replacement from the model's down/out sites, disjoint from the reference
// choices. Deterministic for a given seed.
PrecisionPlan build_random_plan(const SpikeReport& report, const PrecisionPlan& reference,
                                std::uint64_t seed);

std::string plan_to_json(const PrecisionPlan& plan);
PrecisionPlan plan_from_json(const std::string& text);  // DataError on bad input

void save_plan(const PrecisionPlan& plan, const std::string& path);
PrecisionPlan load_plan(const std::string& path);

}  // namespace saqt
