// SPDX-License-Identifier: Apache-2.0
#include "saqt/plan.hpp"

#include <algorithm>
#include <stdexcept>
#include <tuple>

#include <nlohmann/json.hpp>

#include "saqt/errors.hpp"
#include "saqt/io_detail.hpp"
#include "saqt/profile.hpp"
#include "saqt/rng.hpp"

namespace saqt {

using ordered_json = nlohmann::ordered_json;

std::string to_string(const Treatment& t) {
    switch (t.kind) {
        case TreatmentKind::integer: return "int" + std::to_string(t.bits);
        case TreatmentKind::fp16: return "fp16";
        case TreatmentKind::fp8_e5m2: return "fp8_e5m2";
        case TreatmentKind::fp8_e4m3: return "fp8_e4m3";
        case TreatmentKind::full: return "full";
    }
    return "?";
}

Treatment treatment_from_string(const std::string& s) {
    if (s == "fp16")
        return Treatment::fp16();
    if (s == "fp8_e5m2")
        return Treatment::fp8_e5m2();
    if (s == "fp8_e4m3")
        return Treatment::fp8_e4m3();
    if (s == "full")
        return Treatment::full();
    if (s.rfind("int", 0) == 0 && s.size() == 4 && s[3] >= '2' && s[3] <= '8')
        return Treatment::integer(s[3] - '0');
    throw DataError("unknown treatment: '" + s + "'");
}

const char* to_string(HighApplies h) {
    switch (h) {
        case HighApplies::activations: return "activations";
        case HighApplies::weights: return "weights";
        case HighApplies::both: return "both";
    }
    return "?";
}

HighApplies high_applies_from_string(const std::string& s) {
    if (s == "activations")
        return HighApplies::activations;
    if (s == "weights")
        return HighApplies::weights;
    if (s == "both")
        return HighApplies::both;
    throw DataError("unknown high_applies_to value: '" + s + "'");
}

const char* to_string(TriggerBoundary b) {
    switch (b) {
        case TriggerBoundary::input: return "input";
        case TriggerBoundary::output: return "output";
        case TriggerBoundary::both: return "both";
        case TriggerBoundary::unspecified: return "unspecified";
    }
    return "?";
}

TriggerBoundary trigger_boundary_from_string(const std::string& s) {
    if (s == "input")
        return TriggerBoundary::input;
    if (s == "output")
        return TriggerBoundary::output;
    if (s == "both")
        return TriggerBoundary::both;
    if (s == "unspecified")
        return TriggerBoundary::unspecified;
    throw DataError("unknown boundary value: '" + s + "'");
}

std::vector<SiteKind> default_scope() {
    return {SiteKind::q, SiteKind::k, SiteKind::v, SiteKind::out,
            SiteKind::gate, SiteKind::up, SiteKind::down};
}

Treatment PrecisionPlan::treatment_for(int layer, SiteKind kind) const {
    if (!is_linear(kind))
        return Treatment::full();
    if (std::find(scope.begin(), scope.end(), kind) == scope.end())
        return Treatment::full();
    for (const PlanSite& s : sites)
        if (s.layer == layer && s.kind == kind)
            return s.treatment;
    return default_full ? Treatment::full() : Treatment::integer(default_bits);
}

PrecisionPlan uniform_plan(int bits) {
    if (bits < 2 || bits > 8)
        throw std::invalid_argument("uniform_plan: bits must be in [2, 8]");
    PrecisionPlan p;
    p.default_bits = bits;
    return p;
}

PrecisionPlan full_plan() {
    PrecisionPlan p;
    p.default_full = true;
    return p;
}

PrecisionPlan build_targeted_plan(const SpikeReport& report, double theta, Treatment high,
                                  int bits) {
    if (!high.is_high())
        throw std::invalid_argument("build_targeted_plan: '" + to_string(high) +
                                    "' is not a high-precision treatment");
    if (bits < 2 || bits > 8)
        throw std::invalid_argument("build_targeted_plan: bits must be in [2, 8]");
    if (!(theta > 0.0))
        throw std::invalid_argument("build_targeted_plan: theta must be positive");

    PrecisionPlan p;
    p.model_id = report.model_id;
    p.default_bits = bits;
    for (int layer = 1; layer <= report.n_layers; ++layer) {
        for (SiteKind kind : {SiteKind::down, SiteKind::out}) {
            const SiteStats* in = report.find(SiteId{layer, kind, Boundary::input});
            const SiteStats* out = report.find(SiteId{layer, kind, Boundary::output});
            const bool in_hot = in && in->max_abs > theta;
            const bool out_hot = out && out->max_abs > theta;
            if (!in_hot && !out_hot)
                continue;
            PlanSite site;
            site.layer = layer;
            site.kind = kind;
            site.boundary = in_hot && out_hot ? TriggerBoundary::both
                            : in_hot         ? TriggerBoundary::input
                                             : TriggerBoundary::output;
            site.treatment = high;
            p.sites.push_back(site);
        }
    }
    return p;
}

PrecisionPlan build_random_plan(const SpikeReport& report, const PrecisionPlan& reference,
                                std::uint64_t seed) {
    std::vector<const PlanSite*> high_sites;
    for (const PlanSite& s : reference.sites)
        if (s.treatment.is_high())
            high_sites.push_back(&s);

    // Candidates: every down/out site of the model except the reference picks.
    std::vector<QuantSite> candidates;
    for (int layer = 1; layer <= report.n_layers; ++layer) {
        for (SiteKind kind : {SiteKind::down, SiteKind::out}) {
            const bool taken = std::any_of(high_sites.begin(), high_sites.end(),
                                           [&](const PlanSite* s) {
                                               return s->layer == layer && s->kind == kind;
                                           });
            if (!taken)
                candidates.push_back(QuantSite{layer, kind});
        }
    }
    if (candidates.size() < high_sites.size())
        throw std::invalid_argument("build_random_plan: not enough sites to draw " +
                                    std::to_string(high_sites.size()) + " from " +
                                    std::to_string(candidates.size()) + " candidates");

    // Partial Fisher-Yates over the candidate list: draw k sites in order.
    Rng rng(seed);
    PrecisionPlan p;
    p.model_id = report.model_id;
    p.default_bits = reference.default_bits;
    p.default_full = reference.default_full;
    p.scope = reference.scope;
    p.high_applies = reference.high_applies;
    p.seed = seed;
    for (std::size_t i = 0; i < high_sites.size(); ++i) {
        const std::size_t j = i + rng.uniform_below(candidates.size() - i);
        std::swap(candidates[i], candidates[j]);
        PlanSite site;
        site.layer = candidates[i].layer;
        site.kind = candidates[i].kind;
        site.boundary = TriggerBoundary::unspecified;
        site.treatment = high_sites[i]->treatment;
        p.sites.push_back(site);
    }
    std::sort(p.sites.begin(), p.sites.end(),
              [](const PlanSite& a, const PlanSite& b) {
                  return std::tie(a.layer, a.kind) < std::tie(b.layer, b.kind);
              });
    return p;
}

std::string plan_to_json(const PrecisionPlan& plan) {
    ordered_json j;
    j["schema_version"] = 1;
    j["kind"] = "precision_plan";
    j["model_id"] = plan.model_id;
    j["default_treatment"] =
        plan.default_full ? "full" : to_string(Treatment::integer(plan.default_bits));
    j["default_bits"] = plan.default_bits;
    ordered_json scope = ordered_json::array();
    for (SiteKind k : plan.scope)
        scope.push_back(to_string(k));
    j["scope"] = std::move(scope);
    j["high_applies_to"] = to_string(plan.high_applies);
    ordered_json sites = ordered_json::array();
    for (const PlanSite& s : plan.sites) {
        sites.push_back(ordered_json{{"layer", s.layer},
                                     {"kind", to_string(s.kind)},
                                     {"boundary", to_string(s.boundary)},
                                     {"treatment", to_string(s.treatment)}});
    }
    j["sites"] = std::move(sites);
    if (plan.seed)
        j["seed"] = *plan.seed;
    return j.dump(2) + "\n";
}

PrecisionPlan plan_from_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("precision plan: invalid JSON: ") + e.what());
    }
    try {
        if (j.at("kind").get<std::string>() != "precision_plan")
            throw DataError("precision plan: wrong document kind");
        if (j.at("schema_version").get<int>() != 1)
            throw DataError("precision plan: unsupported schema_version");

        PrecisionPlan p;
        p.model_id = j.at("model_id").get<std::string>();
        p.default_bits = j.at("default_bits").get<int>();
        if (p.default_bits < 2 || p.default_bits > 8)
            throw DataError("precision plan: default_bits out of range");
        const Treatment dt = treatment_from_string(j.at("default_treatment").get<std::string>());
        if (dt.kind == TreatmentKind::full)
            p.default_full = true;
        else if (dt.kind != TreatmentKind::integer || dt.bits != p.default_bits)
            throw DataError("precision plan: default_treatment disagrees with default_bits");
        p.scope.clear();
        for (const auto& e : j.at("scope")) {
            const SiteKind k = site_kind_from_string(e.get<std::string>());
            if (!is_linear(k))
                throw DataError("precision plan: '" + std::string(to_string(k)) +
                                "' cannot be in scope");
            p.scope.push_back(k);
        }
        p.high_applies = high_applies_from_string(j.at("high_applies_to").get<std::string>());
        for (const auto& e : j.at("sites")) {
            PlanSite s;
            s.layer = e.at("layer").get<int>();
            s.kind = site_kind_from_string(e.at("kind").get<std::string>());
            if (!is_linear(s.kind))
                throw DataError("precision plan: site " + std::string(to_string(s.kind)) +
                                " is not quantizable");
            s.boundary = trigger_boundary_from_string(e.at("boundary").get<std::string>());
            s.treatment = treatment_from_string(e.at("treatment").get<std::string>());
            p.sites.push_back(s);
        }
        if (j.contains("seed"))
            p.seed = j.at("seed").get<std::uint64_t>();
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("precision plan: missing or mistyped field: ") + e.what());
    }
}

void save_plan(const PrecisionPlan& plan, const std::string& path) {
    io_detail::atomic_write(path, plan_to_json(plan));
}

PrecisionPlan load_plan(const std::string& path) {
    return plan_from_json(io_detail::read_file(path, "precision plan"));
}

}  // namespace saqt
