// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <compare>
#include <cstdint>
#include <string>

namespace saqt {

// Observable sites inside one decoder layer. The linear kinds (q .. down)
// are the quantizable surface; the rmsnorm kinds exist for profiling only
// and never receive a treatment.
enum class SiteKind : std::uint8_t {
    q,
    k,
    v,
    out,
    gate,
    up,
    down,
    rmsnorm_in,
    rmsnorm_post,
};

inline constexpr SiteKind kAllSiteKinds[] = {
    SiteKind::q,    SiteKind::k,  SiteKind::v,    SiteKind::out,        SiteKind::gate,
    SiteKind::up,   SiteKind::down, SiteKind::rmsnorm_in, SiteKind::rmsnorm_post,
};

constexpr bool is_linear(SiteKind k) {
    return static_cast<std::uint8_t>(k) <= static_cast<std::uint8_t>(SiteKind::down);
}

enum class Boundary : std::uint8_t { input, output };

const char* to_string(SiteKind k);
const char* to_string(Boundary b);
SiteKind site_kind_from_string(const std::string& s);   // DataError on unknown
Boundary boundary_from_string(const std::string& s);    // DataError on unknown

// Layers are numbered 1-based in everything user visible: reports, plans,
// curve tables and error messages all use the same convention.
struct SiteId {
    int layer = 1;
    SiteKind kind = SiteKind::q;
    Boundary boundary = Boundary::input;
    auto operator<=>(const SiteId&) const = default;
};

// A (layer, projection) pair; treatments and calibrated scales attach here.
struct QuantSite {
    int layer = 1;
    SiteKind kind = SiteKind::q;
    auto operator<=>(const QuantSite&) const = default;
};

std::string to_string(const SiteId& s);     // "L2.down.output"
std::string to_string(const QuantSite& s);  // "L2.down"

}  // namespace saqt
