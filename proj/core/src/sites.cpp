// SPDX-License-Identifier: Apache-2.0
#include "saqt/sites.hpp"

#include "saqt/errors.hpp"

namespace saqt {

const char* to_string(SiteKind k) {
    switch (k) {
        case SiteKind::q: return "q";
        case SiteKind::k: return "k";
        case SiteKind::v: return "v";
        case SiteKind::out: return "out";
        case SiteKind::gate: return "gate";
        case SiteKind::up: return "up";
        case SiteKind::down: return "down";
        case SiteKind::rmsnorm_in: return "rmsnorm_in";
        case SiteKind::rmsnorm_post: return "rmsnorm_post";
    }
    return "?";
}

const char* to_string(Boundary b) {
    return b == Boundary::input ? "input" : "output";
}

SiteKind site_kind_from_string(const std::string& s) {
    for (SiteKind k : kAllSiteKinds)
        if (s == to_string(k))
            return k;
    throw DataError("unknown site kind: '" + s + "'");
}

Boundary boundary_from_string(const std::string& s) {
    if (s == "input")
        return Boundary::input;
    if (s == "output")
        return Boundary::output;
    throw DataError("unknown boundary: '" + s + "'");
}

std::string to_string(const SiteId& s) {
    return "L" + std::to_string(s.layer) + "." + to_string(s.kind) + "." + to_string(s.boundary);
}

std::string to_string(const QuantSite& s) {
    return "L" + std::to_string(s.layer) + "." + to_string(s.kind);
}

}  // namespace saqt
