// SPDX-License-Identifier: Apache-2.0
#include "saqt/quant.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "saqt/errors.hpp"
#include "saqt/model.hpp"
#include "saqt/plan.hpp"

namespace saqt {

const char* to_string(Granularity g) {
    return g == Granularity::per_tensor ? "per_tensor" : "per_token";
}

Granularity granularity_from_string(const std::string& s) {
    if (s == "per_tensor")
        return Granularity::per_tensor;
    if (s == "per_token")
        return Granularity::per_token;
    throw DataError("unknown granularity: '" + s + "'");
}

void validate(const QuantSpec& spec) {
    if (spec.bits < 2 || spec.bits > 8)
        throw std::invalid_argument("QuantSpec: bits must be in [2, 8], got " +
                                    std::to_string(spec.bits));
    if (spec.static_scale && !(*spec.static_scale > 0.0 && std::isfinite(*spec.static_scale)))
        throw std::invalid_argument("QuantSpec: static scale must be finite and positive");
}

int quant_max_level(int bits) {
    if (bits < 2 || bits > 8)
        throw std::invalid_argument("quant_max_level: bits must be in [2, 8]");
    return (1 << (bits - 1)) - 1;
}

namespace {

double row_scale(const float* v, std::size_t n, int maxlev) {
    float m = 0.0f;
    for (std::size_t i = 0; i < n; ++i) {
        const float a = std::fabs(v[i]);
        if (a > m)
            m = a;
    }
    if (m == 0.0f)
        return 1.0;
    return static_cast<double>(m) / maxlev;
}

// Nearest grid level of x under step `delta`, ties to even, clamped to
// +-maxlev. The initial division-based round is checked against both
// neighbouring levels so the returned level is the true distance argmin even
// when x/delta itself rounds at a half-way boundary.
float snap(float x, double delta, int maxlev) {
    const double xd = x;
    double q = xd / delta;
    double k = std::floor(q);
    const double frac = q - k;
    if (frac > 0.5 || (frac == 0.5 && std::fmod(k, 2.0) != 0.0))
        k += 1.0;
    if (k > maxlev)
        k = maxlev;
    if (k < -maxlev)
        k = -maxlev;
    double best = std::fabs(xd - k * delta);
    for (const double kk : {k - 1.0, k + 1.0}) {
        if (kk > maxlev || kk < -maxlev)
            continue;
        const double d = std::fabs(xd - kk * delta);
        if (d < best || (d == best && std::fmod(kk, 2.0) == 0.0 && std::fmod(k, 2.0) != 0.0)) {
            k = kk;
            best = d;
        }
    }
    return static_cast<float>(k * delta);
}

void snap_row(const float* in, float* out, std::size_t n, double delta, int maxlev) {
    for (std::size_t i = 0; i < n; ++i)
        out[i] = snap(in[i], delta, maxlev);
}

}  // namespace

double compute_scale(const Tensor& x, int bits) {
    const int maxlev = quant_max_level(bits);
    require_finite(x, "compute_scale input");
    const double m = max_abs(x);
    if (m == 0.0)
        return 1.0;
    return m / maxlev;
}

Tensor fake_quantize(const Tensor& x, const QuantSpec& spec) {
    validate(spec);
    require_finite(x, "fake_quantize input");
    const int maxlev = quant_max_level(spec.bits);
    const std::size_t rows = x.rows(), width = x.row_width();
    Tensor out(x.shape());

    if (spec.granularity == Granularity::per_tensor || spec.static_scale) {
        // A static delta is a single per-site scalar, so per_token static
        // degenerates to the same delta on every row.
        const double delta = spec.static_scale ? *spec.static_scale : compute_scale(x, spec.bits);
        snap_row(x.data(), out.data(), x.size(), delta, maxlev);
    } else {
        for (std::size_t r = 0; r < rows; ++r) {
            const float* in = x.data() + r * width;
            snap_row(in, out.data() + r * width, width, row_scale(in, width, maxlev), maxlev);
        }
    }
    require_finite(out, "fake_quantize result");
    return out;
}

Tensor fake_quantize_excluding_token(const Tensor& x, const QuantSpec& spec, std::size_t token) {
    validate(spec);
    if (x.rank() < 2)
        throw std::invalid_argument("fake_quantize_excluding_token: tensor must have token rows");
    require_finite(x, "fake_quantize_excluding_token input");
    const std::size_t rows = x.rows(), width = x.row_width();
    if (token >= rows)
        throw std::invalid_argument("fake_quantize_excluding_token: token " +
                                    std::to_string(token) + " out of range (rows=" +
                                    std::to_string(rows) + ")");
    const int maxlev = quant_max_level(spec.bits);
    Tensor out(x.shape());
    const float* excluded = x.data() + token * width;
    std::copy(excluded, excluded + width, out.data() + token * width);

    if (spec.granularity == Granularity::per_tensor || spec.static_scale) {
        double delta;
        if (spec.static_scale) {
            delta = *spec.static_scale;
        } else {
            // scale over the remaining rows only
            float m = 0.0f;
            for (std::size_t r = 0; r < rows; ++r) {
                if (r == token)
                    continue;
                const float* v = x.data() + r * width;
                for (std::size_t i = 0; i < width; ++i) {
                    const float a = std::fabs(v[i]);
                    if (a > m)
                        m = a;
                }
            }
            delta = m == 0.0f ? 1.0 : static_cast<double>(m) / maxlev;
        }
        for (std::size_t r = 0; r < rows; ++r) {
            if (r == token)
                continue;
            snap_row(x.data() + r * width, out.data() + r * width, width, delta, maxlev);
        }
    } else {
        for (std::size_t r = 0; r < rows; ++r) {
            if (r == token)
                continue;
            const float* in = x.data() + r * width;
            snap_row(in, out.data() + r * width, width, row_scale(in, width, maxlev), maxlev);
        }
    }
    require_finite(out, "fake_quantize_excluding_token result");
    return out;
}

Tensor quantize_weights(const Tensor& w, int bits) {
    QuantSpec spec;
    spec.bits = bits;
    spec.granularity = Granularity::per_tensor;
    return fake_quantize(w, spec);
}

std::map<QuantSite, double> calibrate_static_scales(const ModelBundle& model,
                                                    const std::vector<int>& tokens,
                                                    const std::vector<QuantSite>& sites,
                                                    int bits) {
    if (tokens.empty())
        throw std::invalid_argument("calibrate_static_scales: empty token stream");
    const int maxlev = quant_max_level(bits);
    std::map<QuantSite, float> maxima;
    for (const QuantSite& s : sites) {
        if (!is_linear(s.kind))
            throw std::invalid_argument("calibrate_static_scales: " + to_string(s) +
                                        " is not a quantizable site");
        if (s.layer < 1 || s.layer > model.config.n_layers)
            throw std::invalid_argument("calibrate_static_scales: layer out of range for " +
                                        to_string(s));
        maxima[s] = 0.0f;
    }

    const PrecisionPlan plan = uniform_plan(bits);
    EvalOptions opts;  // per-tensor dynamic, the pipeline the scales will replay
    forward(model, tokens, &plan, opts, [&](const SiteId& id, const Tensor& t) {
        if (id.boundary != Boundary::input)
            return;
        auto it = maxima.find(QuantSite{id.layer, id.kind});
        if (it == maxima.end())
            return;
        const float m = max_abs(t);
        if (m > it->second)
            it->second = m;
    });

    std::map<QuantSite, double> scales;
    for (const auto& [site, m] : maxima)
        scales[site] = m == 0.0f ? 1.0 : static_cast<double>(m) / maxlev;
    return scales;
}

}  // namespace saqt
