// SPDX-License-Identifier: Apache-2.0
#include "saqt/formats.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "saqt/errors.hpp"

namespace saqt {

namespace {

// Round |a| onto the grid of a binary minifloat with `mbits` mantissa bits
// and minimum normal exponent `emin`, ties to even. Inputs below the normal
// range share the fixed subnormal step 2^(emin - mbits). Every intermediate
// is exact in double: divisions and multiplications only shift the exponent,
// and the rounded integer stays far below 2^53.
double round_to_grid(double a, int mbits, int emin) {
    if (a == 0.0)
        return 0.0;
    int e = std::ilogb(a);
    if (e < emin)
        e = emin;
    const double step = std::ldexp(1.0, e - mbits);
    const double q = a / step;
    double r = std::floor(q);
    const double frac = q - r;
    if (frac > 0.5 || (frac == 0.5 && std::fmod(r, 2.0) != 0.0))
        r += 1.0;
    return r * step;
}

}  // namespace

std::uint8_t fp8_encode(float x, const Fp8Format& fmt) {
    if (std::isnan(x))
        throw std::invalid_argument("fp8_encode: NaN input");
    const std::uint8_t sign = std::signbit(x) ? 0x80 : 0x00;
    const int mbits = fmt.mantissa_bits;
    const int emin = 1 - fmt.bias;

    double a = std::fabs(static_cast<double>(x));
    if (a > fmt.max_finite) {
        a = fmt.max_finite;  // saturate instead of overflowing to Inf/NaN codes
    } else {
        a = round_to_grid(a, mbits, emin);
        if (a > fmt.max_finite)
            a = fmt.max_finite;
    }
    if (a == 0.0)
        return sign;

    const int e = std::ilogb(a);
    if (e < emin) {
        // subnormal: value = m * 2^(emin - mbits)
        const int m = static_cast<int>(std::ldexp(a, mbits - emin));
        return sign | static_cast<std::uint8_t>(m);
    }
    const int biased = e + fmt.bias;
    const int m = static_cast<int>(std::ldexp(a, mbits - e)) - (1 << mbits);
    return sign | static_cast<std::uint8_t>((biased << mbits) | m);
}

float fp8_decode(std::uint8_t code, const Fp8Format& fmt) {
    const int mbits = fmt.mantissa_bits;
    const int efield = (code >> mbits) & ((1 << fmt.exponent_bits) - 1);
    const int m = code & ((1 << mbits) - 1);
    const float sign = (code & 0x80) ? -1.0f : 1.0f;

    if (fmt.kind == Fp8Kind::e5m2 && efield == (1 << fmt.exponent_bits) - 1) {
        if (m == 0)
            return sign * std::numeric_limits<float>::infinity();
        return std::numeric_limits<float>::quiet_NaN();
    }
    if (fmt.kind == Fp8Kind::e4m3 && efield == (1 << fmt.exponent_bits) - 1 &&
        m == (1 << mbits) - 1)
        return std::numeric_limits<float>::quiet_NaN();

    double v;
    if (efield == 0)
        v = std::ldexp(static_cast<double>(m), 1 - fmt.bias - mbits);
    else
        v = std::ldexp(static_cast<double>((1 << mbits) + m), efield - fmt.bias - mbits);
    return sign * static_cast<float>(v);
}

bool fp8_is_finite_code(std::uint8_t code, const Fp8Format& fmt) {
    return std::isfinite(fp8_decode(code, fmt));
}

Tensor fp8_quantize_tensor(const Tensor& x, const Fp8Format& fmt) {
    require_finite(x, "fp8_quantize_tensor input");
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i)
        out[i] = fp8_decode(fp8_encode(x[i], fmt), fmt);
    return out;
}

float fp16_round(float x) {
    if (std::isnan(x))
        throw std::invalid_argument("fp16_round: NaN input");
    const double a = std::fabs(static_cast<double>(x));
    if (a > kFp16Max)
        throw InvariantError("fp16_round: |" + std::to_string(x) + "| exceeds the binary16 range");
    const double r = round_to_grid(a, 10, -14);
    return std::signbit(x) ? -static_cast<float>(r) : static_cast<float>(r);
}

Tensor fp16_round_tensor(const Tensor& x) {
    require_finite(x, "fp16_round_tensor input");
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i)
        out[i] = fp16_round(x[i]);
    return out;
}

}  // namespace saqt
