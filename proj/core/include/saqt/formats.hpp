// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "saqt/tensor.hpp"

namespace saqt {

enum class Fp8Kind : std::uint8_t { e5m2, e4m3 };

// Parameters of an 8-bit minifloat. e5m2 keeps the IEEE-style layout where
// the top exponent encodes Inf/NaN; e4m3 follows the ML convention with no
// infinities and a single NaN mantissa pattern, which frees codes up to 448.
struct Fp8Format {
    Fp8Kind kind;
    int exponent_bits;
    int mantissa_bits;
    int bias;
    float max_finite;

    static Fp8Format e5m2() { return {Fp8Kind::e5m2, 5, 2, 15, 57344.0f}; }
    static Fp8Format e4m3() { return {Fp8Kind::e4m3, 4, 3, 7, 448.0f}; }
};

// Nearest representable finite value, round half to even; |x| beyond
// max_finite saturates to the max code, so Inf/NaN codes are never produced.
// Signed zero is preserved. NaN input throws std::invalid_argument.
std::uint8_t fp8_encode(float x, const Fp8Format& fmt);

// Exact value of a code. e5m2 Inf/NaN codes decode to Inf/NaN; the e4m3
// NaN pattern decodes to NaN.
float fp8_decode(std::uint8_t code, const Fp8Format& fmt);

// True for codes that decode to a finite value.
bool fp8_is_finite_code(std::uint8_t code, const Fp8Format& fmt);

// decode(encode(x)) elementwise.
Tensor fp8_quantize_tensor(const Tensor& x, const Fp8Format& fmt);

// Round to the nearest binary16 value (round half to even). Values with
// |x| > 65504 do not fit and raise InvariantError: a spike that large is a
// signal the fallback precision cannot hold the tensor.
float fp16_round(float x);
Tensor fp16_round_tensor(const Tensor& x);

inline constexpr float kFp16Max = 65504.0f;

}  // namespace saqt
