// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "saqt/sites.hpp"
#include "saqt/tensor.hpp"

namespace saqt {

struct ModelBundle;  // model.hpp

enum class Granularity : std::uint8_t { per_tensor, per_token };

const char* to_string(Granularity g);
Granularity granularity_from_string(const std::string& s);  // DataError on unknown

// Symmetric uniform fake quantization: x_hat = round_half_even(x / delta) * delta,
// with the integer clamped to +-(2^(b-1) - 1).
//
// * bits must lie in [2, 8].
// * per_token treats the flattened (rows x width) view of the tensor and
//   gives every row its own scale; per_tensor shares one scale.
// * When static_scale is set it is used as delta (all rows share it under
//   per_token); otherwise delta is computed from the data being quantized.
struct QuantSpec {
    int bits = 8;
    Granularity granularity = Granularity::per_tensor;
    std::optional<double> static_scale;  // set -> static mode with this delta
};

void validate(const QuantSpec& spec);  // std::invalid_argument on bad fields

// 2^(b-1) - 1, the largest integer level of a b-bit symmetric grid.
int quant_max_level(int bits);

// delta = max|x| / (2^(b-1) - 1); an all-zero tensor gets delta = 1 so the
// grid stays well defined. Computed in double so the extreme element
// round-trips exactly and re-quantization is a fixed point.
double compute_scale(const Tensor& x, int bits);

Tensor fake_quantize(const Tensor& x, const QuantSpec& spec);

// Same as fake_quantize but row `token` of the flattened (rows x width) view
// passes through untouched, and dynamic scales are computed over the
// remaining rows only. Requires rank >= 2.
Tensor fake_quantize_excluding_token(const Tensor& x, const QuantSpec& spec, std::size_t token);

// Per-tensor b-bit fake quantization, the treatment weights receive.
Tensor quantize_weights(const Tensor& w, int bits);

// Runs the uniform b-bit per-tensor pipeline over the token stream and
// records max|input| at each requested site as seen by that running
// pipeline, so a static replay of the calibration stream reproduces the
// dynamic run exactly. Returns delta per site (all-zero input -> 1).
std::map<QuantSite, double> calibrate_static_scales(const ModelBundle& model,
                                                    const std::vector<int>& tokens,
                                                    const std::vector<QuantSite>& sites,
                                                    int bits);

}  // namespace saqt
