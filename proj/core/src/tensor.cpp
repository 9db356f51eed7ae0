// SPDX-License-Identifier: Apache-2.0
#include "saqt/tensor.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

#include "saqt/errors.hpp"

namespace saqt {

namespace {

std::size_t checked_volume(const std::vector<std::size_t>& shape) {
    if (shape.empty())
        throw std::invalid_argument("Tensor: shape must have at least one axis");
    std::size_t n = 1;
    for (std::size_t d : shape) {
        if (d == 0)
            throw std::invalid_argument("Tensor: shape axes must be positive");
        if (d > SIZE_MAX / n)
            throw std::invalid_argument("Tensor: shape volume overflows");
        n *= d;
    }
    return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(checked_volume(shape_), 0.0f) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_volume(shape_) != data_.size())
        throw std::invalid_argument("Tensor: data length " + std::to_string(data_.size()) +
                                    " does not match shape volume");
}

bool bit_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        return false;
    return std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

float max_abs(const Tensor& t) {
    float m = 0.0f;
    for (float v : t.values()) {
        const float a = std::fabs(v);
        if (a > m)
            m = a;
    }
    return m;
}

void require_finite(const Tensor& t, const char* what) {
    for (float v : t.values())
        if (!std::isfinite(v))
            throw InvariantError(std::string(what) + ": non-finite value encountered");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw std::invalid_argument("matmul: both operands must be rank 2");
    if (a.dim(1) != b.dim(0))
        throw std::invalid_argument("matmul: inner dimensions differ (" +
                                    std::to_string(a.dim(1)) + " vs " + std::to_string(b.dim(0)) + ")");
    require_finite(a, "matmul lhs");
    require_finite(b, "matmul rhs");

    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor c({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const float* arow = a.data() + i * k;
        float* crow = c.data() + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const float aik = arow[kk];
            const float* brow = b.data() + kk * n;
            for (std::size_t j = 0; j < n; ++j)
                crow[j] += aik * brow[j];
        }
    }
    require_finite(c, "matmul result");
    return c;
}

Tensor rms_norm(const Tensor& x, const Tensor& gamma, float eps) {
    if (gamma.rank() != 1 || gamma.dim(0) != x.row_width())
        throw std::invalid_argument("rms_norm: gamma length must match the last axis of x");
    if (!(eps >= 0.0f) || !std::isfinite(eps))
        throw std::invalid_argument("rms_norm: eps must be finite and non-negative");
    require_finite(x, "rms_norm input");
    require_finite(gamma, "rms_norm gamma");

    const std::size_t rows = x.rows(), d = x.row_width();
    Tensor out(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const float* v = x.data() + r * d;
        float* o = out.data() + r * d;
        double ss = 0.0;
        for (std::size_t i = 0; i < d; ++i)
            ss += static_cast<double>(v[i]) * v[i];
        const double inv = 1.0 / std::sqrt(ss / static_cast<double>(d) + eps);
        if (!std::isfinite(inv))
            throw InvariantError("rms_norm: normalizer is non-finite (eps too small for input)");
        for (std::size_t i = 0; i < d; ++i)
            o[i] = static_cast<float>(static_cast<double>(v[i]) * inv * gamma[i]);
    }
    require_finite(out, "rms_norm result");
    return out;
}

Tensor softmax_rows(const Tensor& x) {
    require_finite(x, "softmax_rows input");
    const std::size_t rows = x.rows(), d = x.row_width();
    Tensor out(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const float* v = x.data() + r * d;
        float* o = out.data() + r * d;
        float m = v[0];
        for (std::size_t i = 1; i < d; ++i)
            if (v[i] > m)
                m = v[i];
        double denom = 0.0;
        for (std::size_t i = 0; i < d; ++i)
            denom += std::exp(static_cast<double>(v[i]) - m);
        for (std::size_t i = 0; i < d; ++i)
            o[i] = static_cast<float>(std::exp(static_cast<double>(v[i]) - m) / denom);
    }
    require_finite(out, "softmax_rows result");
    return out;
}

Tensor silu(const Tensor& x) {
    require_finite(x, "silu input");
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = x[i];
        // sigmoid written branch-wise so exp never overflows
        const double s = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                                  : std::exp(v) / (1.0 + std::exp(v));
        out[i] = static_cast<float>(v * s);
    }
    require_finite(out, "silu result");
    return out;
}

Tensor rope_rotate(const Tensor& x, float base) {
    if (x.rank() != 3)
        throw std::invalid_argument("rope_rotate: expected [seq, n_heads, head_dim]");
    const std::size_t seq = x.dim(0), heads = x.dim(1), hd = x.dim(2);
    if (hd % 2 != 0)
        throw std::invalid_argument("rope_rotate: head_dim must be even");
    if (!(base > 0.0f) || !std::isfinite(base))
        throw std::invalid_argument("rope_rotate: base must be finite and positive");
    require_finite(x, "rope_rotate input");

    std::vector<double> inv_freq(hd / 2);
    for (std::size_t i = 0; i < hd / 2; ++i)
        inv_freq[i] = std::pow(static_cast<double>(base),
                               -2.0 * static_cast<double>(i) / static_cast<double>(hd));

    Tensor out(x.shape());
    for (std::size_t p = 0; p < seq; ++p) {
        for (std::size_t h = 0; h < heads; ++h) {
            for (std::size_t i = 0; i < hd / 2; ++i) {
                const double theta = static_cast<double>(p) * inv_freq[i];
                const double c = std::cos(theta), s = std::sin(theta);
                const double a = x(p, h, 2 * i);
                const double b = x(p, h, 2 * i + 1);
                out(p, h, 2 * i) = static_cast<float>(a * c - b * s);
                out(p, h, 2 * i + 1) = static_cast<float>(a * s + b * c);
            }
        }
    }
    require_finite(out, "rope_rotate result");
    return out;
}

}  // namespace saqt
