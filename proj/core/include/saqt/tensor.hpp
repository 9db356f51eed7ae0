// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

namespace saqt {

// Dense row-major float32 tensor. Public operations reject non-finite inputs
// and refuse to produce non-finite outputs; reductions run in a fixed
// left-to-right order so repeated runs agree bit for bit.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);  // zero filled
    Tensor(std::vector<std::size_t> shape, std::vector<float> data);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t i) const { return shape_[i]; }

    // The flattened (rows x width) view: width is the last axis, rows is
    // everything in front of it. Token-granular code indexes these rows.
    std::size_t row_width() const { return shape_.empty() ? 0 : shape_.back(); }
    std::size_t rows() const { return row_width() == 0 ? 0 : size() / row_width(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::vector<float>& values() { return data_; }
    const std::vector<float>& values() const { return data_; }

    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    float& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    float operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    float& operator()(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    float operator()(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

private:
    std::vector<std::size_t> shape_;
    std::vector<float> data_;
};

// Shape plus bit-for-bit payload equality.
bool bit_equal(const Tensor& a, const Tensor& b);

float max_abs(const Tensor& t);

// Throws InvariantError naming `what` if any element is NaN or infinite.
void require_finite(const Tensor& t, const char* what);

// c[i][j] = sum_k a[i][k] * b[k][j], accumulated in k order. Matches a naive
// triple loop bit for bit.
Tensor matmul(const Tensor& a, const Tensor& b);

// out[r][i] = x[r][i] / sqrt(mean(x[r]^2) + eps) * gamma[i], rows normalized
// independently. gamma length must equal the last axis of x.
Tensor rms_norm(const Tensor& x, const Tensor& gamma, float eps = 1e-5f);

// Stable softmax along the last axis (max subtraction); rows sum to 1.
Tensor softmax_rows(const Tensor& x);

// x * sigmoid(x), elementwise, computed in a form that never overflows.
Tensor silu(const Tensor& x);

// Rotary position embedding over a [seq, n_heads, head_dim] tensor: adjacent
// pairs (x[2i], x[2i+1]) are rotated by pos * base^(-2i/head_dim). Position 0
// is returned bit-identical.
Tensor rope_rotate(const Tensor& x, float base = 10000.0f);

}  // namespace saqt
