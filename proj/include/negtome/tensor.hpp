#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "negtome/error.hpp"

namespace negtome {

// Dense rank-2 or rank-3 float32 tensor, row-major. This is the minimal
// substrate the merge math needs: no broadcasting, no views, no autograd.
class Tensor {
public:
    Tensor() = default;

    // Zero-filled tensor of the given shape.
    explicit Tensor(std::vector<int64_t> shape);

    Tensor(std::vector<int64_t> shape, std::vector<float> data);

    const std::vector<int64_t>& shape() const { return shape_; }
    int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
    int64_t extent(int64_t axis) const { return shape_[static_cast<size_t>(axis)]; }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    // Number of length-`row_len()` rows when the tensor is viewed as a
    // flat list of rows over its last dimension.
    int64_t rows() const;
    int64_t row_len() const { return shape_.empty() ? 0 : shape_.back(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::span<const float> values() const { return data_; }

    float& operator()(int64_t i, int64_t j);
    float operator()(int64_t i, int64_t j) const;
    float& operator()(int64_t i, int64_t j, int64_t k);
    float operator()(int64_t i, int64_t j, int64_t k) const;

    std::span<const float> row(int64_t r) const;
    std::span<float> row(int64_t r);

    // Bitwise equality of shape and payload (NaN-safe, sign-of-zero exact).
    bool operator==(const Tensor& other) const;
    bool operator!=(const Tensor& other) const { return !(*this == other); }

private:
    std::vector<int64_t> shape_;
    std::vector<float> data_;
};

std::string shape_to_string(const std::vector<int64_t>& shape);

// Each length-D row divided by max(||row||_2, 1e-12); zero rows stay zero.
// Norms accumulate in f64, the stored result is f32.
Tensor l2_normalize_rows(const Tensor& t);

// out[i][j] = sum_d a[i][d] * b[j][d], accumulated in f64 and rounded to
// f32 once per entry, so results do not depend on evaluation order.
// a is M x D, b is K x D, out is M x K.
Tensor matmul_nt(const Tensor& a, const Tensor& b);

struct ArgmaxRows {
    std::vector<int64_t> indices; // smallest index attaining the row max
    std::vector<float> maxima;
};

ArgmaxRows argmax_rows(const Tensor& s);

// out[i] = ref[indices[i]], rows copied bit-exactly. ref is K x D.
Tensor gather_rows(const Tensor& ref, std::span<const int64_t> indices);

} // namespace negtome
