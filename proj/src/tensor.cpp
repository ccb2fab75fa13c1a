#include "negtome/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "negtome/parallel.hpp"

namespace negtome {

namespace {

int64_t checked_product(const std::vector<int64_t>& shape) {
    if (shape.size() != 2 && shape.size() != 3) {
        throw DimensionError("tensor rank must be 2 or 3, got shape " + shape_to_string(shape));
    }
    int64_t n = 1;
    for (int64_t e : shape) {
        if (e < 1) {
            throw DimensionError("tensor extents must be >= 1, got shape " + shape_to_string(shape));
        }
        n *= e;
    }
    return n;
}

} // namespace

Tensor::Tensor(std::vector<int64_t> shape)
    : shape_(std::move(shape)), data_(static_cast<size_t>(checked_product(shape_)), 0.0f) {}

Tensor::Tensor(std::vector<int64_t> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    const int64_t n = checked_product(shape_);
    if (n != static_cast<int64_t>(data_.size())) {
        std::ostringstream os;
        os << "data length " << data_.size() << " does not match shape "
           << shape_to_string(shape_) << " (" << n << " elements)";
        throw DimensionError(os.str());
    }
}

int64_t Tensor::rows() const {
    if (shape_.empty()) return 0;
    int64_t r = 1;
    for (size_t i = 0; i + 1 < shape_.size(); ++i) r *= shape_[i];
    return r;
}

float& Tensor::operator()(int64_t i, int64_t j) {
    return data_[static_cast<size_t>(i * shape_[1] + j)];
}

float Tensor::operator()(int64_t i, int64_t j) const {
    return data_[static_cast<size_t>(i * shape_[1] + j)];
}

float& Tensor::operator()(int64_t i, int64_t j, int64_t k) {
    return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
}

float Tensor::operator()(int64_t i, int64_t j, int64_t k) const {
    return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
}

std::span<const float> Tensor::row(int64_t r) const {
    const int64_t d = row_len();
    return {data_.data() + r * d, static_cast<size_t>(d)};
}

std::span<float> Tensor::row(int64_t r) {
    const int64_t d = row_len();
    return {data_.data() + r * d, static_cast<size_t>(d)};
}

bool Tensor::operator==(const Tensor& other) const {
    if (shape_ != other.shape_) return false;
    if (data_.empty()) return other.data_.empty();
    return std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0;
}

std::string shape_to_string(const std::vector<int64_t>& shape) {
    std::ostringstream os;
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    return os.str();
}

Tensor l2_normalize_rows(const Tensor& t) {
    if (t.row_len() < 1) {
        throw DimensionError("l2_normalize_rows: empty last dimension, shape " +
                             shape_to_string(t.shape()));
    }
    Tensor out(t.shape());
    const int64_t rows = t.rows();
    const int64_t d = t.row_len();
    const float* src = t.data();
    float* dst = out.data();
    parallel_for(rows, [&](int64_t begin, int64_t end) {
        for (int64_t r = begin; r < end; ++r) {
            const float* x = src + r * d;
            double sq = 0.0;
            for (int64_t k = 0; k < d; ++k) sq += static_cast<double>(x[k]) * x[k];
            const double inv = 1.0 / std::max(std::sqrt(sq), 1e-12);
            float* y = dst + r * d;
            for (int64_t k = 0; k < d; ++k) y[k] = static_cast<float>(x[k] * inv);
        }
    });
    return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw DimensionError("matmul_nt expects rank-2 operands, got " +
                             shape_to_string(a.shape()) + " and " + shape_to_string(b.shape()));
    }
    if (a.extent(1) != b.extent(1)) {
        throw DimensionError("matmul_nt: inner dimensions differ, a is " +
                             shape_to_string(a.shape()) + ", b is " + shape_to_string(b.shape()));
    }
    const int64_t m = a.extent(0);
    const int64_t k = b.extent(0);
    const int64_t d = a.extent(1);
    Tensor out({m, k});
    const float* pa = a.data();
    const float* pb = b.data();
    float* po = out.data();
    parallel_for(m, [&](int64_t begin, int64_t end) {
        for (int64_t i = begin; i < end; ++i) {
            const float* ra = pa + i * d;
            for (int64_t j = 0; j < k; ++j) {
                const float* rb = pb + j * d;
                double acc = 0.0;
                for (int64_t t = 0; t < d; ++t) {
                    acc += static_cast<double>(ra[t]) * static_cast<double>(rb[t]);
                }
                po[i * k + j] = static_cast<float>(acc);
            }
        }
    });
    return out;
}

ArgmaxRows argmax_rows(const Tensor& s) {
    if (s.rank() != 2) {
        throw DimensionError("argmax_rows expects a rank-2 tensor, got " +
                             shape_to_string(s.shape()));
    }
    const int64_t m = s.extent(0);
    const int64_t k = s.extent(1);
    ArgmaxRows r;
    r.indices.resize(static_cast<size_t>(m));
    r.maxima.resize(static_cast<size_t>(m));
    const float* p = s.data();
    for (int64_t i = 0; i < m; ++i) {
        const float* row = p + i * k;
        int64_t best = 0;
        float best_val = row[0];
        for (int64_t j = 1; j < k; ++j) {
            if (row[j] > best_val) { // ties keep the lowest index
                best_val = row[j];
                best = j;
            }
        }
        r.indices[static_cast<size_t>(i)] = best;
        r.maxima[static_cast<size_t>(i)] = best_val;
    }
    return r;
}

Tensor gather_rows(const Tensor& ref, std::span<const int64_t> indices) {
    if (ref.rank() != 2) {
        throw DimensionError("gather_rows expects a rank-2 source, got " +
                             shape_to_string(ref.shape()));
    }
    const int64_t k = ref.extent(0);
    const int64_t d = ref.extent(1);
    Tensor out({static_cast<int64_t>(indices.size()), d});
    float* dst = out.data();
    for (size_t i = 0; i < indices.size(); ++i) {
        const int64_t idx = indices[i];
        if (idx < 0 || idx >= k) {
            std::ostringstream os;
            os << "gather_rows: index " << idx << " out of range [0, " << k << ")";
            throw IndexError(os.str());
        }
        std::memcpy(dst + static_cast<int64_t>(i) * d, ref.data() + idx * d,
                    static_cast<size_t>(d) * sizeof(float));
    }
    return out;
}

} // namespace negtome
