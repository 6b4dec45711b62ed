#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "supercl/errors.hpp"

namespace supercl {

// Dense row-major n-d array of doubles. The carrier for images, feature
// maps, projections and gradients. Values are expected to stay finite;
// file I/O widens single precision to double on load.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(count(shape_), 0.0) {}

    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (count(shape_) != data_.size())
            throw ShapeError("tensor data length does not match shape");
    }

    static std::size_t count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return n;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t numel() const { return data_.size(); }

    double* ptr() { return data_.data(); }
    const double* ptr() const { return data_.data(); }
    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    template <typename... Ix>
    double& at(Ix... ix) { return data_[flat(ix...)]; }
    template <typename... Ix>
    double at(Ix... ix) const { return data_[flat(ix...)]; }

    template <typename... Ix>
    std::size_t flat(Ix... ix) const {
        const std::size_t idx[] = {static_cast<std::size_t>(ix)...};
        std::size_t off = 0;
        for (std::size_t d = 0; d < sizeof...(Ix); ++d)
            off = off * shape_[d] + idx[d];
        return off;
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    Tensor& operator+=(const Tensor& o) {
        if (!same_shape(o)) throw ShapeError("tensor shape mismatch in +=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }

    Tensor& operator*=(double c) {
        for (double& v : data_) v *= c;
        return *this;
    }

    // y += c * x, used for gradient accumulation
    void axpy(double c, const Tensor& x) {
        if (!same_shape(x)) throw ShapeError("tensor shape mismatch in axpy");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += c * x[i];
    }

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> a) {
    return std::sqrt(dot(a, a));
}

// Cosine similarity, clamped to [-1, 1] against rounding. A zero vector on
// either side signals a degenerate projection and is an error; callers must
// not substitute 0 silently.
inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw LengthMismatch("cosine_similarity: vectors of different length");
    const double na = norm2(a);
    const double nb = norm2(b);
    if (na == 0.0 || nb == 0.0)
        throw ZeroVector("cosine_similarity: zero-norm vector");
    const double c = dot(a, b) / (na * nb);
    return std::clamp(c, -1.0, 1.0);
}

inline double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    return cosine_similarity(std::span<const double>(a), std::span<const double>(b));
}

} // namespace supercl
