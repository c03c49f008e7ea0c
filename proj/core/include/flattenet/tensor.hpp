#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "flattenet/rng.hpp"

namespace flattenet {

struct Dims {
    std::int64_t n = 0;
    std::int64_t c = 0;
    std::int64_t h = 0;
    std::int64_t w = 0;

    std::int64_t numel() const { return n * c * h * w; }
    bool operator==(const Dims&) const = default;

    std::string str() const {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
               std::to_string(h) + "," + std::to_string(w) + ")";
    }
};

// Dense rank-4 array, NCHW row-major (n-major, then c, h, w).
template <typename T>
class Tensor {
    static_assert(std::is_arithmetic_v<T>);

public:
    Tensor() = default;

    explicit Tensor(Dims d) : dims_(check(d)), data_(static_cast<std::size_t>(d.numel()), T(0)) {}

    Tensor(Dims d, std::vector<T> values) : dims_(check(d)), data_(std::move(values)) {
        if (static_cast<std::int64_t>(data_.size()) != dims_.numel())
            throw std::invalid_argument("tensor: value count " + std::to_string(data_.size()) +
                                        " does not match dims " + dims_.str());
    }

    static Tensor zeros(Dims d) { return Tensor(d); }

    static Tensor full(Dims d, T v) {
        Tensor t(d);
        std::fill(t.data_.begin(), t.data_.end(), v);
        return t;
    }

    static Tensor ones(Dims d) { return full(d, T(1)); }

    // seeded uniform in [-a, a]
    static Tensor uniform(Dims d, T a, Rng& rng) {
        Tensor t(d);
        for (auto& v : t.data_) v = static_cast<T>(rng.uniform(-double(a), double(a)));
        return t;
    }

    const Dims& dims() const { return dims_; }
    std::int64_t numel() const { return dims_.numel(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& values() { return data_; }
    const std::vector<T>& values() const { return data_; }

    std::int64_t offset(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
        return ((n * dims_.c + c) * dims_.h + h) * dims_.w + w;
    }

    T& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
        return data_[static_cast<std::size_t>(offset(n, c, h, w))];
    }
    const T& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
        return data_[static_cast<std::size_t>(offset(n, c, h, w))];
    }

    T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    bool same_bytes(const Tensor& o) const { return dims_ == o.dims_ && data_ == o.data_; }

    // NaN/Inf anywhere is a contract violation
    void assert_finite(const char* where) const {
        if constexpr (std::is_floating_point_v<T>) {
            for (const T& v : data_)
                if (!std::isfinite(v))
                    throw std::runtime_error(std::string("non-finite value in ") + where);
        }
    }

private:
    static Dims check(Dims d) {
        if (d.n < 0 || d.c < 0 || d.h < 0 || d.w < 0)
            throw std::invalid_argument("tensor: negative dimension " + d.str());
        return d;
    }

    Dims dims_;
    std::vector<T> data_;
};

using Tensor32 = Tensor<float>;
using Tensor64 = Tensor<double>;
// integer label maps share the layout; value range is validated by consumers
using LabelTensor = Tensor<std::int32_t>;

} // namespace flattenet
