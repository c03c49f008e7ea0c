#pragma once

#include <string>
#include <utility>

#include "flattenet/tensor.hpp"

namespace flattenet {

// Learnable tensor with an accumulated-gradient slot. Backward passes add
// into grad; it stays additive until zero_grad().
template <typename T>
struct Param {
    Tensor<T> value;
    Tensor<T> grad;
    std::string name;

    Param() = default;
    Param(std::string n, Tensor<T> v)
        : value(std::move(v)), grad(Tensor<T>::zeros(value.dims())), name(std::move(n)) {}

    void zero_grad() { std::fill(grad.values().begin(), grad.values().end(), T(0)); }
};

} // namespace flattenet
