#pragma once

#include <stdexcept>

#include "flattenet/tensor.hpp"

namespace flattenet {

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
    Tensor<T> y(x.dims());
    for (std::int64_t i = 0; i < x.numel(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
    return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
    Tensor<T> dx(x.dims());
    for (std::int64_t i = 0; i < x.numel(); ++i) dx[i] = x[i] > T(0) ? dy[i] : T(0);
    return dx;
}

// channel-wise PReLU: y = x for x > 0, a_c * x otherwise
template <typename T>
Tensor<T> prelu_forward(const Tensor<T>& x, const Tensor<T>& slope) {
    const Dims& d = x.dims();
    if (slope.numel() != d.c)
        throw std::invalid_argument("prelu: slope count " + std::to_string(slope.numel()) +
                                    " != channels " + std::to_string(d.c));
    Tensor<T> y(d);
    for (std::int64_t n = 0; n < d.n; ++n)
        for (std::int64_t c = 0; c < d.c; ++c) {
            const T a = slope[c];
            const T* xp = x.data() + x.offset(n, c, 0, 0);
            T* yp = y.data() + y.offset(n, c, 0, 0);
            for (std::int64_t i = 0; i < d.h * d.w; ++i) yp[i] = xp[i] > T(0) ? xp[i] : a * xp[i];
        }
    return y;
}

template <typename T>
struct PreluGrads {
    Tensor<T> dx;
    Tensor<T> dslope;
};

template <typename T>
PreluGrads<T> prelu_backward(const Tensor<T>& x, const Tensor<T>& slope, const Tensor<T>& dy) {
    const Dims& d = x.dims();
    PreluGrads<T> g;
    g.dx = Tensor<T>(d);
    g.dslope = Tensor<T>::zeros({d.c, 1, 1, 1});
    for (std::int64_t n = 0; n < d.n; ++n)
        for (std::int64_t c = 0; c < d.c; ++c) {
            const T a = slope[c];
            T da = 0;
            const T* xp = x.data() + x.offset(n, c, 0, 0);
            const T* dp = dy.data() + dy.offset(n, c, 0, 0);
            T* gp = g.dx.data() + g.dx.offset(n, c, 0, 0);
            for (std::int64_t i = 0; i < d.h * d.w; ++i) {
                if (xp[i] > T(0)) {
                    gp[i] = dp[i];
                } else {
                    gp[i] = a * dp[i];
                    da += dp[i] * xp[i];
                }
            }
            g.dslope[c] += da;
        }
    return g;
}

} // namespace flattenet
