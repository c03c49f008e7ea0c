#pragma once

#include <stdexcept>
#include <vector>

#include "flattenet/tensor.hpp"
#include "flattenet/threading.hpp"

namespace flattenet {

// Per-channel batch statistics over (n, h, w). var is the biased estimate,
// which is what normalization divides by.
template <typename T>
struct BnStats {
    std::vector<T> mean;
    std::vector<T> var;
};

template <typename T>
BnStats<T> bn_batch_stats(const Tensor<T>& x) {
    const Dims& d = x.dims();
    const std::int64_t m = d.n * d.h * d.w;
    if (m < 2)
        throw std::invalid_argument("batch_norm: train mode needs n*h*w >= 2 per channel, got " +
                                    std::to_string(m));
    BnStats<T> st;
    st.mean.assign(static_cast<std::size_t>(d.c), T(0));
    st.var.assign(static_cast<std::size_t>(d.c), T(0));
    parallel_for(d.c, [&](std::int64_t c0, std::int64_t c1) {
        for (std::int64_t c = c0; c < c1; ++c) {
            T sum = 0;
            for (std::int64_t n = 0; n < d.n; ++n) {
                const T* p = x.data() + x.offset(n, c, 0, 0);
                for (std::int64_t i = 0; i < d.h * d.w; ++i) sum += p[i];
            }
            const T mean = sum / T(m);
            T sq = 0;
            for (std::int64_t n = 0; n < d.n; ++n) {
                const T* p = x.data() + x.offset(n, c, 0, 0);
                for (std::int64_t i = 0; i < d.h * d.w; ++i) {
                    const T dcenter = p[i] - mean;
                    sq += dcenter * dcenter;
                }
            }
            st.mean[static_cast<std::size_t>(c)] = mean;
            st.var[static_cast<std::size_t>(c)] = sq / T(m);
        }
    });
    return st;
}

template <typename T>
Tensor<T> bn_apply(const Tensor<T>& x, const std::vector<T>& mean, const std::vector<T>& var,
                   const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
    const Dims& d = x.dims();
    if (gamma.numel() != d.c || beta.numel() != d.c ||
        static_cast<std::int64_t>(mean.size()) != d.c ||
        static_cast<std::int64_t>(var.size()) != d.c)
        throw std::invalid_argument("batch_norm: per-channel parameter size mismatch");
    Tensor<T> y(d);
    parallel_for(d.n * d.c, [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t idx = b; idx < e; ++idx) {
            const std::int64_t n = idx / d.c, c = idx % d.c;
            const T inv = T(1) / std::sqrt(var[static_cast<std::size_t>(c)] + eps);
            const T g = gamma[c] * inv;
            const T off = beta[c] - mean[static_cast<std::size_t>(c)] * g;
            const T* xp = x.data() + x.offset(n, c, 0, 0);
            T* yp = y.data() + y.offset(n, c, 0, 0);
            for (std::int64_t i = 0; i < d.h * d.w; ++i) yp[i] = xp[i] * g + off;
        }
    });
    return y;
}

// train-mode forward using the batch's own statistics; pure (no state update)
template <typename T>
Tensor<T> bn_forward_train(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                           T eps, BnStats<T>* stats_out = nullptr) {
    BnStats<T> st = bn_batch_stats(x);
    Tensor<T> y = bn_apply(x, st.mean, st.var, gamma, beta, eps);
    if (stats_out) *stats_out = std::move(st);
    return y;
}

template <typename T>
Tensor<T> bn_forward_eval(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                          const std::vector<T>& running_mean, const std::vector<T>& running_var,
                          T eps) {
    return bn_apply(x, running_mean, running_var, gamma, beta, eps);
}

template <typename T>
struct BnGrads {
    Tensor<T> dx;
    Tensor<T> dgamma;
    Tensor<T> dbeta;
};

// backward through the batch-statistics path
template <typename T>
BnGrads<T> bn_backward_train(const Tensor<T>& x, const Tensor<T>& gamma, const BnStats<T>& st,
                             const Tensor<T>& dy, T eps) {
    const Dims& d = x.dims();
    const T m = T(d.n * d.h * d.w);
    BnGrads<T> g;
    g.dx = Tensor<T>(d);
    g.dgamma = Tensor<T>::zeros({d.c, 1, 1, 1});
    g.dbeta = Tensor<T>::zeros({d.c, 1, 1, 1});
    parallel_for(d.c, [&](std::int64_t c0, std::int64_t c1) {
        for (std::int64_t c = c0; c < c1; ++c) {
            const T mean = st.mean[static_cast<std::size_t>(c)];
            const T inv = T(1) / std::sqrt(st.var[static_cast<std::size_t>(c)] + eps);
            T sum_dy = 0, sum_dy_xhat = 0;
            for (std::int64_t n = 0; n < d.n; ++n) {
                const T* xp = x.data() + x.offset(n, c, 0, 0);
                const T* dp = dy.data() + dy.offset(n, c, 0, 0);
                for (std::int64_t i = 0; i < d.h * d.w; ++i) {
                    sum_dy += dp[i];
                    sum_dy_xhat += dp[i] * (xp[i] - mean) * inv;
                }
            }
            g.dgamma[c] += sum_dy_xhat;
            g.dbeta[c] += sum_dy;
            const T k1 = gamma[c] * inv;
            for (std::int64_t n = 0; n < d.n; ++n) {
                const T* xp = x.data() + x.offset(n, c, 0, 0);
                const T* dp = dy.data() + dy.offset(n, c, 0, 0);
                T* gp = g.dx.data() + g.dx.offset(n, c, 0, 0);
                for (std::int64_t i = 0; i < d.h * d.w; ++i) {
                    const T xhat = (xp[i] - mean) * inv;
                    gp[i] = k1 * (dp[i] - sum_dy / m - xhat * sum_dy_xhat / m);
                }
            }
        }
    });
    return g;
}

// backward when running statistics are treated as constants
template <typename T>
BnGrads<T> bn_backward_eval(const Tensor<T>& x, const Tensor<T>& gamma,
                            const std::vector<T>& running_mean,
                            const std::vector<T>& running_var, const Tensor<T>& dy, T eps) {
    const Dims& d = x.dims();
    BnGrads<T> g;
    g.dx = Tensor<T>(d);
    g.dgamma = Tensor<T>::zeros({d.c, 1, 1, 1});
    g.dbeta = Tensor<T>::zeros({d.c, 1, 1, 1});
    parallel_for(d.c, [&](std::int64_t c0, std::int64_t c1) {
        for (std::int64_t c = c0; c < c1; ++c) {
            const T mean = running_mean[static_cast<std::size_t>(c)];
            const T inv = T(1) / std::sqrt(running_var[static_cast<std::size_t>(c)] + eps);
            T sum_dy = 0, sum_dy_xhat = 0;
            const T k1 = gamma[c] * inv;
            for (std::int64_t n = 0; n < d.n; ++n) {
                const T* xp = x.data() + x.offset(n, c, 0, 0);
                const T* dp = dy.data() + dy.offset(n, c, 0, 0);
                T* gp = g.dx.data() + g.dx.offset(n, c, 0, 0);
                for (std::int64_t i = 0; i < d.h * d.w; ++i) {
                    sum_dy += dp[i];
                    sum_dy_xhat += dp[i] * (xp[i] - mean) * inv;
                    gp[i] = k1 * dp[i];
                }
            }
            g.dgamma[c] += sum_dy_xhat;
            g.dbeta[c] += sum_dy;
        }
    });
    return g;
}

} // namespace flattenet
