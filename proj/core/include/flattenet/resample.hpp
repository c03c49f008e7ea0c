#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "flattenet/tensor.hpp"
#include "flattenet/threading.hpp"

namespace flattenet {

namespace detail {

// half-pixel source coordinate for output index o at scale factor f, clamped to the input range
struct LerpCoord {
    std::int64_t lo;
    std::int64_t hi;
    double t; // weight of hi
};

inline LerpCoord lerp_coord(std::int64_t o, std::int64_t factor, std::int64_t in_size) {
    double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in_size - 1));
    LerpCoord lc;
    lc.lo = static_cast<std::int64_t>(src);
    lc.hi = std::min(lc.lo + 1, in_size - 1);
    lc.t = src - static_cast<double>(lc.lo);
    return lc;
}

} // namespace detail

template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& x, std::int64_t factor) {
    if (factor < 1) throw std::invalid_argument("bilinear_upsample: factor must be >= 1");
    const Dims& d = x.dims();
    Dims od{d.n, d.c, d.h * factor, d.w * factor};
    Tensor<T> y(od);

    std::vector<detail::LerpCoord> rows(od.h), cols(od.w);
    for (std::int64_t i = 0; i < od.h; ++i) rows[i] = detail::lerp_coord(i, factor, d.h);
    for (std::int64_t j = 0; j < od.w; ++j) cols[j] = detail::lerp_coord(j, factor, d.w);

    parallel_for(od.n * od.c, [&](std::int64_t begin, std::int64_t end) {
        for (std::int64_t p = begin; p < end; ++p) {
            const std::int64_t n = p / od.c, c = p % od.c;
            const T* xp = x.data() + x.offset(n, c, 0, 0);
            T* yp = y.data() + y.offset(n, c, 0, 0);
            for (std::int64_t oh = 0; oh < od.h; ++oh) {
                const auto& r = rows[oh];
                for (std::int64_t ow = 0; ow < od.w; ++ow) {
                    const auto& cc = cols[ow];
                    const double tl = xp[r.lo * d.w + cc.lo], tr = xp[r.lo * d.w + cc.hi];
                    const double bl = xp[r.hi * d.w + cc.lo], br = xp[r.hi * d.w + cc.hi];
                    const double top = tl + (tr - tl) * cc.t;
                    const double bot = bl + (br - bl) * cc.t;
                    yp[oh * od.w + ow] = static_cast<T>(top + (bot - top) * r.t);
                }
            }
        }
    });
    return y;
}

// transpose of the forward interpolation: scatter each output gradient onto its four source taps
template <typename T>
Tensor<T> bilinear_upsample_backward(const Tensor<T>& dy, std::int64_t factor, const Dims& in_dims) {
    if (factor < 1) throw std::invalid_argument("bilinear_upsample: factor must be >= 1");
    const Dims& od = dy.dims();
    if (od.n != in_dims.n || od.c != in_dims.c || od.h != in_dims.h * factor ||
        od.w != in_dims.w * factor)
        throw std::invalid_argument("bilinear_upsample_backward: dy dims " + od.str() +
                                    " do not match input " + in_dims.str() + " at factor " +
                                    std::to_string(factor));
    Tensor<T> dx = Tensor<T>::zeros(in_dims);

    std::vector<detail::LerpCoord> rows(od.h), cols(od.w);
    for (std::int64_t i = 0; i < od.h; ++i) rows[i] = detail::lerp_coord(i, factor, in_dims.h);
    for (std::int64_t j = 0; j < od.w; ++j) cols[j] = detail::lerp_coord(j, factor, in_dims.w);

    parallel_for(od.n * od.c, [&](std::int64_t begin, std::int64_t end) {
        for (std::int64_t p = begin; p < end; ++p) {
            const std::int64_t n = p / od.c, c = p % od.c;
            const T* dp = dy.data() + dy.offset(n, c, 0, 0);
            T* gp = dx.data() + dx.offset(n, c, 0, 0);
            for (std::int64_t oh = 0; oh < od.h; ++oh) {
                const auto& r = rows[oh];
                for (std::int64_t ow = 0; ow < od.w; ++ow) {
                    const auto& cc = cols[ow];
                    const double g = dp[oh * od.w + ow];
                    gp[r.lo * in_dims.w + cc.lo] += static_cast<T>(g * (1.0 - r.t) * (1.0 - cc.t));
                    gp[r.lo * in_dims.w + cc.hi] += static_cast<T>(g * (1.0 - r.t) * cc.t);
                    gp[r.hi * in_dims.w + cc.lo] += static_cast<T>(g * r.t * (1.0 - cc.t));
                    gp[r.hi * in_dims.w + cc.hi] += static_cast<T>(g * r.t * cc.t);
                }
            }
        }
    });
    return dx;
}

} // namespace flattenet
