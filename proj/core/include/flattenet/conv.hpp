#pragma once

#include <stdexcept>

#include "flattenet/tensor.hpp"
#include "flattenet/threading.hpp"

namespace flattenet {

struct ConvSpec {
    std::int64_t c_in = 0;
    std::int64_t c_out = 0;
    std::int64_t k = 1;
    std::int64_t stride = 1;
    std::int64_t groups = 1;
    std::int64_t pad = -1; // -1 means "same": floor(k/2)
    bool bias = false;

    std::int64_t padding() const { return pad >= 0 ? pad : k / 2; }
    Dims weight_dims() const { return {c_out, c_in / groups, k, k}; }

    void validate() const {
        if (c_in <= 0 || c_out <= 0 || k <= 0 || stride <= 0 || groups <= 0)
            throw std::invalid_argument("conv: non-positive spec field");
        if (c_in % groups != 0 || c_out % groups != 0)
            throw std::invalid_argument("conv: groups " + std::to_string(groups) +
                                        " must divide c_in " + std::to_string(c_in) +
                                        " and c_out " + std::to_string(c_out));
    }

    Dims out_dims(const Dims& in) const {
        const std::int64_t p = padding();
        return {in.n, c_out, (in.h + 2 * p - k) / stride + 1, (in.w + 2 * p - k) / stride + 1};
    }
};

namespace detail {

// valid output range [lo, hi) for which i = o*stride - pad + koff lands in [0, in_size)
inline void valid_out_range(std::int64_t out_size, std::int64_t in_size, std::int64_t stride,
                            std::int64_t pad, std::int64_t koff, std::int64_t& lo,
                            std::int64_t& hi) {
    const std::int64_t shift = pad - koff;
    lo = shift > 0 ? (shift + stride - 1) / stride : 0;
    hi = in_size - 1 + shift >= 0 ? (in_size - 1 + shift) / stride + 1 : 0;
    if (hi > out_size) hi = out_size;
}

} // namespace detail

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const ConvSpec& spec, const Tensor<T>& w,
                         const Tensor<T>* bias = nullptr) {
    spec.validate();
    const Dims& xd = x.dims();
    if (xd.c != spec.c_in)
        throw std::invalid_argument("conv: input channels " + std::to_string(xd.c) +
                                    " != spec.c_in " + std::to_string(spec.c_in));
    if (xd.n <= 0 || xd.h <= 0 || xd.w <= 0)
        throw std::invalid_argument("conv: non-positive input dims " + xd.str());
    if (!(w.dims() == spec.weight_dims()))
        throw std::invalid_argument("conv: weight dims " + w.dims().str() + " != expected " +
                                    spec.weight_dims().str());
    const Dims od = spec.out_dims(xd);
    if (od.h <= 0 || od.w <= 0)
        throw std::invalid_argument("conv: kernel larger than padded input");

    const std::int64_t cpg_in = spec.c_in / spec.groups;
    const std::int64_t cpg_out = spec.c_out / spec.groups;
    const std::int64_t p = spec.padding(), s = spec.stride, k = spec.k;

    Tensor<T> out(od);
    parallel_for(od.n * od.c, [&](std::int64_t begin, std::int64_t end) {
        for (std::int64_t idx = begin; idx < end; ++idx) {
            const std::int64_t n = idx / od.c;
            const std::int64_t oc = idx % od.c;
            const std::int64_t g = oc / cpg_out;
            T* acc = out.data() + out.offset(n, oc, 0, 0);
            for (std::int64_t icg = 0; icg < cpg_in; ++icg) {
                const std::int64_t ic = g * cpg_in + icg;
                const T* xp = x.data() + x.offset(n, ic, 0, 0);
                const T* wp = w.data() + w.offset(oc, icg, 0, 0);
                for (std::int64_t kh = 0; kh < k; ++kh) {
                    std::int64_t oh_lo, oh_hi;
                    detail::valid_out_range(od.h, xd.h, s, p, kh, oh_lo, oh_hi);
                    for (std::int64_t kw = 0; kw < k; ++kw) {
                        const T wv = wp[kh * k + kw];
                        std::int64_t ow_lo, ow_hi;
                        detail::valid_out_range(od.w, xd.w, s, p, kw, ow_lo, ow_hi);
                        for (std::int64_t oh = oh_lo; oh < oh_hi; ++oh) {
                            const std::int64_t base = (oh * s - p + kh) * xd.w + kw - p;
                            T* ar = acc + oh * od.w;
                            for (std::int64_t ow = ow_lo; ow < ow_hi; ++ow)
                                ar[ow] += wv * xp[base + ow * s];
                        }
                    }
                }
            }
            if (bias) {
                const T b = (*bias)[oc];
                for (std::int64_t i = 0; i < od.h * od.w; ++i) acc[i] += b;
            }
        }
    });
    return out;
}

template <typename T>
struct ConvGrads {
    Tensor<T> dx;
    Tensor<T> dw;
    Tensor<T> db; // empty unless bias requested
};

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const ConvSpec& spec, const Tensor<T>& w,
                             const Tensor<T>& dy, bool want_bias = false) {
    spec.validate();
    const Dims& xd = x.dims();
    const Dims od = spec.out_dims(xd);
    if (!(dy.dims() == od))
        throw std::invalid_argument("conv backward: dy dims " + dy.dims().str() +
                                    " != forward output " + od.str());

    const std::int64_t cpg_in = spec.c_in / spec.groups;
    const std::int64_t cpg_out = spec.c_out / spec.groups;
    const std::int64_t p = spec.padding(), s = spec.stride, k = spec.k;

    ConvGrads<T> grads;
    grads.dx = Tensor<T>::zeros(xd);
    grads.dw = Tensor<T>::zeros(spec.weight_dims());
    if (want_bias) grads.db = Tensor<T>::zeros({spec.c_out, 1, 1, 1});

    // dW: each worker owns a slice of output channels
    parallel_for(spec.c_out, [&](std::int64_t oc_begin, std::int64_t oc_end) {
        for (std::int64_t oc = oc_begin; oc < oc_end; ++oc) {
            const std::int64_t g = oc / cpg_out;
            for (std::int64_t n = 0; n < xd.n; ++n) {
                const T* dyp = dy.data() + dy.offset(n, oc, 0, 0);
                for (std::int64_t icg = 0; icg < cpg_in; ++icg) {
                    const std::int64_t ic = g * cpg_in + icg;
                    const T* xp = x.data() + x.offset(n, ic, 0, 0);
                    T* dwp = grads.dw.data() + grads.dw.offset(oc, icg, 0, 0);
                    for (std::int64_t kh = 0; kh < k; ++kh) {
                        std::int64_t oh_lo, oh_hi;
                        detail::valid_out_range(od.h, xd.h, s, p, kh, oh_lo, oh_hi);
                        for (std::int64_t kw = 0; kw < k; ++kw) {
                            std::int64_t ow_lo, ow_hi;
                            detail::valid_out_range(od.w, xd.w, s, p, kw, ow_lo, ow_hi);
                            T acc = 0;
                            for (std::int64_t oh = oh_lo; oh < oh_hi; ++oh) {
                                const std::int64_t base = (oh * s - p + kh) * xd.w + kw - p;
                                const T* dr = dyp + oh * od.w;
                                for (std::int64_t ow = ow_lo; ow < ow_hi; ++ow)
                                    acc += dr[ow] * xp[base + ow * s];
                            }
                            dwp[kh * k + kw] += acc;
                        }
                    }
                }
            }
        }
    });

    // dX: each worker owns a slice of samples
    parallel_for(xd.n, [&](std::int64_t n_begin, std::int64_t n_end) {
        for (std::int64_t n = n_begin; n < n_end; ++n) {
            for (std::int64_t oc = 0; oc < spec.c_out; ++oc) {
                const std::int64_t g = oc / cpg_out;
                const T* dyp = dy.data() + dy.offset(n, oc, 0, 0);
                for (std::int64_t icg = 0; icg < cpg_in; ++icg) {
                    const std::int64_t ic = g * cpg_in + icg;
                    T* dxp = grads.dx.data() + grads.dx.offset(n, ic, 0, 0);
                    const T* wp = w.data() + w.offset(oc, icg, 0, 0);
                    for (std::int64_t kh = 0; kh < k; ++kh) {
                        std::int64_t oh_lo, oh_hi;
                        detail::valid_out_range(od.h, xd.h, s, p, kh, oh_lo, oh_hi);
                        for (std::int64_t kw = 0; kw < k; ++kw) {
                            const T wv = wp[kh * k + kw];
                            if (wv == T(0)) continue;
                            std::int64_t ow_lo, ow_hi;
                            detail::valid_out_range(od.w, xd.w, s, p, kw, ow_lo, ow_hi);
                            for (std::int64_t oh = oh_lo; oh < oh_hi; ++oh) {
                                const std::int64_t base = (oh * s - p + kh) * xd.w + kw - p;
                                const T* dr = dyp + oh * od.w;
                                for (std::int64_t ow = ow_lo; ow < ow_hi; ++ow)
                                    dxp[base + ow * s] += wv * dr[ow];
                            }
                        }
                    }
                }
            }
        }
    });

    if (want_bias) {
        for (std::int64_t oc = 0; oc < spec.c_out; ++oc) {
            T acc = 0;
            for (std::int64_t n = 0; n < od.n; ++n) {
                const T* dyp = dy.data() + dy.offset(n, oc, 0, 0);
                for (std::int64_t i = 0; i < od.h * od.w; ++i) acc += dyp[i];
            }
            grads.db[oc] += acc;
        }
    }
    return grads;
}

} // namespace flattenet
