#pragma once

#include <stdexcept>
#include <string>

#include "flattenet/layer.hpp"
#include "flattenet/shuffle.hpp"

namespace flattenet {

struct PredictorSpec {
    std::int64_t c_tilde = 1;
    std::int64_t classes = 1;

    void validate() const {
        if (c_tilde < 1 || classes < 1)
            throw std::invalid_argument("predictor: c_tilde and classes must be >= 1");
    }
};

// Per-site linear map c_tilde -> classes with one shared weight matrix and bias. Affine mode
// consumes the rearranged map directly. Folded mode consumes the pre-rearrangement tensor
// (s2^2 descriptor blocks of c_tilde channels) and applies the same weights to every block, so
// rearranging its output reproduces the affine path exactly. Both modes run the same inner loop,
// affine being the s2=1 case, which keeps the two paths bitwise comparable.
template <typename T>
class PixelPredictor : public Layer<T> {
  public:
    enum class Mode { Affine, Folded };

    PixelPredictor(PredictorSpec spec, std::string name, Rng& rng, Mode mode = Mode::Affine,
                   std::int64_t fold_s2 = 1)
        : spec_(spec), name_(std::move(name)), mode_(mode), fold_s2_(fold_s2) {
        spec_.validate();
        const T bound = static_cast<T>(std::sqrt(6.0 / static_cast<double>(spec_.c_tilde)));
        w_ = Param<T>(name_ + ".w", Tensor<T>::uniform({spec_.classes, spec_.c_tilde, 1, 1}, bound, rng));
        b_ = Param<T>(name_ + ".b", Tensor<T>::zeros({spec_.classes, 1, 1, 1}));
    }

    std::string name() const override { return name_; }
    const PredictorSpec& spec() const { return spec_; }
    Param<T>& weight() { return w_; }
    Param<T>& bias() { return b_; }
    std::vector<Param<T>*> params() override { return {&w_, &b_}; }

    Tensor<T> forward_affine(const Tensor<T>& x) {
        xa_ = x;
        has_a_ = true;
        return apply(x, 1);
    }

    Tensor<T> backward_affine(const Tensor<T>& dy) {
        if (!has_a_) throw std::logic_error(name_ + ": affine backward before forward");
        return apply_backward(xa_, dy, 1);
    }

    Tensor<T> forward_folded(const Tensor<T>& x) {
        xf_ = x;
        has_f_ = true;
        return apply(x, fold_s2_);
    }

    Tensor<T> backward_folded(const Tensor<T>& dy) {
        if (!has_f_) throw std::logic_error(name_ + ": folded backward before forward");
        return apply_backward(xf_, dy, fold_s2_);
    }

    Tensor<T> forward(const Tensor<T>& x, bool) override {
        return mode_ == Mode::Affine ? forward_affine(x) : forward_folded(x);
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        return mode_ == Mode::Affine ? backward_affine(dy) : backward_folded(dy);
    }

  private:
    Tensor<T> apply(const Tensor<T>& x, std::int64_t s2) const {
        const std::int64_t blocks = s2 * s2;
        const Dims& d = x.dims();
        if (d.c != spec_.c_tilde * blocks)
            throw std::invalid_argument(name_ + ": input channels " + std::to_string(d.c) +
                                        " != c_tilde*blocks = " +
                                        std::to_string(spec_.c_tilde * blocks));
        const std::int64_t C = spec_.classes, Q = spec_.c_tilde, plane = d.h * d.w;
        Tensor<T> y({d.n, C * blocks, d.h, d.w});
        parallel_for(d.n * blocks * C, [&](std::int64_t begin, std::int64_t end) {
            for (std::int64_t t = begin; t < end; ++t) {
                const std::int64_t g = t / C, gamma = t % C;
                const std::int64_t n = g / blocks, blk = g % blocks;
                T* yp = y.data() + y.offset(n, blk * C + gamma, 0, 0);
                for (std::int64_t i = 0; i < plane; ++i) yp[i] = b_.value[gamma];
                for (std::int64_t q = 0; q < Q; ++q) {
                    const T wv = w_.value[gamma * Q + q];
                    const T* xp = x.data() + x.offset(n, blk * Q + q, 0, 0);
                    for (std::int64_t i = 0; i < plane; ++i) yp[i] += wv * xp[i];
                }
            }
        });
        return y;
    }

    Tensor<T> apply_backward(const Tensor<T>& x, const Tensor<T>& dy, std::int64_t s2) {
        const std::int64_t blocks = s2 * s2;
        const Dims& d = x.dims();
        const std::int64_t C = spec_.classes, Q = spec_.c_tilde, plane = d.h * d.w;
        if (!(dy.dims() == Dims{d.n, C * blocks, d.h, d.w}))
            throw std::invalid_argument(name_ + ": dy dims " + dy.dims().str() + " unexpected");

        Tensor<T> dx(d);
        parallel_for(d.n * blocks * Q, [&](std::int64_t begin, std::int64_t end) {
            for (std::int64_t t = begin; t < end; ++t) {
                const std::int64_t g = t / Q, q = t % Q;
                const std::int64_t n = g / blocks, blk = g % blocks;
                T* gp = dx.data() + dx.offset(n, blk * Q + q, 0, 0);
                for (std::int64_t i = 0; i < plane; ++i) gp[i] = T(0);
                for (std::int64_t gamma = 0; gamma < C; ++gamma) {
                    const T wv = w_.value[gamma * Q + q];
                    const T* dp = dy.data() + dy.offset(n, blk * C + gamma, 0, 0);
                    for (std::int64_t i = 0; i < plane; ++i) gp[i] += wv * dp[i];
                }
            }
        });
        for (std::int64_t gamma = 0; gamma < C; ++gamma) {
            T db = 0;
            for (std::int64_t n = 0; n < d.n; ++n)
                for (std::int64_t blk = 0; blk < blocks; ++blk) {
                    const T* dp = dy.data() + dy.offset(n, blk * C + gamma, 0, 0);
                    const T* xb = x.data() + x.offset(n, blk * Q, 0, 0);
                    for (std::int64_t i = 0; i < plane; ++i) db += dp[i];
                    for (std::int64_t q = 0; q < Q; ++q) {
                        T dw = 0;
                        const T* xp = xb + q * plane;
                        for (std::int64_t i = 0; i < plane; ++i) dw += dp[i] * xp[i];
                        w_.grad[gamma * Q + q] += dw;
                    }
                }
            b_.grad[gamma] += db;
        }
        return dx;
    }

    PredictorSpec spec_;
    std::string name_;
    Mode mode_;
    std::int64_t fold_s2_;
    Param<T> w_;
    Param<T> b_;
    Tensor<T> xa_;
    Tensor<T> xf_;
    bool has_a_ = false;
    bool has_f_ = false;
};

enum class FoldKind { Continuous, Discrete };

// average-pool by factor f
template <typename T>
Tensor<T> downsample_avg(const Tensor<T>& y, std::int64_t f) {
    const Dims& d = y.dims();
    if (f < 1 || d.h % f != 0 || d.w % f != 0)
        throw std::invalid_argument("downsample: factor " + std::to_string(f) +
                                    " does not divide " + d.str());
    if (f == 1) return y;
    Dims od{d.n, d.c, d.h / f, d.w / f};
    Tensor<T> out(od);
    const T inv = T(1) / static_cast<T>(f * f);
    for (std::int64_t n = 0; n < d.n; ++n)
        for (std::int64_t c = 0; c < d.c; ++c)
            for (std::int64_t h = 0; h < od.h; ++h)
                for (std::int64_t w = 0; w < od.w; ++w) {
                    T acc = 0;
                    for (std::int64_t i = 0; i < f; ++i)
                        for (std::int64_t j = 0; j < f; ++j)
                            acc += y.at(n, c, h * f + i, w * f + j);
                    out.at(n, c, h, w) = acc * inv;
                }
    return out;
}

// nearest: picks the center sample of each f×f cell (offset f/2)
template <typename T>
Tensor<T> downsample_stride(const Tensor<T>& y, std::int64_t f) {
    const Dims& d = y.dims();
    if (f < 1 || d.h % f != 0 || d.w % f != 0)
        throw std::invalid_argument("downsample: factor " + std::to_string(f) +
                                    " does not divide " + d.str());
    if (f == 1) return y;
    Dims od{d.n, d.c, d.h / f, d.w / f};
    Tensor<T> out(od);
    const std::int64_t off = f / 2;
    for (std::int64_t n = 0; n < d.n; ++n)
        for (std::int64_t c = 0; c < d.c; ++c)
            for (std::int64_t h = 0; h < od.h; ++h)
                for (std::int64_t w = 0; w < od.w; ++w)
                    out.at(n, c, h, w) = y.at(n, c, h * f + off, w * f + off);
    return out;
}

// Folds full-resolution targets into the pre-rearrangement layout: downsample by s1
// (average for continuous values, center-sample for discrete labels), then apply the inverse
// rearrangement so channel block b holds the in-block offset-b samples.
template <typename T>
Tensor<T> fold_targets(const Tensor<T>& y, std::int64_t s1, std::int64_t s2, FoldKind kind) {
    Tensor<T> down = kind == FoldKind::Continuous ? downsample_avg(y, s1) : downsample_stride(y, s1);
    return rearrange_R_inv(down, RearrangeSpec{s2, y.dims().c, RearrangeMode::CsPs, 0});
}

inline Tensor<std::int32_t> fold_labels(const Tensor<std::int32_t>& y, std::int64_t s1,
                                        std::int64_t s2) {
    Tensor<std::int32_t> down = downsample_stride(y, s1);
    return rearrange_R_inv(down, RearrangeSpec{s2, y.dims().c, RearrangeMode::CsPs, 0});
}

} // namespace flattenet
