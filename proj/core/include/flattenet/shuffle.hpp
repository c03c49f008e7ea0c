#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "flattenet/rng.hpp"
#include "flattenet/tensor.hpp"
#include "flattenet/threading.hpp"

namespace flattenet {

// out[n, c, h*r+i, w*r+j] = in[n, c*r*r + i*r + j, h, w]
template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, std::int64_t r) {
    const Dims& d = x.dims();
    if (r < 1) throw std::invalid_argument("pixel_shuffle: r must be >= 1");
    if (d.c % (r * r) != 0)
        throw std::invalid_argument("pixel_shuffle: channels " + std::to_string(d.c) +
                                    " not divisible by r^2 = " + std::to_string(r * r));
    Dims od{d.n, d.c / (r * r), d.h * r, d.w * r};
    Tensor<T> y(od);
    parallel_for(od.n * od.c, [&](std::int64_t begin, std::int64_t end) {
        for (std::int64_t p = begin; p < end; ++p) {
            const std::int64_t n = p / od.c, c = p % od.c;
            T* yp = y.data() + y.offset(n, c, 0, 0);
            for (std::int64_t i = 0; i < r; ++i)
                for (std::int64_t j = 0; j < r; ++j) {
                    const T* xp = x.data() + x.offset(n, c * r * r + i * r + j, 0, 0);
                    for (std::int64_t h = 0; h < d.h; ++h)
                        for (std::int64_t w = 0; w < d.w; ++w)
                            yp[(h * r + i) * od.w + (w * r + j)] = xp[h * d.w + w];
                }
        }
    });
    return y;
}

template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, std::int64_t r) {
    const Dims& d = x.dims();
    if (r < 1) throw std::invalid_argument("pixel_unshuffle: r must be >= 1");
    if (d.h % r != 0 || d.w % r != 0)
        throw std::invalid_argument("pixel_unshuffle: spatial dims " + d.str() +
                                    " not divisible by r = " + std::to_string(r));
    Dims od{d.n, d.c * r * r, d.h / r, d.w / r};
    Tensor<T> y(od);
    parallel_for(d.n * d.c, [&](std::int64_t begin, std::int64_t end) {
        for (std::int64_t p = begin; p < end; ++p) {
            const std::int64_t n = p / d.c, c = p % d.c;
            const T* xp = x.data() + x.offset(n, c, 0, 0);
            for (std::int64_t i = 0; i < r; ++i)
                for (std::int64_t j = 0; j < r; ++j) {
                    T* yp = y.data() + y.offset(n, c * r * r + i * r + j, 0, 0);
                    for (std::int64_t h = 0; h < od.h; ++h)
                        for (std::int64_t w = 0; w < od.w; ++w)
                            yp[h * od.w + w] = xp[(h * r + i) * d.w + (w * r + j)];
                }
        }
    });
    return y;
}

// out channel oc reads in channel perm[oc]
template <typename T>
Tensor<T> permute_channels(const Tensor<T>& x, const std::vector<std::int64_t>& perm) {
    const Dims& d = x.dims();
    if (static_cast<std::int64_t>(perm.size()) != d.c)
        throw std::invalid_argument("permute_channels: perm size " + std::to_string(perm.size()) +
                                    " != channels " + std::to_string(d.c));
    Tensor<T> y(d);
    const std::int64_t plane = d.h * d.w;
    parallel_for(d.n * d.c, [&](std::int64_t begin, std::int64_t end) {
        for (std::int64_t p = begin; p < end; ++p) {
            const std::int64_t n = p / d.c, oc = p % d.c;
            const std::int64_t ic = perm[oc];
            if (ic < 0 || ic >= d.c) throw std::invalid_argument("permute_channels: bad index");
            const T* xp = x.data() + x.offset(n, ic, 0, 0);
            T* yp = y.data() + y.offset(n, oc, 0, 0);
            std::copy(xp, xp + plane, yp);
        }
    });
    return y;
}

inline std::vector<std::int64_t> inverse_permutation(const std::vector<std::int64_t>& perm) {
    std::vector<std::int64_t> inv(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) inv[static_cast<std::size_t>(perm[i])] = static_cast<std::int64_t>(i);
    return inv;
}

// Fisher-Yates with our own rng so the permutation is stable across platforms
inline std::vector<std::int64_t> seeded_permutation(std::int64_t n, std::uint64_t seed) {
    std::vector<std::int64_t> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), std::int64_t{0});
    Rng rng(seed);
    for (std::int64_t i = n - 1; i > 0; --i)
        std::swap(perm[static_cast<std::size_t>(i)], perm[rng.below(static_cast<std::uint64_t>(i + 1))]);
    return perm;
}

// perm for viewing channels as (g, c/g) and transposing: out j*g+i = in i*(c/g)+j
inline std::vector<std::int64_t> channel_shuffle_perm(std::int64_t c, std::int64_t g) {
    if (g < 1 || c % g != 0)
        throw std::invalid_argument("channel_shuffle: channels " + std::to_string(c) +
                                    " not divisible by groups " + std::to_string(g));
    const std::int64_t per = c / g;
    std::vector<std::int64_t> perm(static_cast<std::size_t>(c));
    for (std::int64_t i = 0; i < g; ++i)
        for (std::int64_t j = 0; j < per; ++j) perm[static_cast<std::size_t>(j * g + i)] = i * per + j;
    return perm;
}

template <typename T>
Tensor<T> channel_shuffle(const Tensor<T>& x, std::int64_t g) {
    return permute_channels(x, channel_shuffle_perm(x.dims().c, g));
}

enum class RearrangeMode {
    CsPs,       // channel shuffle (g = s2^2) then pixel shuffle: the default depth-to-space map
    PsOnly,     // pixel shuffle alone (ablation)
    RandPermPs, // seeded random channel permutation then pixel shuffle (ablation)
};

struct RearrangeSpec {
    std::int64_t s2 = 1;      // grid side; also the upscaling factor
    std::int64_t c_tilde = 1; // per-pixel descriptor channels after rearrangement
    RearrangeMode mode = RearrangeMode::CsPs;
    std::uint64_t perm_seed = 0; // RandPermPs only

    std::int64_t c_in() const { return c_tilde * s2 * s2; }

    void validate() const {
        if (s2 < 1 || c_tilde < 1) throw std::invalid_argument("rearrange: s2 and c_tilde must be >= 1");
    }
};

inline std::vector<std::int64_t> rearrange_perm(const RearrangeSpec& spec) {
    spec.validate();
    switch (spec.mode) {
        case RearrangeMode::CsPs: return channel_shuffle_perm(spec.c_in(), spec.s2 * spec.s2);
        case RearrangeMode::PsOnly: {
            std::vector<std::int64_t> id(static_cast<std::size_t>(spec.c_in()));
            std::iota(id.begin(), id.end(), std::int64_t{0});
            return id;
        }
        case RearrangeMode::RandPermPs: return seeded_permutation(spec.c_in(), spec.perm_seed);
    }
    throw std::logic_error("rearrange: unknown mode");
}

// R: a flat grid-stacked descriptor tensor (n, c_tilde*s2^2, h, w) onto (n, c_tilde, h*s2, w*s2).
// In CsPs mode descriptor (i, j) of a site lives in channel block (i*s2+j)*c_tilde .. +c_tilde and
// lands at spatial offset (i, j) inside the upscaled block.
template <typename T>
Tensor<T> rearrange_R(const Tensor<T>& x, const RearrangeSpec& spec) {
    if (x.dims().c != spec.c_in())
        throw std::invalid_argument("rearrange_R: input channels " + std::to_string(x.dims().c) +
                                    " != c_tilde*s2^2 = " + std::to_string(spec.c_in()));
    if (spec.mode == RearrangeMode::PsOnly) return pixel_shuffle(x, spec.s2);
    return pixel_shuffle(permute_channels(x, rearrange_perm(spec)), spec.s2);
}

template <typename T>
Tensor<T> rearrange_R_inv(const Tensor<T>& y, const RearrangeSpec& spec) {
    spec.validate();
    if (y.dims().c != spec.c_tilde)
        throw std::invalid_argument("rearrange_R_inv: input channels " + std::to_string(y.dims().c) +
                                    " != c_tilde = " + std::to_string(spec.c_tilde));
    Tensor<T> u = pixel_unshuffle(y, spec.s2);
    if (spec.mode == RearrangeMode::PsOnly) return u;
    return permute_channels(u, inverse_permutation(rearrange_perm(spec)));
}

// Channel-connectivity density of (pointwise group conv g1) -> (channel shuffle g2) ->
// (pointwise group conv g3) acting on c channels. Output channels within one g3 group share a
// receptive set, so the boolean connectivity matrix is all-ones iff every g3 input group, traced
// back through the shuffle, covers every one of the c input channels.
inline bool connectivity_check(std::int64_t g1, std::int64_t g2, std::int64_t g3, std::int64_t c) {
    if (g1 < 1 || g2 < 1 || g3 < 1 || c < 1)
        throw std::invalid_argument("connectivity_check: all arguments must be >= 1");
    if (c % g1 != 0 || c % g2 != 0 || c % g3 != 0)
        throw std::invalid_argument("connectivity_check: groups must divide channel count " +
                                    std::to_string(c));
    const auto shuffle = channel_shuffle_perm(c, g2);
    const std::int64_t per1 = c / g1, per3 = c / g3;
    for (std::int64_t t = 0; t < g3; ++t) {
        std::vector<bool> covered(static_cast<std::size_t>(c), false);
        std::int64_t count = 0;
        for (std::int64_t s = t * per3; s < (t + 1) * per3; ++s) {
            const std::int64_t mid = shuffle[static_cast<std::size_t>(s)]; // g1 output feeding slot s
            const std::int64_t grp = mid / per1;
            for (std::int64_t in = grp * per1; in < (grp + 1) * per1; ++in) {
                if (!covered[static_cast<std::size_t>(in)]) {
                    covered[static_cast<std::size_t>(in)] = true;
                    ++count;
                }
            }
        }
        if (count != c) return false;
    }
    return true;
}

} // namespace flattenet
