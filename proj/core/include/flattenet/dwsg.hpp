#pragma once

#include <memory>
#include <stdexcept>
#include <string>

#include "flattenet/layer.hpp"
#include "flattenet/shuffle.hpp"

namespace flattenet {

// One factorized conv block: depthwise k×k (stride s) + BN, pointwise group g1 + BN + PReLU/ReLU,
// channel shuffle g2, pointwise group g3 expanding to expand*c_in + BN + ReLU.
struct DwsgConvSpec {
    std::int64_t k = 3;
    std::int64_t s = 1;
    std::int64_t g1 = 1;
    std::int64_t g2 = 1;
    std::int64_t g3 = 1;
    std::int64_t expand = 1;
    bool prelu = true;

    std::int64_t out_channels(std::int64_t c_in) const { return expand * c_in; }

    void validate(std::int64_t c_in) const {
        if (k < 1 || s < 1 || g1 < 1 || g2 < 1 || g3 < 1 || expand < 1)
            throw std::invalid_argument("dwsg: k, s, groups and expand must be >= 1");
        if (c_in % g1 != 0 || c_in % g2 != 0 || c_in % g3 != 0)
            throw std::invalid_argument("dwsg: g1/g2/g3 must divide c_in = " + std::to_string(c_in));
        if ((expand * c_in) % g3 != 0)
            throw std::invalid_argument("dwsg: g3 must divide expand*c_in = " +
                                        std::to_string(expand * c_in));
    }

    bool dense(std::int64_t c_in) const { return connectivity_check(g1, g2, g3, c_in); }
};

// appends the component layers to seq; returns the output channel count
template <typename T>
std::int64_t append_dwsg(Sequential<T>& seq, const DwsgConvSpec& spec, std::int64_t c_in,
                         const std::string& prefix, Rng& rng) {
    spec.validate(c_in);
    const std::int64_t c_out = spec.out_channels(c_in);

    ConvSpec dw{c_in, c_in, spec.k, spec.s, c_in};
    seq.add(std::make_unique<Conv2dLayer<T>>(dw, prefix + ".dw", rng));
    seq.add(std::make_unique<BatchNormLayer<T>>(c_in, prefix + ".dw_bn"));

    ConvSpec fpg{c_in, c_in, 1, 1, spec.g1};
    seq.add(std::make_unique<Conv2dLayer<T>>(fpg, prefix + ".fpg", rng));
    seq.add(std::make_unique<BatchNormLayer<T>>(c_in, prefix + ".fpg_bn"));
    if (spec.prelu)
        seq.add(std::make_unique<PreluLayer<T>>(c_in, prefix + ".act"));
    else
        seq.add(std::make_unique<ReluLayer<T>>(prefix + ".act"));

    seq.add(std::make_unique<ChannelShuffleLayer<T>>(spec.g2, prefix + ".shuffle"));

    ConvSpec spg{c_in, c_out, 1, 1, spec.g3};
    seq.add(std::make_unique<Conv2dLayer<T>>(spg, prefix + ".spg", rng));
    seq.add(std::make_unique<BatchNormLayer<T>>(c_out, prefix + ".spg_bn"));
    seq.add(std::make_unique<ReluLayer<T>>(prefix + ".out_act"));
    return c_out;
}

} // namespace flattenet
