#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "flattenet/layer.hpp"

namespace flattenet {

// Small stand-in FCN encoder: one stride-2 conv+BN+ReLU stage per width entry, so the output
// grid is input / 2^stages with widths.back() channels.
struct ToyBackboneSpec {
    std::vector<std::int64_t> widths = {64, 128, 256, 256, 512};
    std::int64_t c_in = 3;
    std::int64_t k = 3;

    std::int64_t stages() const { return static_cast<std::int64_t>(widths.size()); }
    std::int64_t out_channels() const { return widths.back(); }
    std::int64_t subsample() const { return std::int64_t{1} << stages(); }

    void validate() const {
        if (widths.empty()) throw std::invalid_argument("backbone: need at least one stage");
        if (c_in < 1 || k < 1) throw std::invalid_argument("backbone: c_in and k must be >= 1");
        for (std::int64_t w : widths)
            if (w < 1) throw std::invalid_argument("backbone: stage widths must be >= 1");
    }
};

template <typename T>
std::unique_ptr<Sequential<T>> make_toy_backbone(const ToyBackboneSpec& spec,
                                                 const std::string& name, Rng& rng) {
    spec.validate();
    auto seq = std::make_unique<Sequential<T>>(name);
    std::int64_t c = spec.c_in;
    for (std::size_t i = 0; i < spec.widths.size(); ++i) {
        const std::string prefix = name + ".s" + std::to_string(i);
        ConvSpec conv{c, spec.widths[i], spec.k, 2, 1};
        seq->add(std::make_unique<Conv2dLayer<T>>(conv, prefix + ".conv", rng));
        seq->add(std::make_unique<BatchNormLayer<T>>(spec.widths[i], prefix + ".bn"));
        seq->add(std::make_unique<ReluLayer<T>>(prefix + ".act"));
        c = spec.widths[i];
    }
    return seq;
}

} // namespace flattenet
