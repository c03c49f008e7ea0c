#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "flattenet/dwsg.hpp"
#include "flattenet/layer.hpp"
#include "flattenet/shuffle.hpp"

namespace flattenet {

// Stacked DWSGConv layers followed by the depth-to-space rearrangement. Turns a coarse
// high-channel feature grid into a c_tilde-channel map upscaled by s2.
struct FlatteningModuleSpec {
    std::vector<DwsgConvSpec> layers;
    std::int64_t s2 = 1;
    RearrangeMode rearrange = RearrangeMode::CsPs;
    std::uint64_t perm_seed = 0; // RandPermPs only

    std::int64_t out_channels(std::int64_t c_in) const {
        std::int64_t c = c_in;
        for (const auto& l : layers) c = l.out_channels(c);
        return c;
    }

    std::int64_t c_tilde(std::int64_t c_in) const { return out_channels(c_in) / (s2 * s2); }

    std::int64_t stride_product() const {
        std::int64_t p = 1;
        for (const auto& l : layers) p *= l.s;
        return p;
    }

    void validate(std::int64_t c_in) const {
        if (s2 < 1) throw std::invalid_argument("flatten: s2 must be >= 1");
        std::int64_t c = c_in;
        for (const auto& l : layers) {
            l.validate(c);
            c = l.out_channels(c);
        }
        if (c % (s2 * s2) != 0)
            throw std::invalid_argument("flatten: final channels " + std::to_string(c) +
                                        " not divisible by s2^2 = " + std::to_string(s2 * s2));
    }

    RearrangeSpec rearrange_spec(std::int64_t c_in) const {
        return RearrangeSpec{s2, c_tilde(c_in), rearrange, perm_seed};
    }
};

template <typename T>
class FlattenHead : public Layer<T> {
  public:
    FlattenHead(const FlatteningModuleSpec& spec, std::int64_t c_in, std::string name, Rng& rng)
        : spec_(spec), c_in_(c_in), name_(std::move(name)), trunk_(name_ + ".trunk") {
        spec_.validate(c_in);
        std::int64_t c = c_in;
        for (std::size_t i = 0; i < spec_.layers.size(); ++i)
            c = append_dwsg(trunk_, spec_.layers[i], c, name_ + ".l" + std::to_string(i), rng);
        rearrange_ = std::make_unique<RearrangeLayer<T>>(spec_.rearrange_spec(c_in), name_ + ".r");
    }

    std::string name() const override { return name_; }

    // geometry invariant: output side = input side * s2 / product of strides, and every strided
    // step must divide evenly so no rows are dropped by the conv floor
    Dims out_dims(const Dims& in) const {
        Dims d = in;
        for (const auto& l : spec_.layers) {
            if (d.h % l.s != 0 || d.w % l.s != 0)
                throw std::invalid_argument(name_ + ": stride " + std::to_string(l.s) +
                                            " does not divide feature size " + d.str());
            d.h /= l.s;
            d.w /= l.s;
            d.c = l.out_channels(d.c);
        }
        const std::int64_t sp = spec_.stride_product();
        if ((in.h * spec_.s2) % sp != 0 || (in.w * spec_.s2) % sp != 0)
            throw std::invalid_argument(name_ + ": geometry mismatch between strides and s2");
        return Dims{in.n, spec_.c_tilde(c_in_), d.h * spec_.s2, d.w * spec_.s2};
    }

    Tensor<T> forward(const Tensor<T>& x, bool train) override {
        const Dims expect = out_dims(x.dims());
        Tensor<T> y = rearrange_->forward(trunk_.forward(x, train), train);
        if (!(y.dims() == expect))
            throw std::logic_error(name_ + ": produced " + y.dims().str() + ", expected " +
                                   expect.str());
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        return trunk_.backward(rearrange_->backward(dy));
    }

    std::vector<Param<T>*> params() override { return trunk_.params(); }

    const FlatteningModuleSpec& spec() const { return spec_; }
    std::int64_t c_in() const { return c_in_; }
    std::int64_t c_tilde() const { return spec_.c_tilde(c_in_); }
    Sequential<T>& trunk() { return trunk_; }
    const RearrangeSpec& rearrange_spec() const { return rearrange_->spec(); }

  private:
    FlatteningModuleSpec spec_;
    std::int64_t c_in_;
    std::string name_;
    Sequential<T> trunk_;
    std::unique_ptr<RearrangeLayer<T>> rearrange_;
};

} // namespace flattenet
