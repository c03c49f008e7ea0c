#pragma once

#include <cmath>
#include <stdexcept>

#include "flattenet/tensor.hpp"

namespace flattenet {

template <typename T>
struct LossResult {
    T value;
    Tensor<T> dpred;
};

// mean over every element, matching the reduction used for dense regression targets
template <typename T>
LossResult<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
    if (!(pred.dims() == target.dims()))
        throw std::invalid_argument("mse_loss: shape mismatch " + pred.dims().str() + " vs " +
                                    target.dims().str());
    LossResult<T> r;
    r.dpred = Tensor<T>(pred.dims());
    const std::int64_t total = pred.numel();
    double acc = 0.0;
    const T scale = T(2) / static_cast<T>(total);
    for (std::int64_t i = 0; i < total; ++i) {
        const T d = pred[i] - target[i];
        acc += static_cast<double>(d) * static_cast<double>(d);
        r.dpred[i] = scale * d;
    }
    r.value = static_cast<T>(acc / static_cast<double>(total));
    return r;
}

// Softmax cross entropy over class logits stored channel-wise. With block_size > 1 each spatial
// site carries block_size^2 independent predictions laid out as contiguous class blocks: channel
// b*classes + c is the logit for class c at in-block slot b. Labels are (n, B, h, w) class ids;
// the loss is the mean over all n*B*h*w sites.
template <typename T>
LossResult<T> pixel_softmax_ce(const Tensor<T>& pred, const Tensor<std::int32_t>& labels,
                               std::int64_t classes, std::int64_t block_size = 1) {
    const Dims& pd = pred.dims();
    const std::int64_t B = block_size * block_size;
    if (classes < 2) throw std::invalid_argument("pixel_softmax_ce: need at least 2 classes");
    if (pd.c != classes * B)
        throw std::invalid_argument("pixel_softmax_ce: pred channels " + std::to_string(pd.c) +
                                    " != classes*block (" + std::to_string(classes * B) + ")");
    const Dims& ld = labels.dims();
    if (ld.n != pd.n || ld.c != B || ld.h != pd.h || ld.w != pd.w)
        throw std::invalid_argument("pixel_softmax_ce: label dims " + ld.str() +
                                    " do not match pred " + pd.str());

    LossResult<T> r;
    r.dpred = Tensor<T>(pd);
    const std::int64_t sites = pd.n * B * pd.h * pd.w;
    const T inv_sites = T(1) / static_cast<T>(sites);
    double acc = 0.0;
    std::vector<T> probs(static_cast<std::size_t>(classes));

    for (std::int64_t n = 0; n < pd.n; ++n)
        for (std::int64_t b = 0; b < B; ++b)
            for (std::int64_t h = 0; h < pd.h; ++h)
                for (std::int64_t w = 0; w < pd.w; ++w) {
                    const std::int32_t y = labels.at(n, b, h, w);
                    if (y < 0 || y >= classes)
                        throw std::invalid_argument("pixel_softmax_ce: label " + std::to_string(y) +
                                                    " out of range [0, " + std::to_string(classes) +
                                                    ")");
                    T mx = pred.at(n, b * classes, h, w);
                    for (std::int64_t c = 1; c < classes; ++c)
                        mx = std::max(mx, pred.at(n, b * classes + c, h, w));
                    T denom = 0;
                    for (std::int64_t c = 0; c < classes; ++c) {
                        probs[c] = std::exp(pred.at(n, b * classes + c, h, w) - mx);
                        denom += probs[c];
                    }
                    acc -= static_cast<double>(
                        std::log(static_cast<double>(probs[y]) / static_cast<double>(denom)));
                    for (std::int64_t c = 0; c < classes; ++c) {
                        const T p = probs[c] / denom;
                        r.dpred.at(n, b * classes + c, h, w) = (p - (c == y ? T(1) : T(0))) * inv_sites;
                    }
                }

    r.value = static_cast<T>(acc / static_cast<double>(sites));
    return r;
}

} // namespace flattenet
