#pragma once

// Keypoint decoding and the two evaluation metrics. Decoding follows the
// usual heatmap recipe: argmax plus a quarter-pixel shift toward the
// strongest 4-neighbor. Ties anywhere break toward the lowest flat index,
// and a flat neighborhood (or a border with no larger neighbor) leaves the
// argmax unshifted.

#include "flattenet/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace flattenet {

struct Keypoint {
    double row = 0;
    double col = 0;
};

template <typename T>
std::vector<Keypoint> decode_keypoints(const Tensor<T>& heatmaps) {
    const Dims& d = heatmaps.dims();
    std::vector<Keypoint> out;
    out.reserve(static_cast<std::size_t>(d.n * d.c));
    for (std::int64_t n = 0; n < d.n; ++n)
        for (std::int64_t k = 0; k < d.c; ++k) {
            std::int64_t by = 0, bx = 0;
            T best = heatmaps.at(n, k, 0, 0);
            for (std::int64_t y = 0; y < d.h; ++y)
                for (std::int64_t x = 0; x < d.w; ++x)
                    if (heatmaps.at(n, k, y, x) > best) {
                        best = heatmaps.at(n, k, y, x);
                        by = y;
                        bx = x;
                    }

            // flat-ascending neighbor order: up, left, right, down
            static constexpr std::int64_t offs[4][2] = {{-1, 0}, {0, -1}, {0, 1}, {1, 0}};
            double dy = 0, dx = 0;
            bool have = false, all_equal = true;
            T nbest = T(0), nfirst = T(0);
            std::int64_t ndy = 0, ndx = 0;
            for (const auto& o : offs) {
                const std::int64_t y = by + o[0], x = bx + o[1];
                if (y < 0 || y >= d.h || x < 0 || x >= d.w) continue;
                const T v = heatmaps.at(n, k, y, x);
                if (!have) {
                    have = true;
                    nfirst = nbest = v;
                    ndy = o[0];
                    ndx = o[1];
                } else {
                    if (v != nfirst) all_equal = false;
                    if (v > nbest) {
                        nbest = v;
                        ndy = o[0];
                        ndx = o[1];
                    }
                }
            }
            if (have && !all_equal) {
                dy = 0.25 * static_cast<double>(ndy);
                dx = 0.25 * static_cast<double>(ndx);
            }
            out.push_back(Keypoint{static_cast<double>(by) + dy, static_cast<double>(bx) + dx});
        }
    return out;
}

// Percentage of keypoints strictly closer to truth than alpha * head_len.
inline double pckh(const std::vector<Keypoint>& pred, const std::vector<Keypoint>& truth,
                   double head_len, double alpha) {
    if (pred.size() != truth.size()) throw std::invalid_argument("pckh: size mismatch");
    if (pred.empty()) throw std::invalid_argument("pckh: empty keypoint set");
    if (head_len <= 0) throw std::invalid_argument("pckh: head_len must be positive");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double dr = pred[i].row - truth[i].row;
        const double dc = pred[i].col - truth[i].col;
        if (std::sqrt(dr * dr + dc * dc) < alpha * head_len) ++hit;
    }
    return 100.0 * static_cast<double>(hit) / static_cast<double>(pred.size());
}

// Mean PCKh over alpha = 0.01, 0.02, ..., 0.50.
inline double pckh_auc(const std::vector<Keypoint>& pred, const std::vector<Keypoint>& truth,
                       double head_len) {
    double acc = 0;
    for (int i = 1; i <= 50; ++i) acc += pckh(pred, truth, head_len, 0.01 * i);
    return acc / 50.0;
}

// Mean IoU over the classes that appear in prediction or truth.
inline double miou(const LabelTensor& pred, const LabelTensor& truth, std::int64_t classes) {
    if (classes < 1) throw std::invalid_argument("miou: need at least one class");
    if (!(pred.dims() == truth.dims())) throw std::invalid_argument("miou: dims mismatch");
    if (pred.dims().numel() == 0) throw std::invalid_argument("miou: empty label maps");
    std::vector<std::int64_t> conf(static_cast<std::size_t>(classes * classes), 0);
    for (std::int64_t i = 0; i < pred.dims().numel(); ++i) {
        const std::int64_t p = pred[i], t = truth[i];
        if (p < 0 || p >= classes || t < 0 || t >= classes)
            throw std::invalid_argument("miou: label out of range");
        ++conf[static_cast<std::size_t>(t * classes + p)];
    }
    double acc = 0;
    std::int64_t present = 0;
    for (std::int64_t c = 0; c < classes; ++c) {
        std::int64_t inter = conf[static_cast<std::size_t>(c * classes + c)];
        std::int64_t row = 0, col = 0;
        for (std::int64_t j = 0; j < classes; ++j) {
            row += conf[static_cast<std::size_t>(c * classes + j)];
            col += conf[static_cast<std::size_t>(j * classes + c)];
        }
        const std::int64_t uni = row + col - inter;
        if (uni == 0) continue;
        acc += static_cast<double>(inter) / static_cast<double>(uni);
        ++present;
    }
    return present == 0 ? 0.0 : acc / static_cast<double>(present);
}

// Per-site argmax over class channels; ties to the lowest class index.
template <typename T>
LabelTensor argmax_labels(const Tensor<T>& logits, std::int64_t classes) {
    const Dims& d = logits.dims();
    if (classes < 1 || d.c % classes != 0)
        throw std::invalid_argument("argmax_labels: channels not divisible by classes");
    const std::int64_t blocks = d.c / classes;
    LabelTensor out = LabelTensor::zeros(Dims{d.n, blocks, d.h, d.w});
    for (std::int64_t n = 0; n < d.n; ++n)
        for (std::int64_t b = 0; b < blocks; ++b)
            for (std::int64_t y = 0; y < d.h; ++y)
                for (std::int64_t x = 0; x < d.w; ++x) {
                    std::int64_t arg = 0;
                    T best = logits.at(n, b * classes, y, x);
                    for (std::int64_t c = 1; c < classes; ++c)
                        if (logits.at(n, b * classes + c, y, x) > best) {
                            best = logits.at(n, b * classes + c, y, x);
                            arg = c;
                        }
                    out.at(n, b, y, x) = static_cast<std::int32_t>(arg);
                }
    return out;
}

} // namespace flattenet
