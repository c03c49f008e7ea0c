#pragma once

// Synthetic dense-prediction tasks. Keypoint images carry K bright blobs on
// low-amplitude noise with Gaussian heatmap targets at 1/s1 resolution;
// segmentation images carry colored rectangles and disks with integer label
// maps. Everything is a pure function of the task spec and the Rng, so a
// seed pins batches bytewise.

#include "flattenet/rng.hpp"
#include "flattenet/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace flattenet {

enum class TaskKind { KeypointHeatmap, ShapeSegmentation };

struct SyntheticTask {
    TaskKind kind = TaskKind::KeypointHeatmap;
    std::int64_t image_size = 64;
    std::int64_t keypoints = 4; // K, keypoint kind
    std::int64_t classes = 4;   // C including background, segmentation kind
    double sigma = 1.5;         // heatmap Gaussian width in heatmap pixels
    std::int64_t s1 = 4;        // image-to-target subsampling

    std::int64_t heatmap_size() const { return image_size / s1; }

    void validate() const {
        if (image_size < 1 || s1 < 1 || image_size % s1 != 0)
            throw std::invalid_argument("task: s1 must divide image_size");
        if (heatmap_size() < 3)
            throw std::invalid_argument("task: target grid must be at least 3x3");
        if (kind == TaskKind::KeypointHeatmap && keypoints < 1)
            throw std::invalid_argument("task: need at least one keypoint");
        if (kind == TaskKind::ShapeSegmentation && classes < 2)
            throw std::invalid_argument("task: need background plus one class");
        if (sigma < 0) throw std::invalid_argument("task: sigma must be non-negative");
    }
};

template <typename T>
struct KeypointBatch {
    Tensor<T> images;                  // (n, 3, H, W)
    Tensor<T> heatmaps;                // (n, K, H/s1, W/s1), peak exactly 1
    std::vector<std::int64_t> centers; // (row, col) per keypoint, heatmap grid
};

template <typename T>
struct SegBatch {
    Tensor<T> images;   // (n, 3, H, W)
    LabelTensor labels; // (n, 1, H/s1, W/s1), values in [0, classes)
};

namespace detail {

// Additive Gaussian blob, peak `peak` at (cy, cx), clipped to the map.
template <typename T>
void splat_blob(Tensor<T>& t, std::int64_t n, std::int64_t c, double cy, double cx,
                double sigma, double peak) {
    const double reach = 3.0 * sigma + 1.0;
    const std::int64_t y0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(cy - reach));
    const std::int64_t y1 = std::min(t.dims().h - 1, static_cast<std::int64_t>(cy + reach));
    const std::int64_t x0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(cx - reach));
    const std::int64_t x1 = std::min(t.dims().w - 1, static_cast<std::int64_t>(cx + reach));
    const double inv = 1.0 / (2.0 * sigma * sigma);
    for (std::int64_t y = y0; y <= y1; ++y)
        for (std::int64_t x = x0; x <= x1; ++x) {
            const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
            t.at(n, c, y, x) += static_cast<T>(peak * std::exp(-d2 * inv));
        }
}

// Evenly spaced RGB signature for index k of total; keeps every keypoint or
// class visually distinct so the tasks stay identifiable for any count.
inline void wheel_color(std::int64_t k, std::int64_t total, double color[3]) {
    for (int ch = 0; ch < 3; ++ch) {
        const double phase = 2.0 * 3.14159265358979323846 *
                             (static_cast<double>(k) / static_cast<double>(total) - ch / 3.0);
        color[ch] = 0.5 * (1.0 + std::cos(phase));
    }
}

} // namespace detail

template <typename T>
KeypointBatch<T> gen_keypoints(const SyntheticTask& task, std::int64_t n, Rng& rng) {
    task.validate();
    if (task.kind != TaskKind::KeypointHeatmap)
        throw std::invalid_argument("gen_keypoints: wrong task kind");
    const std::int64_t hm = task.heatmap_size();
    const std::int64_t K = task.keypoints;
    KeypointBatch<T> batch{Tensor<T>::zeros(Dims{n, 3, task.image_size, task.image_size}),
                           Tensor<T>::zeros(Dims{n, K, hm, hm}),
                           {}};
    batch.centers.reserve(static_cast<std::size_t>(2 * n * K));

    for (std::int64_t i = 0; i < batch.images.dims().numel(); ++i)
        batch.images[i] = static_cast<T>(0.1 * rng.uniform());

    const double blob_sigma = 1.5 * static_cast<double>(task.s1);
    for (std::int64_t b = 0; b < n; ++b)
        for (std::int64_t k = 0; k < K; ++k) {
            // keep a one-cell margin so heatmap peaks sit strictly inside
            const std::int64_t cy = 1 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(hm - 2)));
            const std::int64_t cx = 1 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(hm - 2)));
            batch.centers.push_back(cy);
            batch.centers.push_back(cx);

            const double iy = static_cast<double>(cy * task.s1) + 0.5 * task.s1;
            const double ix = static_cast<double>(cx * task.s1) + 0.5 * task.s1;
            double color[3];
            detail::wheel_color(k, K, color);
            for (int ch = 0; ch < 3; ++ch)
                if (color[ch] > 1e-12)
                    detail::splat_blob(batch.images, b, ch, iy, ix, blob_sigma, color[ch]);

            if (task.sigma == 0) {
                batch.heatmaps.at(b, k, cy, cx) = T(1);
            } else {
                const double inv = 1.0 / (2.0 * task.sigma * task.sigma);
                for (std::int64_t y = 0; y < hm; ++y)
                    for (std::int64_t x = 0; x < hm; ++x) {
                        const double d2 = static_cast<double>((y - cy) * (y - cy) + (x - cx) * (x - cx));
                        batch.heatmaps.at(b, k, y, x) = static_cast<T>(std::exp(-d2 * inv));
                    }
            }
        }
    return batch;
}

template <typename T>
SegBatch<T> gen_segmentation(const SyntheticTask& task, std::int64_t n, Rng& rng) {
    task.validate();
    if (task.kind != TaskKind::ShapeSegmentation)
        throw std::invalid_argument("gen_segmentation: wrong task kind");
    const std::int64_t hm = task.heatmap_size();
    SegBatch<T> batch{Tensor<T>::zeros(Dims{n, 3, task.image_size, task.image_size}),
                      LabelTensor::zeros(Dims{n, 1, hm, hm})};

    for (std::int64_t i = 0; i < batch.images.dims().numel(); ++i)
        batch.images[i] = static_cast<T>(0.1 * rng.uniform());

    const std::int64_t shapes_per_image = 3;
    for (std::int64_t b = 0; b < n; ++b)
        for (std::int64_t s = 0; s < shapes_per_image; ++s) {
            const auto cls = 1 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(task.classes - 1)));
            double color[3];
            detail::wheel_color(cls, task.classes, color);
            const bool disk = rng.below(2) == 1;
            // geometry chosen on the label grid, then scaled up to the image
            const std::int64_t side = 2 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(hm / 2 - 1)));
            const std::int64_t top = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(hm - side + 1)));
            const std::int64_t left = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(hm - side + 1)));
            const double cy = top + 0.5 * side, cx = left + 0.5 * side, r = 0.5 * side;

            for (std::int64_t y = top; y < top + side; ++y)
                for (std::int64_t x = left; x < left + side; ++x) {
                    if (disk) {
                        const double d2 = (y + 0.5 - cy) * (y + 0.5 - cy) + (x + 0.5 - cx) * (x + 0.5 - cx);
                        if (d2 > r * r) continue;
                    }
                    batch.labels.at(b, 0, y, x) = static_cast<std::int32_t>(cls);
                    for (int ch = 0; ch < 3; ++ch)
                        for (std::int64_t yy = y * task.s1; yy < (y + 1) * task.s1; ++yy)
                            for (std::int64_t xx = x * task.s1; xx < (x + 1) * task.s1; ++xx)
                                batch.images.at(b, ch, yy, xx) = static_cast<T>(color[ch]);
                }
        }
    return batch;
}

} // namespace flattenet
