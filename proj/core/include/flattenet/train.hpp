#pragma once

// End-to-end toy training: a strided backbone, the flattening layers, and the
// shared-weight predictor, trained with Adam on a synthetic task. The model
// keeps the pre-rearrangement stack as one Sequential so training can run
// either through the deployment path (rearrange, then per-pixel prediction)
// or through the folded objective (predict all offsets, fold the targets).
//
// History records are computed on a fixed evaluation batch using batch
// statistics, so they are a pure function of the parameters; with lr=0 the
// history is constant, and identical seeds reproduce every byte.

#include "flattenet/backbone.hpp"
#include "flattenet/checkpoint.hpp"
#include "flattenet/metrics.hpp"
#include "flattenet/optim.hpp"
#include "flattenet/pipeline.hpp"
#include "flattenet/tasks.hpp"

#include <cmath>
#include <memory>
#include <string>

namespace flattenet {

template <typename T>
class ToyModel {
  public:
    ToyModel(const ToyBackboneSpec& backbone, const FlatteningModuleSpec& head,
             std::int64_t classes, Rng& rng)
        : head_(head), trunk_("model") {
        backbone.validate();
        head.validate(backbone.out_channels());
        trunk_.add(make_toy_backbone<T>(backbone, "model.bb", rng));
        std::int64_t c = backbone.out_channels();
        for (std::size_t i = 0; i < head.layers.size(); ++i)
            c = append_dwsg(trunk_, head.layers[i], c, "model.h" + std::to_string(i), rng);
        rspec_ = head.rearrange_spec(backbone.out_channels());
        predictor_ = std::make_unique<PixelPredictor<T>>(
            PredictorSpec{rspec_.c_tilde, classes}, "model.pred", rng,
            PixelPredictor<T>::Mode::Affine, head.s2);
        // image-to-prediction subsampling the geometry works out to
        subsample_ = backbone.subsample() * head.stride_product() / head.s2;
        if (backbone.subsample() * head.stride_product() % head.s2 != 0 || subsample_ < 1)
            throw std::invalid_argument("toy model: head s2 overshoots the backbone stride");
    }

    Tensor<T> forward(const Tensor<T>& images, bool train) {
        return predictor_->forward_affine(rearrange_R(trunk_.forward(images, train), rspec_));
    }

    Sequential<T>& trunk() { return trunk_; }
    PixelPredictor<T>& predictor() { return *predictor_; }
    const RearrangeSpec& rspec() const { return rspec_; }
    std::int64_t subsample() const { return subsample_; }

    std::vector<Param<T>*> params() {
        std::vector<Param<T>*> ps = trunk_.params();
        auto pp = predictor_->params();
        ps.insert(ps.end(), pp.begin(), pp.end());
        return ps;
    }

  private:
    FlatteningModuleSpec head_;
    Sequential<T> trunk_;
    RearrangeSpec rspec_;
    std::unique_ptr<PixelPredictor<T>> predictor_;
    std::int64_t subsample_ = 1;
};

// Head presets sized for the 512-channel toy backbone, named by overall model
// depth counted in strided stages (the backbone contributes five). Each keeps
// c_out / g3 >= g1 so the grouped 1x1 pair stays densely connected, and each
// picks s2 so the image-to-prediction subsampling lands on 4.
inline FlatteningModuleSpec toy_head_spec(int depth) {
    switch (depth) {
        case 5:
            return FlatteningModuleSpec{{DwsgConvSpec{3, 1, 16, 16, 32, 1, true}}, 8,
                                        RearrangeMode::CsPs, 0};
        case 6:
            return FlatteningModuleSpec{{DwsgConvSpec{3, 2, 16, 16, 32, 4, true}}, 16,
                                        RearrangeMode::CsPs, 0};
        case 7:
            return FlatteningModuleSpec{{DwsgConvSpec{3, 2, 16, 16, 32, 4, true},
                                         DwsgConvSpec{3, 2, 32, 32, 64, 4, true}},
                                        32, RearrangeMode::CsPs, 0};
        default:
            throw std::invalid_argument("toy head preset: depth must be 5, 6, or 7");
    }
}

enum class LrPolicy { Constant, Poly };

struct TrainConfig {
    SyntheticTask task;
    ToyBackboneSpec backbone;
    FlatteningModuleSpec head;
    std::int64_t batch = 4;
    std::int64_t eval_batch = 0; // 0: same as batch
    std::int64_t epochs = 20;
    std::int64_t steps_per_epoch = 10;
    double lr = 1e-3;
    LrPolicy lr_policy = LrPolicy::Constant;
    double poly_power = 0.9;
    std::uint64_t seed = 0;
    bool folded = false;        // train through the folded objective
    std::string checkpoint_dir; // empty: no checkpoint
    std::string history_path;   // empty: no history file
};

struct TrainResult {
    std::vector<EpochRecord> history;
    double initial_loss = 0; // fixed eval batch, before the first update
    double final_loss = 0;   // fixed eval batch, after the last update
    double final_metric = 0; // PCKh@0.5 for keypoints, mIoU for segmentation
};

namespace detail {

inline std::vector<Keypoint> centers_as_keypoints(const std::vector<std::int64_t>& centers) {
    std::vector<Keypoint> out;
    out.reserve(centers.size() / 2);
    for (std::size_t i = 0; i + 1 < centers.size(); i += 2)
        out.push_back(Keypoint{static_cast<double>(centers[i]),
                               static_cast<double>(centers[i + 1])});
    return out;
}

} // namespace detail

template <typename T>
TrainResult train_toy(const TrainConfig& cfg) {
    cfg.task.validate();
    if (cfg.batch < 2) throw std::invalid_argument("train: batch must be >= 2 for batch norm");
    if (cfg.epochs < 1 || cfg.steps_per_epoch < 1)
        throw std::invalid_argument("train: epochs and steps_per_epoch must be positive");
    if (cfg.lr < 0) throw std::invalid_argument("train: lr must be non-negative");
    if (cfg.folded && cfg.head.rearrange != RearrangeMode::CsPs)
        throw std::invalid_argument("train: folded objective requires the default rearrangement");

    const bool keypoints = cfg.task.kind == TaskKind::KeypointHeatmap;
    const std::int64_t classes = keypoints ? cfg.task.keypoints : cfg.task.classes;

    Rng root(cfg.seed);
    Rng init_rng = root.fork(1);
    Rng data_rng = root.fork(2);
    Rng eval_rng = root.fork(3);

    ToyModel<T> model(cfg.backbone, cfg.head, classes, init_rng);
    if (model.subsample() != cfg.task.s1)
        throw std::invalid_argument(
            "train: model predicts at 1/" + std::to_string(model.subsample()) +
            " but the task targets live at 1/" + std::to_string(cfg.task.s1));

    const std::int64_t s2 = cfg.head.s2;
    const std::int64_t eval_n = cfg.eval_batch > 0 ? cfg.eval_batch : cfg.batch;
    if (eval_n < 2) throw std::invalid_argument("train: eval_batch must be >= 2 for batch norm");
    KeypointBatch<T> eval_kp;
    SegBatch<T> eval_seg;
    if (keypoints)
        eval_kp = gen_keypoints<T>(cfg.task, eval_n, eval_rng);
    else
        eval_seg = gen_segmentation<T>(cfg.task, eval_n, eval_rng);

    // start the output map at zero: the first steps then shape the descriptor
    // instead of fighting the random output scale
    for (T& v : model.predictor().weight().value.values()) v = T(0);

    std::vector<Param<T>*> params = model.params();
    Adam<T> adam(params);

    // loss and metric on the fixed eval batch; batch statistics, no updates
    const auto evaluate = [&](double* metric) {
        const Tensor<T>& images = keypoints ? eval_kp.images : eval_seg.images;
        Tensor<T> pred = model.forward(images, true);
        double loss;
        if (keypoints) {
            loss = static_cast<double>(mse_loss(pred, eval_kp.heatmaps).value);
            if (metric) {
                const double head_len =
                    static_cast<double>(cfg.task.image_size) / (10.0 * static_cast<double>(cfg.task.s1));
                *metric = pckh(decode_keypoints(pred), detail::centers_as_keypoints(eval_kp.centers),
                               head_len, 0.5);
            }
        } else {
            loss = static_cast<double>(pixel_softmax_ce(pred, eval_seg.labels, classes).value);
            if (metric) *metric = miou(argmax_labels(pred, classes), eval_seg.labels, classes);
        }
        return loss;
    };

    const PolySchedule poly{cfg.lr, cfg.epochs * cfg.steps_per_epoch, cfg.poly_power};
    const auto lr_at = [&](std::int64_t s) {
        return cfg.lr_policy == LrPolicy::Poly ? poly.lr(s) : cfg.lr;
    };

    TrainResult res;
    res.initial_loss = evaluate(nullptr);

    std::int64_t step = 0;
    double last_lr = lr_at(0);
    for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::int64_t it = 0; it < cfg.steps_per_epoch; ++it) {
            Tensor<T> images;
            Tensor<T> heatmaps;
            LabelTensor labels;
            if (keypoints) {
                KeypointBatch<T> b = gen_keypoints<T>(cfg.task, cfg.batch, data_rng);
                images = std::move(b.images);
                heatmaps = std::move(b.heatmaps);
            } else {
                SegBatch<T> b = gen_segmentation<T>(cfg.task, cfg.batch, data_rng);
                images = std::move(b.images);
                labels = std::move(b.labels);
            }

            Tensor<T> f = model.trunk().forward(images, true);
            T loss;
            zero_grads(params);
            if (!cfg.folded) {
                Tensor<T> pred = model.predictor().forward_affine(rearrange_R(f, model.rspec()));
                LossResult<T> l = keypoints ? mse_loss(pred, heatmaps)
                                            : pixel_softmax_ce(pred, labels, classes);
                loss = l.value;
                model.trunk().backward(
                    rearrange_R_inv(model.predictor().backward_affine(l.dpred), model.rspec()));
            } else {
                Tensor<T> pred = model.predictor().forward_folded(f);
                LossResult<T> l =
                    keypoints
                        ? mse_loss(pred, fold_targets(heatmaps, 1, s2, FoldKind::Continuous))
                        : pixel_softmax_ce(pred, fold_labels(labels, 1, s2), classes, s2);
                loss = l.value;
                model.trunk().backward(model.predictor().backward_folded(l.dpred));
            }
            if (!std::isfinite(static_cast<double>(loss)))
                throw std::runtime_error("train: loss became " +
                                         std::to_string(static_cast<double>(loss)) + " at epoch " +
                                         std::to_string(epoch) + " step " + std::to_string(step) +
                                         "; lowering lr usually fixes this");
            last_lr = lr_at(step);
            adam.step(last_lr);
            ++step;
        }

        double metric = 0;
        const double eval_loss = evaluate(&metric);
        res.history.push_back(EpochRecord{step, last_lr, eval_loss, metric});
    }

    res.final_loss = res.history.back().loss;
    res.final_metric = res.history.back().metric;
    if (!cfg.history_path.empty()) write_history_jsonl(cfg.history_path, res.history);
    if (!cfg.checkpoint_dir.empty()) save_checkpoint(cfg.checkpoint_dir, params);
    return res;
}

} // namespace flattenet
