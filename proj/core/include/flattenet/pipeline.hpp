#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "flattenet/flatten_head.hpp"
#include "flattenet/loss.hpp"
#include "flattenet/predictor.hpp"

namespace flattenet {

enum class LossKind { Mse, BlockCe };

// Everything the equivalence checks need from one paired run: both losses, both prediction
// tensors, and both full gradient snapshots taken against the same parameters.
template <typename T>
struct TwoPathResult {
    T loss_a = 0;
    T loss_b = 0;
    Tensor<T> pred_a; // rearrange then per-pixel affine map
    Tensor<T> pred_b; // shared-weight map on the stacked layout, before rearrangement
    std::vector<std::string> param_names;
    std::vector<Tensor<T>> grads_a;
    std::vector<Tensor<T>> grads_b;
};

// rearranges a folded prediction into the affine path's output layout
template <typename T>
Tensor<T> unfold_prediction(const Tensor<T>& pred_b, std::int64_t s2, std::int64_t classes) {
    return rearrange_R(pred_b, RearrangeSpec{s2, classes, RearrangeMode::CsPs, 0});
}

// Runs the deployment formulation (path A: trunk -> R -> affine -> loss against targets) and the
// folded training formulation (path B: trunk -> shared-weight predictor -> loss against folded
// targets) over one shared trunk and predictor. The trunk runs forward once; both paths reuse its
// cached activations, and gradients are snapshotted after each path's backward sweep.
//
// The folded formulation is defined for the default depth-to-space map only; the ablation
// rearrangements have no matching fold, so they are rejected here.
template <typename T>
TwoPathResult<T> run_two_paths(Sequential<T>& trunk, const RearrangeSpec& rspec,
                               PixelPredictor<T>& predictor, const Tensor<T>& x,
                               const Tensor<T>* mse_targets,
                               const Tensor<std::int32_t>* ce_labels, bool train_mode = true) {
    if (rspec.mode != RearrangeMode::CsPs)
        throw std::invalid_argument("two-path run: folded path requires the default rearrangement");
    if ((mse_targets == nullptr) == (ce_labels == nullptr))
        throw std::invalid_argument("two-path run: provide exactly one target kind");

    const std::int64_t s2 = rspec.s2;
    const std::int64_t classes = predictor.spec().classes;
    TwoPathResult<T> res;

    Tensor<T> f = trunk.forward(x, train_mode);
    Tensor<T> ya = rearrange_R(f, rspec);
    res.pred_a = predictor.forward_affine(ya);
    res.pred_b = predictor.forward_folded(f);

    Tensor<T> dpred_a, dpred_b;
    if (mse_targets) {
        LossResult<T> la = mse_loss(res.pred_a, *mse_targets);
        LossResult<T> lb =
            mse_loss(res.pred_b, fold_targets(*mse_targets, 1, s2, FoldKind::Continuous));
        res.loss_a = la.value;
        res.loss_b = lb.value;
        dpred_a = std::move(la.dpred);
        dpred_b = std::move(lb.dpred);
    } else {
        LossResult<T> la = pixel_softmax_ce(res.pred_a, *ce_labels, classes, 1);
        LossResult<T> lb =
            pixel_softmax_ce(res.pred_b, fold_labels(*ce_labels, 1, s2), classes, s2);
        res.loss_a = la.value;
        res.loss_b = lb.value;
        dpred_a = std::move(la.dpred);
        dpred_b = std::move(lb.dpred);
    }

    std::vector<Param<T>*> params = trunk.params();
    {
        auto pp = predictor.params();
        params.insert(params.end(), pp.begin(), pp.end());
    }
    for (Param<T>* p : params) res.param_names.push_back(p->name);

    zero_grads(params);
    trunk.backward(rearrange_R_inv(predictor.backward_affine(dpred_a), rspec));
    for (Param<T>* p : params) res.grads_a.push_back(p->grad);

    zero_grads(params);
    trunk.backward(predictor.backward_folded(dpred_b));
    for (Param<T>* p : params) res.grads_b.push_back(p->grad);

    zero_grads(params);
    return res;
}

} // namespace flattenet
