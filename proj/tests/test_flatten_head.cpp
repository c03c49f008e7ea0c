#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "flattenet/config.hpp"
#include "flattenet/flatten_head.hpp"
#include "flattenet/pipeline.hpp"
#include "flattenet/rng.hpp"

using namespace flattenet;

namespace {

Tensor<double> seeded(Dims d, std::uint64_t seed) {
    Tensor<double> t(d);
    Rng rng(seed);
    for (double& v : t.values()) v = rng.uniform(-0.5, 0.5);
    return t;
}

const ModelConfig& preset(const std::string& name) {
    const ModelConfig* cfg = find_builtin(name);
    REQUIRE(cfg != nullptr);
    return *cfg;
}

} // namespace

TEST_CASE("head geometry: 2048x8x8 flattens to a 32-channel 64x64 map") {
    Rng rng(1);
    FlattenHead<double> head(preset("table1").module, 2048, "head", rng);
    Tensor<double> y = head.forward(seeded({1, 2048, 8, 8}, 2), true);
    CHECK(y.dims() == Dims{1, 32, 64, 64});
    CHECK(head.c_tilde() == 32);
}

TEST_CASE("head geometry: two stacked layers keep the upscale factor") {
    Rng rng(3);
    FlattenHead<double> head(preset("table7").module, 2048, "head", rng);
    CHECK(head.out_dims({1, 2048, 15, 15}) == Dims{1, 128, 120, 120});
    CHECK(head.c_tilde() == 128);
}

TEST_CASE("head geometry: strided layers trade feature size against s2") {
    Rng rng(4);
    FlattenHead<double> s6(preset("table11_s6").module, 2048, "s6", rng);
    CHECK(s6.out_dims({1, 2048, 8, 8}) == Dims{1, 32, 64, 64});
    FlattenHead<double> s7(preset("table11_s7").module, 2048, "s7", rng);
    CHECK(s7.out_dims({1, 2048, 8, 8}) == Dims{1, 32, 64, 64});
    CHECK_THROWS_AS(s7.out_dims({1, 2048, 7, 7}), std::invalid_argument);
}

TEST_CASE("an empty head with s2 = 1 is the identity") {
    Rng rng(5);
    FlattenHead<double> head(FlatteningModuleSpec{{}, 1, RearrangeMode::CsPs, 0}, 16, "id", rng);
    Tensor<double> x = seeded({2, 16, 3, 3}, 6);
    CHECK(head.forward(x, true).same_bytes(x));
    CHECK(head.params().empty());
}

TEST_CASE("head validation rejects non-factoring channel counts") {
    Rng rng(7);
    FlatteningModuleSpec bad{{DwsgConvSpec{3, 1, 3, 1, 1, 1, true}}, 2, RearrangeMode::CsPs, 0};
    CHECK_THROWS_AS(FlattenHead<double>(bad, 16, "bad", rng), std::invalid_argument);
    FlatteningModuleSpec odd{{}, 3, RearrangeMode::CsPs, 0}; // 16 % 9 != 0
    CHECK_THROWS_AS(FlattenHead<double>(odd, 16, "odd", rng), std::invalid_argument);
}

TEST_CASE("predictor with identity weights passes descriptors through") {
    Rng rng(8);
    PixelPredictor<double> pred(PredictorSpec{3, 3}, "p", rng);
    for (double& v : pred.weight().value.values()) v = 0.0;
    for (std::int64_t c = 0; c < 3; ++c) pred.weight().value.at(c, c, 0, 0) = 1.0;
    Tensor<double> x = seeded({2, 3, 4, 4}, 9);
    CHECK(pred.forward_affine(x).same_bytes(x));
}

TEST_CASE("predictor with zero weights emits its bias everywhere") {
    Rng rng(10);
    PixelPredictor<double> pred(PredictorSpec{5, 2}, "p", rng);
    for (double& v : pred.weight().value.values()) v = 0.0;
    pred.bias().value.at(0, 0, 0, 0) = 1.25;
    pred.bias().value.at(1, 0, 0, 0) = -3.0;
    Tensor<double> y = pred.forward_affine(seeded({1, 5, 2, 2}, 11));
    for (std::int64_t i = 0; i < 4; ++i) {
        CHECK(y.at(0, 0, i / 2, i % 2) == 1.25);
        CHECK(y.at(0, 1, i / 2, i % 2) == -3.0);
    }
}

TEST_CASE("folded prediction rearranges to the affine prediction bitwise") {
    Rng rng(12);
    const std::int64_t s2 = 4, c_tilde = 3, classes = 5;
    PixelPredictor<double> pred(PredictorSpec{c_tilde, classes}, "p", rng,
                                PixelPredictor<double>::Mode::Affine, s2);
    Tensor<double> f = seeded({2, c_tilde * s2 * s2, 3, 3}, 13);
    RearrangeSpec rspec{s2, c_tilde, RearrangeMode::CsPs, 0};
    Tensor<double> affine = pred.forward_affine(rearrange_R(f, rspec));
    Tensor<double> folded = pred.forward_folded(f);
    CHECK(unfold_prediction(folded, s2, classes).same_bytes(affine));
}

TEST_CASE("average-pool and stride downsampling oracles") {
    Tensor<double> y({1, 1, 2, 2}, {1, 2, 3, 4});
    CHECK(downsample_avg(y, 2).at(0, 0, 0, 0) == doctest::Approx(2.5));
    // stride sampling takes the center of each cell, offset f/2 on both axes
    CHECK(downsample_stride(y, 2).at(0, 0, 0, 0) == 4.0);
    Tensor<double> z({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    CHECK(downsample_stride(z, 3).at(0, 0, 0, 0) == 5.0);
    CHECK(downsample_avg(y, 1).same_bytes(y));
    CHECK_THROWS_AS(downsample_avg(y, 3), std::invalid_argument);
}

TEST_CASE("folding targets at full resolution inverts the rearrangement") {
    Tensor<double> y({1, 1, 2, 2}, {1, 2, 3, 4});
    Tensor<double> folded = fold_targets(y, 1, 2, FoldKind::Continuous);
    CHECK(folded.dims() == Dims{1, 4, 1, 1});
    CHECK(folded.values() == std::vector<double>{1, 2, 3, 4}); // slots row-major within the cell
    CHECK(rearrange_R(folded, RearrangeSpec{2, 1, RearrangeMode::CsPs, 0}).same_bytes(y));
}

TEST_CASE("folding labels keeps the class id of each covered site") {
    LabelTensor labels({1, 1, 4, 4});
    for (std::int64_t i = 0; i < 16; ++i) labels[i] = static_cast<std::int32_t>(i);
    LabelTensor folded = fold_labels(labels, 1, 2);
    CHECK(folded.dims() == Dims{1, 4, 2, 2});
    for (std::int64_t b = 0; b < 4; ++b)
        for (std::int64_t h = 0; h < 2; ++h)
            for (std::int64_t w = 0; w < 2; ++w)
                CHECK(folded.at(0, b, h, w) == labels.at(0, 0, h * 2 + b / 2, w * 2 + b % 2));
}

TEST_CASE("training and deployment formulations agree for every shipped config") {
    // Same trunk, same predictor weights: the folded objective and the rearrange-then-predict
    // objective must price identical losses and identical parameter gradients on both loss kinds.
    for (const ModelConfig& cfg : builtin_configs()) {
        CAPTURE(cfg.name);
        const std::int64_t c_in = 2048;
        const RearrangeSpec rspec = cfg.module.rearrange_spec(c_in);
        const std::int64_t sp = cfg.module.stride_product();

        Rng rng(91);
        Sequential<double> trunk(cfg.name);
        std::int64_t c = c_in;
        for (std::size_t i = 0; i < cfg.module.layers.size(); ++i)
            c = append_dwsg(trunk, cfg.module.layers[i], c, "l" + std::to_string(i), rng);
        PixelPredictor<double> pred(PredictorSpec{rspec.c_tilde, cfg.classes}, "pred", rng,
                                    PixelPredictor<double>::Mode::Affine, rspec.s2);

        Tensor<double> x = seeded({2, c_in, 2 * sp, 2 * sp}, 92);
        Tensor<double> targets = seeded({2, cfg.classes, 2 * rspec.s2, 2 * rspec.s2}, 93);
        Rng lr(94);
        LabelTensor labels({2, 1, 2 * rspec.s2, 2 * rspec.s2});
        for (std::int32_t& v : labels.values())
            v = static_cast<std::int32_t>(lr.below(static_cast<std::uint64_t>(cfg.classes)));

        for (const bool ce : {false, true}) {
            TwoPathResult<double> r = run_two_paths<double>(
                trunk, rspec, pred, x, ce ? nullptr : &targets, ce ? &labels : nullptr);
            CHECK(std::abs(r.loss_a - r.loss_b) <= 1e-12);
            CHECK(unfold_prediction(r.pred_b, rspec.s2, cfg.classes).same_bytes(r.pred_a));
            double gap = 0;
            for (std::size_t i = 0; i < r.grads_a.size(); ++i)
                for (std::int64_t j = 0; j < r.grads_a[i].numel(); ++j)
                    gap = std::max(gap, std::abs(r.grads_a[i][j] - r.grads_b[i][j]));
            CHECK(gap <= 1e-10);
        }
    }
}

TEST_CASE("the two-path runner rejects rearrangements without a folded form") {
    Rng rng(95);
    Sequential<double> trunk("t");
    RearrangeSpec rspec{2, 4, RearrangeMode::PsOnly, 0};
    PixelPredictor<double> pred(PredictorSpec{4, 2}, "p", rng,
                                PixelPredictor<double>::Mode::Affine, 2);
    Tensor<double> x = seeded({2, 16, 2, 2}, 96);
    Tensor<double> targets = seeded({2, 2, 4, 4}, 97);
    CHECK_THROWS_AS(run_two_paths<double>(trunk, rspec, pred, x, &targets, nullptr),
                    std::invalid_argument);
    RearrangeSpec ok{2, 4, RearrangeMode::CsPs, 0};
    CHECK_THROWS_AS(run_two_paths<double>(trunk, ok, pred, x, nullptr, nullptr),
                    std::invalid_argument);
}
