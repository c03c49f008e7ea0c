#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "flattenet/complexity.hpp"
#include "flattenet/config.hpp"
#include "flattenet/rng.hpp"

using namespace flattenet;

namespace {

const FlatteningModuleSpec& preset_module(const std::string& name) {
    const ModelConfig* cfg = find_builtin(name);
    REQUIRE(cfg != nullptr);
    return cfg->module;
}

// ground truth for the analytic counter: build the layers for real and count elements
std::int64_t instantiated_params(const FlatteningModuleSpec& spec, std::int64_t c_in) {
    Rng rng(1);
    FlattenHead<double> head(spec, c_in, "h", rng);
    std::int64_t total = 0;
    for (const Param<double>* p : head.params()) total += p->value.numel();
    return total;
}

bool within_hundredth_of_a_million(std::int64_t params, double claim_m) {
    return std::abs(static_cast<double>(params) / 1e6 - claim_m) <= 0.01;
}

} // namespace

TEST_CASE("single-layer head on 2048 channels costs 0.23M parameters") {
    ArchDescriptor d = head_descriptor(preset_module("table1"), 2048, {1, 2048, 8, 8});
    ComplexityReport rep = analyze(d);
    CHECK(rep.total_params == 229376);
    CHECK(rep.total_macs == 13762560);
    CHECK(rep.total_params == instantiated_params(preset_module("table1"), 2048));
    CHECK(within_hundredth_of_a_million(rep.total_params, 0.23));
}

TEST_CASE("the relu variant drops only the slope parameters") {
    FlatteningModuleSpec relu = preset_module("table1");
    relu.layers[0].prelu = false;
    ComplexityReport rep = analyze(head_descriptor(relu, 2048, {1, 2048, 8, 8}));
    CHECK(rep.total_params == 229376 - 2048);
    CHECK(rep.total_params == instantiated_params(relu, 2048));
    CHECK(within_hundredth_of_a_million(rep.total_params, 0.23));
}

TEST_CASE("an eightfold channel expansion costs 0.71M parameters") {
    FlatteningModuleSpec wide = preset_module("table1");
    wide.layers[0].expand = 8;
    wide.s2 = 8; // c_tilde grows with the expansion; s2 geometry is unchanged
    ComplexityReport rep = analyze(head_descriptor(wide, 2048, {1, 2048, 8, 8}));
    CHECK(rep.total_params == 716800);
    CHECK(rep.total_params == instantiated_params(wide, 2048));
    CHECK(within_hundredth_of_a_million(rep.total_params, 0.71));
}

TEST_CASE("baseline: a regular 1x1 conv with batch norm costs 4.19M parameters") {
    ArchDescriptor d{"conv1x1-baseline", {1, 2048, 8, 8}, {}};
    d.layers.push_back({ArchLayer::Kind::Conv, "conv", 2048, 2048, 1, 1, 1, false, 8, 8});
    d.layers.push_back({ArchLayer::Kind::BatchNorm, "bn", 2048, 2048, 1, 1, 1, false, 8, 8});
    ComplexityReport rep = analyze(d);
    CHECK(rep.total_params == 2048 * 2048 + 2 * 2048);
    CHECK(rep.total_params == 4198400);
    CHECK(within_hundredth_of_a_million(rep.total_params, 4.19));
}

TEST_CASE("baseline: a dense 3x3 conv producing the stacked descriptor costs ~75.5M") {
    // 64 descriptor channels for an 8x8 grid means 4096 output channels
    ArchDescriptor d{"conv3x3-baseline", {1, 2048, 8, 8}, {}};
    d.layers.push_back({ArchLayer::Kind::Conv, "conv", 2048, 4096, 3, 1, 1, false, 8, 8});
    ComplexityReport rep = analyze(d);
    CHECK(rep.total_params == 75497472);
    CHECK(within_hundredth_of_a_million(rep.total_params, 75.50));
}

TEST_CASE("two stacked wide layers cost 1.40M parameters") {
    ArchDescriptor d = head_descriptor(preset_module("table7"), 2048, {1, 2048, 15, 15});
    ComplexityReport rep = analyze(d);
    CHECK(rep.total_params == 1404928);
    CHECK(rep.total_params == instantiated_params(preset_module("table7"), 2048));
    CHECK(within_hundredth_of_a_million(rep.total_params, 1.40));
}

TEST_CASE("analytic counts match instantiated tensors for every preset") {
    for (const ModelConfig& cfg : builtin_configs()) {
        CAPTURE(cfg.name);
        const std::int64_t sp = cfg.module.stride_product();
        ArchDescriptor d =
            head_descriptor(cfg.module, 2048, {1, 2048, 2 * sp, 2 * sp}, cfg.name);
        CHECK(analyze(d).total_params == instantiated_params(cfg.module, 2048));
    }
}

TEST_CASE("head MACs follow conv arithmetic at the working resolution") {
    // dw 2048*9*64, grouped 1x1 2048*(2048/32)*64, expand 1x1 2048*(2048/64)*64
    ComplexityReport rep =
        analyze(head_descriptor(preset_module("table1"), 2048, {1, 2048, 8, 8}));
    CHECK(rep.total_macs == 1179648 + 8388608 + 4194304);
}

TEST_CASE("residual backbone descriptors carry the frozen totals") {
    ComplexityReport r50 = analyze(resnet50_descriptor({1, 3, 256, 256}));
    CHECK(r50.total_params == 23508032);
    CHECK(r50.total_macs == 5338300416);

    ComplexityReport r101 = analyze(resnet101_descriptor({1, 3, 256, 256}));
    CHECK(r101.total_params == 42500160);

    // parameter counts do not depend on the input resolution, MACs do
    CHECK(analyze(resnet50_descriptor({1, 3, 512, 512})).total_params == 23508032);
    CHECK(analyze(resnet50_descriptor({1, 3, 512, 512})).total_macs == 4 * 5338300416);
}

TEST_CASE("full model total sits within one percent of 23.77M parameters") {
    ArchDescriptor backbone = resnet50_descriptor({1, 3, 256, 256});
    const ArchLayer& bl = backbone.layers.back();
    ArchDescriptor head = head_descriptor(preset_module("table1"), bl.c_out,
                                          {1, bl.c_out, bl.h_out, bl.w_out});
    const ArchLayer& hl = head.layers.back();
    ArchDescriptor pred = predictor_descriptor(PredictorSpec{hl.c_out, 16},
                                               {1, hl.c_out, hl.h_out, hl.w_out});
    ComplexityReport rep = analyze(chain_descriptors("full", {backbone, head, pred}));
    CHECK(rep.total_params == 23737936);
    CHECK(std::abs(static_cast<double>(rep.total_params) / 1e6 - 23.77) / 23.77 <= 0.01);

    // multiply-adds at 256x256 land inside the +-10% band around the published 4.99G
    const double gmacs = static_cast<double>(rep.total_macs) / 1e9;
    CHECK(gmacs >= 4.99 * 0.9);
    CHECK(gmacs <= 4.99 * 1.1);
}

TEST_CASE("predictor descriptor counts the shared affine map") {
    ComplexityReport rep = analyze(predictor_descriptor(PredictorSpec{32, 16}, {1, 32, 64, 64}));
    CHECK(rep.total_params == 32 * 16 + 16);
    CHECK(rep.total_macs == 32 * 16 * 64 * 64);
}

TEST_CASE("toy backbone descriptor matches its instantiated parameters") {
    ToyBackboneSpec spec;
    ArchDescriptor d = toy_backbone_descriptor(spec, {1, 3, 64, 64});
    Rng rng(2);
    Sequential<double> seq("bb");
    seq.add(make_toy_backbone<double>(spec, "bb", rng));
    std::int64_t total = 0;
    for (const Param<double>* p : seq.params()) total += p->value.numel();
    CHECK(analyze(d).total_params == total);
    const ArchLayer& last = d.layers.back();
    CHECK(last.c_out == 512);
    CHECK(last.h_out == 2); // five stride-2 stages from 64
}

TEST_CASE("chaining validates the seams") {
    ArchDescriptor a = resnet50_descriptor({1, 3, 256, 256});
    ArchDescriptor b = head_descriptor(preset_module("table1"), 2048, {1, 2048, 7, 7});
    CHECK_THROWS_AS(chain_descriptors("bad", {a, b}), std::invalid_argument);
}

TEST_CASE("reports carry the counting convention and serialize") {
    ComplexityReport rep =
        analyze(head_descriptor(preset_module("table1"), 2048, {1, 2048, 8, 8}));
    CHECK(report_text(rep).find("MACs: conv multiply-adds only") != std::string::npos);
    CHECK(report_json(rep).find("\"total_params\": 229376") != std::string::npos);

    ComplexityReport empty = analyze(ArchDescriptor{"empty", {1, 1, 1, 1}, {}});
    CHECK(empty.total_params == 0);
    CHECK(empty.total_macs == 0);
}
