#include "flattenet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

#include "flattenet/backbone.hpp"
#include "flattenet/dwsg.hpp"
#include "flattenet/flatten_head.hpp"
#include "flattenet/loss.hpp"
#include "flattenet/predictor.hpp"
#include "flattenet/resample.hpp"
#include "flattenet/shuffle.hpp"

namespace flattenet {

namespace {

double rel_err(double a, double n) {
    const double denom = std::max({std::abs(a), std::abs(n), 1e-3});
    return std::abs(a - n) / denom;
}

// indices to probe: all of them, or an evenly strided subset
std::vector<std::int64_t> probe_indices(std::int64_t numel, std::int64_t max_coords) {
    std::vector<std::int64_t> idx;
    if (max_coords <= 0 || numel <= max_coords) {
        idx.resize(static_cast<std::size_t>(numel));
        for (std::int64_t i = 0; i < numel; ++i) idx[static_cast<std::size_t>(i)] = i;
    } else {
        idx.reserve(static_cast<std::size_t>(max_coords));
        for (std::int64_t j = 0; j < max_coords; ++j) idx.push_back(j * numel / max_coords);
    }
    return idx;
}

} // namespace

GradCheckReport grad_check_layer(const std::string& op_name, Layer<double>& layer,
                                 Tensor<double>& x, std::uint64_t seed, double eps, double tol,
                                 bool train_mode, std::int64_t max_coords) {
    if (eps < 1e-6 || eps > 1e-3)
        throw std::invalid_argument("grad_check: eps " + std::to_string(eps) +
                                    " outside [1e-6, 1e-3]");

    GradCheckReport rep;
    rep.op = op_name;
    rep.eps = eps;
    rep.tol = tol;

    Tensor<double> out = layer.forward(x, train_mode);
    Rng rng(seed);
    Tensor<double> u = Tensor<double>::uniform(out.dims(), 1.0, rng);

    std::vector<Param<double>*> params = layer.params();
    zero_grads(params);
    (void)layer.forward(x, train_mode);
    Tensor<double> dx = layer.backward(u);

    std::vector<Tensor<double>> param_grads;
    param_grads.reserve(params.size());
    for (Param<double>* p : params) param_grads.push_back(p->grad);

    const auto numeric = [&](Tensor<double>& t, std::int64_t i) {
        const double old = t[i];
        t[i] = old + eps;
        Tensor<double> hi = layer.forward(x, train_mode);
        t[i] = old - eps;
        Tensor<double> lo = layer.forward(x, train_mode);
        t[i] = old;
        double acc = 0.0;
        for (std::int64_t j = 0; j < hi.numel(); ++j) acc += (hi[j] - lo[j]) * u[j];
        return acc / (2.0 * eps);
    };

    const auto probe = [&](Tensor<double>& t, const Tensor<double>& analytic) {
        for (std::int64_t i : probe_indices(t.numel(), max_coords)) {
            rep.max_rel_err = std::max(rep.max_rel_err, rel_err(analytic[i], numeric(t, i)));
            ++rep.coords;
        }
    };

    probe(x, dx);
    for (std::size_t pi = 0; pi < params.size(); ++pi) probe(params[pi]->value, param_grads[pi]);

    rep.pass = rep.max_rel_err <= tol;
    return rep;
}

namespace {

Tensor<double> seeded(Dims d, std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    return Tensor<double>::uniform(d, scale, rng);
}

// push every value at least `margin` away from zero, keeping the sign
Tensor<double> off_kink(Tensor<double> t, double margin) {
    for (std::int64_t i = 0; i < t.numel(); ++i)
        t[i] += t[i] >= 0.0 ? margin : -margin;
    return t;
}

GradCheckReport run_case(const std::string& name, std::unique_ptr<Layer<double>> layer,
                         Tensor<double> x, std::uint64_t seed, double eps = 1e-5,
                         double tol = 1e-4, bool train = true, std::int64_t max_coords = 0) {
    return grad_check_layer(name, *layer, x, seed, eps, tol, train, max_coords);
}

std::unique_ptr<FnLayer> fn_identity() {
    return std::make_unique<FnLayer>(
        "identity", [](const Tensor<double>& x) { return x; },
        [](const Tensor<double>&, const Tensor<double>& dy) { return dy; });
}

// scalar loss as a (1,1,1,1) layer so the same harness covers losses
class MseLossLayer : public Layer<double> {
  public:
    explicit MseLossLayer(Tensor<double> target) : target_(std::move(target)) {}
    std::string name() const override { return "mse_loss"; }

    Tensor<double> forward(const Tensor<double>& x, bool) override {
        res_ = mse_loss(x, target_);
        return Tensor<double>({1, 1, 1, 1}, {res_.value});
    }

    Tensor<double> backward(const Tensor<double>& dy) override {
        Tensor<double> dx = res_.dpred;
        for (std::int64_t i = 0; i < dx.numel(); ++i) dx[i] *= dy[0];
        return dx;
    }

  private:
    Tensor<double> target_;
    LossResult<double> res_;
};

class CeLossLayer : public Layer<double> {
  public:
    CeLossLayer(Tensor<std::int32_t> labels, std::int64_t classes, std::int64_t block)
        : labels_(std::move(labels)), classes_(classes), block_(block) {}
    std::string name() const override { return "pixel_softmax_ce"; }

    Tensor<double> forward(const Tensor<double>& x, bool) override {
        res_ = pixel_softmax_ce(x, labels_, classes_, block_);
        return Tensor<double>({1, 1, 1, 1}, {res_.value});
    }

    Tensor<double> backward(const Tensor<double>& dy) override {
        Tensor<double> dx = res_.dpred;
        for (std::int64_t i = 0; i < dx.numel(); ++i) dx[i] *= dy[0];
        return dx;
    }

  private:
    Tensor<std::int32_t> labels_;
    std::int64_t classes_;
    std::int64_t block_;
    LossResult<double> res_;
};

} // namespace

std::vector<GradCheckCase> standard_gradcheck_cases() {
    std::vector<GradCheckCase> cases;
    const auto add = [&](std::string name, std::function<GradCheckReport()> run) {
        cases.push_back({std::move(name), std::move(run)});
    };

    add("identity", [] {
        // lattice input and power-of-two eps make the central difference exact
        Tensor<double> x({1, 3, 4, 4});
        Rng rng(11);
        for (std::int64_t i = 0; i < x.numel(); ++i)
            x[i] = static_cast<double>(static_cast<std::int64_t>(rng.below(2048)) - 1024) * 0x1.0p-10;
        auto layer = fn_identity();
        return grad_check_layer("identity", *layer, x, 12, 0x1.0p-17);
    });

    add("conv1x1_dense", [] {
        Rng rng(21);
        auto l = std::make_unique<Conv2dLayer<double>>(ConvSpec{4, 6, 1, 1, 1}, "op", rng);
        return run_case("conv1x1_dense", std::move(l), seeded({2, 4, 5, 5}, 22), 23);
    });

    add("conv3x3_dense", [] {
        Rng rng(31);
        auto l = std::make_unique<Conv2dLayer<double>>(ConvSpec{3, 5, 3, 1, 1}, "op", rng);
        return run_case("conv3x3_dense", std::move(l), seeded({1, 3, 6, 6}, 32), 33);
    });

    add("conv3x3_grouped", [] {
        Rng rng(41);
        auto l = std::make_unique<Conv2dLayer<double>>(ConvSpec{4, 8, 3, 1, 2}, "op", rng);
        return run_case("conv3x3_grouped", std::move(l), seeded({2, 4, 5, 5}, 42), 43);
    });

    add("conv3x3_depthwise", [] {
        Rng rng(51);
        auto l = std::make_unique<Conv2dLayer<double>>(ConvSpec{4, 4, 3, 1, 4}, "op", rng);
        return run_case("conv3x3_depthwise", std::move(l), seeded({1, 4, 6, 6}, 52), 53);
    });

    add("conv3x3_stride2", [] {
        Rng rng(61);
        auto l = std::make_unique<Conv2dLayer<double>>(ConvSpec{3, 6, 3, 2, 1}, "op", rng);
        return run_case("conv3x3_stride2", std::move(l), seeded({2, 3, 7, 7}, 62), 63);
    });

    add("conv5x5_depthwise_stride2", [] {
        Rng rng(71);
        auto l = std::make_unique<Conv2dLayer<double>>(ConvSpec{4, 4, 5, 2, 4}, "op", rng);
        return run_case("conv5x5_depthwise_stride2", std::move(l), seeded({1, 4, 8, 8}, 72), 73);
    });

    add("conv1x1_bias", [] {
        Rng rng(81);
        ConvSpec spec{3, 5, 1, 1, 1};
        spec.bias = true;
        auto l = std::make_unique<Conv2dLayer<double>>(spec, "op", rng);
        return run_case("conv1x1_bias", std::move(l), seeded({2, 3, 4, 4}, 82), 83);
    });

    add("batchnorm_train", [] {
        auto l = std::make_unique<BatchNormLayer<double>>(5, "op");
        return run_case("batchnorm_train", std::move(l), seeded({3, 5, 4, 4}, 92), 93, 1e-5, 1e-4,
                        true);
    });

    add("batchnorm_eval", [] {
        auto l = std::make_unique<BatchNormLayer<double>>(4, "op");
        Rng rng(101);
        for (auto& m : l->running_mean()) m = rng.uniform(-1.0, 1.0);
        for (auto& v : l->running_var()) v = rng.uniform(0.5, 2.0);
        return run_case("batchnorm_eval", std::move(l), seeded({2, 4, 3, 3}, 102), 103, 1e-5, 1e-4,
                        false);
    });

    add("relu", [] {
        auto l = std::make_unique<ReluLayer<double>>("op");
        return run_case("relu", std::move(l), off_kink(seeded({2, 3, 5, 5}, 112), 0.05), 113);
    });

    add("prelu", [] {
        auto l = std::make_unique<PreluLayer<double>>(3, "op", 0.25);
        // inputs bounded away from the kink by much more than 10*eps; tighter tolerance applies
        return run_case("prelu", std::move(l), off_kink(seeded({2, 3, 5, 5}, 122), 0.05), 123,
                        1e-5, 1e-6);
    });

    add("bilinear_x2", [] {
        auto l = std::make_unique<FnLayer>(
            "bilinear_x2", [](const Tensor<double>& x) { return bilinear_upsample(x, 2); },
            [](const Tensor<double>& x, const Tensor<double>& dy) {
                return bilinear_upsample_backward(dy, 2, x.dims());
            });
        return run_case("bilinear_x2", std::move(l), seeded({1, 3, 4, 5}, 132), 133);
    });

    add("bilinear_x3", [] {
        auto l = std::make_unique<FnLayer>(
            "bilinear_x3", [](const Tensor<double>& x) { return bilinear_upsample(x, 3); },
            [](const Tensor<double>& x, const Tensor<double>& dy) {
                return bilinear_upsample_backward(dy, 3, x.dims());
            });
        return run_case("bilinear_x3", std::move(l), seeded({2, 2, 3, 4}, 142), 143);
    });

    add("pixel_shuffle", [] {
        auto l = std::make_unique<FnLayer>(
            "pixel_shuffle", [](const Tensor<double>& x) { return pixel_shuffle(x, 2); },
            [](const Tensor<double>&, const Tensor<double>& dy) {
                return pixel_unshuffle(dy, 2);
            });
        return run_case("pixel_shuffle", std::move(l), seeded({1, 8, 3, 3}, 152), 153);
    });

    add("pixel_unshuffle", [] {
        auto l = std::make_unique<FnLayer>(
            "pixel_unshuffle", [](const Tensor<double>& x) { return pixel_unshuffle(x, 2); },
            [](const Tensor<double>&, const Tensor<double>& dy) {
                return pixel_shuffle(dy, 2);
            });
        return run_case("pixel_unshuffle", std::move(l), seeded({1, 2, 6, 6}, 162), 163);
    });

    add("channel_shuffle", [] {
        auto l = std::make_unique<ChannelShuffleLayer<double>>(4, "op");
        return run_case("channel_shuffle", std::move(l), seeded({2, 8, 3, 3}, 172), 173);
    });

    add("rearrange_cs_ps", [] {
        auto l = std::make_unique<RearrangeLayer<double>>(
            RearrangeSpec{2, 3, RearrangeMode::CsPs, 0}, "op");
        return run_case("rearrange_cs_ps", std::move(l), seeded({2, 12, 3, 3}, 182), 183);
    });

    add("rearrange_ps_only", [] {
        auto l = std::make_unique<RearrangeLayer<double>>(
            RearrangeSpec{2, 3, RearrangeMode::PsOnly, 0}, "op");
        return run_case("rearrange_ps_only", std::move(l), seeded({2, 12, 3, 3}, 192), 193);
    });

    add("rearrange_randperm", [] {
        auto l = std::make_unique<RearrangeLayer<double>>(
            RearrangeSpec{2, 3, RearrangeMode::RandPermPs, 9}, "op");
        return run_case("rearrange_randperm", std::move(l), seeded({2, 12, 3, 3}, 202), 203);
    });

    add("predictor_affine", [] {
        Rng rng(211);
        auto l = std::make_unique<PixelPredictor<double>>(PredictorSpec{6, 4}, "op", rng,
                                                          PixelPredictor<double>::Mode::Affine);
        return run_case("predictor_affine", std::move(l), seeded({2, 6, 4, 4}, 212), 213);
    });

    add("predictor_folded", [] {
        Rng rng(221);
        auto l = std::make_unique<PixelPredictor<double>>(PredictorSpec{3, 2}, "op", rng,
                                                          PixelPredictor<double>::Mode::Folded, 2);
        return run_case("predictor_folded", std::move(l), seeded({1, 12, 3, 3}, 222), 223);
    });

    add("dwsg_layer", [] {
        Rng rng(231);
        auto seq = std::make_unique<Sequential<double>>("op");
        DwsgConvSpec spec{3, 1, 2, 2, 4, 2, true};
        append_dwsg(*seq, spec, 8, "op", rng);
        return run_case("dwsg_layer", std::move(seq), seeded({2, 8, 4, 4}, 232), 233, 1e-5, 1e-4,
                        true, 96);
    });

    add("flatten_head", [] {
        Rng rng(241);
        FlatteningModuleSpec spec;
        spec.layers = {DwsgConvSpec{3, 1, 2, 2, 2, 2, false}};
        spec.s2 = 2;
        auto l = std::make_unique<FlattenHead<double>>(spec, 8, "op", rng);
        return run_case("flatten_head", std::move(l), seeded({1, 8, 4, 4}, 242), 243, 1e-5, 1e-4,
                        true, 96);
    });

    add("toy_backbone_stage", [] {
        Rng rng(251);
        ToyBackboneSpec spec;
        spec.widths = {6};
        spec.c_in = 3;
        auto l = make_toy_backbone<double>(spec, "op", rng);
        return run_case("toy_backbone_stage", std::move(l), seeded({2, 3, 6, 6}, 252), 253);
    });

    add("mse_loss", [] {
        auto l = std::make_unique<MseLossLayer>(seeded({2, 3, 4, 4}, 261));
        return run_case("mse_loss", std::move(l), seeded({2, 3, 4, 4}, 262), 263);
    });

    add("pixel_softmax_ce", [] {
        Tensor<std::int32_t> labels({2, 4, 3, 3});
        Rng rng(271);
        for (std::int64_t i = 0; i < labels.numel(); ++i)
            labels[i] = static_cast<std::int32_t>(rng.below(3));
        auto l = std::make_unique<CeLossLayer>(std::move(labels), 3, 2);
        return run_case("pixel_softmax_ce", std::move(l), seeded({2, 12, 3, 3}, 272), 273);
    });

    return cases;
}

} // namespace flattenet
