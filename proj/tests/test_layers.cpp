#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "flattenet/activation.hpp"
#include "flattenet/batchnorm.hpp"
#include "flattenet/conv.hpp"
#include "flattenet/gradcheck.hpp"
#include "flattenet/layer.hpp"
#include "flattenet/loss.hpp"
#include "flattenet/predictor.hpp"
#include "flattenet/resample.hpp"
#include "flattenet/rng.hpp"
#include "flattenet/shuffle.hpp"

using namespace flattenet;

namespace {

Tensor<double> seeded(Dims d, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    Tensor<double> t(d);
    Rng rng(seed);
    for (double& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

} // namespace

TEST_CASE("1x1 conv with identity weights is the identity") {
    Tensor<double> x = seeded({2, 3, 4, 5}, 11);
    ConvSpec spec{3, 3, 1, 1, 1, -1, false};
    Tensor<double> w(spec.weight_dims());
    for (std::int64_t c = 0; c < 3; ++c) w.at(c, c, 0, 0) = 1.0;
    CHECK(conv2d_forward(x, spec, w).same_bytes(x));
}

TEST_CASE("all-ones depthwise 3x3 counts the live neighborhood under zero padding") {
    ConvSpec spec{1, 1, 3, 1, 1, -1, false};
    Tensor<double> x = Tensor<double>::ones({1, 1, 3, 3});
    Tensor<double> y = conv2d_forward(x, spec, Tensor<double>::ones(spec.weight_dims()));
    CHECK(y.at(0, 0, 1, 1) == 9.0);
    CHECK(y.at(0, 0, 0, 0) == 4.0); // corner: 2x2 window inside the image
    CHECK(y.at(0, 0, 0, 1) == 6.0); // edge: 2x3 window
}

TEST_CASE("grouped conv equals a dense conv with block-diagonal weights") {
    const std::int64_t c_in = 4, c_out = 6, g = 2;
    Tensor<double> x = seeded({2, c_in, 5, 5}, 12);
    ConvSpec grouped{c_in, c_out, 3, 1, g, -1, false};
    Tensor<double> wg = seeded(grouped.weight_dims(), 13);

    ConvSpec dense{c_in, c_out, 3, 1, 1, -1, false};
    Tensor<double> wd(dense.weight_dims()); // zeros off the diagonal blocks
    const std::int64_t cpg_in = c_in / g, cpg_out = c_out / g;
    for (std::int64_t o = 0; o < c_out; ++o)
        for (std::int64_t i = 0; i < cpg_in; ++i)
            for (std::int64_t kh = 0; kh < 3; ++kh)
                for (std::int64_t kw = 0; kw < 3; ++kw)
                    wd.at(o, (o / cpg_out) * cpg_in + i, kh, kw) = wg.at(o, i, kh, kw);

    CHECK(conv2d_forward(x, grouped, wg).same_bytes(conv2d_forward(x, dense, wd)));
}

TEST_CASE("conv output geometry follows floor((in + 2p - k) / s) + 1") {
    ConvSpec spec{8, 16, 3, 2, 1, -1, false};
    Dims out = spec.out_dims({1, 8, 15, 15});
    CHECK(out.h == 8);
    CHECK(out.w == 8);
    ConvSpec seven{3, 64, 7, 2, 1, 3, false};
    CHECK(seven.out_dims({1, 3, 256, 256}).h == 128);
}

TEST_CASE("conv bias adds per output channel") {
    ConvSpec spec{2, 2, 1, 1, 1, -1, true};
    Tensor<double> x = Tensor<double>::zeros({1, 2, 2, 2});
    Tensor<double> w(spec.weight_dims());
    Tensor<double> b({1, 2, 1, 1}, {0.5, -1.5});
    Tensor<double> y = conv2d_forward(x, spec, w, &b);
    CHECK(y.at(0, 0, 1, 1) == 0.5);
    CHECK(y.at(0, 1, 0, 0) == -1.5);
}

TEST_CASE("batch norm maps constant channels to beta") {
    Tensor<double> x = Tensor<double>::full({2, 2, 2, 2}, 3.25);
    Tensor<double> gamma = Tensor<double>::full({1, 2, 1, 1}, 2.0);
    Tensor<double> beta({1, 2, 1, 1}, {0.75, -4.0});
    Tensor<double> y = bn_forward_train(x, gamma, beta, 1e-5);
    for (std::int64_t n = 0; n < 2; ++n)
        for (std::int64_t i = 0; i < 4; ++i) {
            CHECK(y.at(n, 0, i / 2, i % 2) == doctest::Approx(0.75).epsilon(1e-12));
            CHECK(y.at(n, 1, i / 2, i % 2) == doctest::Approx(-4.0).epsilon(1e-12));
        }
}

TEST_CASE("batch statistics oracle on a hand block") {
    // one channel holding {1,2,3,4}: mean 2.5, biased variance 1.25
    Tensor<double> x({4, 1, 1, 1}, {1, 2, 3, 4});
    BnStats<double> st = bn_batch_stats(x);
    CHECK(st.mean[0] == doctest::Approx(2.5));
    CHECK(st.var[0] == doctest::Approx(1.25));

    Tensor<double> gamma = Tensor<double>::full({1, 1, 1, 1}, 2.0);
    Tensor<double> beta = Tensor<double>::full({1, 1, 1, 1}, 1.0);
    const double eps = 1e-5;
    Tensor<double> y = bn_forward_train(x, gamma, beta, eps);
    CHECK(y.at(0, 0, 0, 0) == doctest::Approx(1.0 + 2.0 * (1.0 - 2.5) / std::sqrt(1.25 + eps)));
    CHECK(y.at(3, 0, 0, 0) == doctest::Approx(1.0 + 2.0 * (4.0 - 2.5) / std::sqrt(1.25 + eps)));
}

TEST_CASE("batch norm layer tracks running statistics with the unbiased variance") {
    BatchNormLayer<double> bn(1, "bn");
    Tensor<double> x({4, 1, 1, 1}, {1, 2, 3, 4});
    bn.forward(x, true);
    // momentum 0.1 from running (0, 1): mean 0.9*0 + 0.1*2.5, var 0.9*1 + 0.1*(4/3)*1.25
    CHECK(bn.running_mean()[0] == doctest::Approx(0.25));
    CHECK(bn.running_var()[0] == doctest::Approx(0.9 + 0.1 * 1.25 * 4.0 / 3.0));
}

TEST_CASE("eval-mode batch norm applies the frozen statistics") {
    Tensor<double> x({1, 1, 1, 2}, {3.0, 7.0});
    Tensor<double> gamma = Tensor<double>::full({1, 1, 1, 1}, 1.5);
    Tensor<double> beta = Tensor<double>::full({1, 1, 1, 1}, -1.0);
    const double eps = 1e-5;
    Tensor<double> y = bn_forward_eval(x, gamma, beta, {5.0}, {4.0}, eps);
    CHECK(y.at(0, 0, 0, 0) == doctest::Approx(-1.0 + 1.5 * (3.0 - 5.0) / std::sqrt(4.0 + eps)));
    CHECK(y.at(0, 0, 0, 1) == doctest::Approx(-1.0 + 1.5 * (7.0 - 5.0) / std::sqrt(4.0 + eps)));
}

TEST_CASE("train-mode batch norm rejects a single sample point") {
    Tensor<double> x({1, 3, 1, 1});
    CHECK_THROWS_AS(bn_batch_stats(x), std::invalid_argument);
}

TEST_CASE("prelu slope endpoints: identity at 1, relu at 0, leak at 0.25") {
    Tensor<double> x({1, 1, 1, 3}, {-4.0, 0.0, 2.0});
    Tensor<double> one = Tensor<double>::ones({1, 1, 1, 1});
    CHECK(prelu_forward(x, one).same_bytes(x));

    Tensor<double> zero = Tensor<double>::zeros({1, 1, 1, 1});
    CHECK(prelu_forward(x, zero).same_bytes(relu_forward(x)));

    Tensor<double> quarter = Tensor<double>::full({1, 1, 1, 1}, 0.25);
    Tensor<double> y = prelu_forward(x, quarter);
    CHECK(y.at(0, 0, 0, 0) == -1.0);
    CHECK(y.at(0, 0, 0, 2) == 2.0);
}

TEST_CASE("bilinear x2 upsample of a 2x2 ramp, half-pixel alignment") {
    Tensor<double> x({1, 1, 2, 2}, {0, 1, 2, 3});
    Tensor<double> y = bilinear_upsample(x, 2);
    const double want[4][4] = {{0, 0.25, 0.75, 1},
                               {0.5, 0.75, 1.25, 1.5},
                               {1.5, 1.75, 2.25, 2.5},
                               {2, 2.25, 2.75, 3}};
    for (std::int64_t i = 0; i < 4; ++i)
        for (std::int64_t j = 0; j < 4; ++j)
            CHECK(y.at(0, 0, i, j) == doctest::Approx(want[i][j]));
}

TEST_CASE("mse loss value and gradient oracle") {
    Tensor<double> p({1, 1, 2, 2}, {1, 0, 1, 3});
    Tensor<double> t({1, 1, 2, 2}, {0, 1, 1, 1});
    LossResult<double> r = mse_loss(p, t);
    CHECK(r.value == doctest::Approx(1.5)); // (1 + 1 + 0 + 4) / 4
    CHECK(r.dpred.at(0, 0, 0, 0) == doctest::Approx(2.0 * 1.0 / 4.0));
    CHECK(r.dpred.at(0, 0, 1, 1) == doctest::Approx(2.0 * 2.0 / 4.0));
    CHECK(mse_loss(t, t).value == 0.0);
}

TEST_CASE("cross entropy with equal logits is log(classes)") {
    Tensor<double> p = Tensor<double>::zeros({1, 2, 1, 1});
    LabelTensor y({1, 1, 1, 1}, {1});
    LossResult<double> r = pixel_softmax_ce(p, y, 2);
    CHECK(r.value == doctest::Approx(std::log(2.0)));
    CHECK(r.dpred.at(0, 0, 0, 0) == doctest::Approx(0.5));  // p - 0
    CHECK(r.dpred.at(0, 1, 0, 0) == doctest::Approx(-0.5)); // p - 1
}

TEST_CASE("blocked cross entropy equals per-pixel cross entropy through the rearrangement") {
    // Logits in the stacked layout (block-major channels) against folded labels must price
    // exactly the same prediction sites as the rearranged map against the flat labels.
    const std::int64_t classes = 3, s2 = 2;
    RearrangeSpec rspec{s2, classes, RearrangeMode::CsPs, 0};
    Tensor<double> f = seeded({2, classes * s2 * s2, 3, 3}, 21);
    Tensor<double> y = rearrange_R(f, rspec);

    Rng rng(22);
    LabelTensor labels({2, 1, 3 * s2, 3 * s2});
    for (std::int32_t& v : labels.values())
        v = static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(classes)));

    LossResult<double> plain = pixel_softmax_ce(y, labels, classes, 1);
    LossResult<double> blocked = pixel_softmax_ce(f, fold_labels(labels, 1, s2), classes, s2);
    CHECK(plain.value == doctest::Approx(blocked.value).epsilon(1e-14));
    CHECK(rearrange_R(blocked.dpred, rspec).same_bytes(plain.dpred));
}

TEST_CASE("cross entropy rejects out-of-range labels and bad dims") {
    Tensor<double> p = Tensor<double>::zeros({1, 2, 1, 1});
    LabelTensor bad({1, 1, 1, 1}, {2});
    CHECK_THROWS_AS(pixel_softmax_ce(p, bad, 2), std::invalid_argument);
    LabelTensor wrong({1, 2, 1, 1}, {0, 0});
    CHECK_THROWS_AS(pixel_softmax_ce(p, wrong, 2), std::invalid_argument);
}

TEST_CASE("finite-difference checks pass for every registered op") {
    for (const GradCheckCase& c : standard_gradcheck_cases()) {
        GradCheckReport rep = c.run();
        INFO(rep.op, ": max rel err ", rep.max_rel_err, " (tol ", rep.tol, ")");
        CHECK(rep.pass);
        CHECK(rep.coords > 0);
    }
}

TEST_CASE("gradcheck epsilon range is enforced") {
    FnLayer id("id", [](const Tensor<double>& x) { return x; },
               [](const Tensor<double>&, const Tensor<double>& dy) { return dy; });
    Tensor<double> x = seeded({1, 2, 2, 2}, 30);
    CHECK_THROWS_AS(grad_check_layer("id", id, x, 1, 1e-2), std::invalid_argument);
    CHECK_THROWS_AS(grad_check_layer("id", id, x, 1, 1e-7), std::invalid_argument);
}
