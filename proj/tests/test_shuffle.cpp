#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <vector>

#include "flattenet/conv.hpp"
#include "flattenet/loss.hpp"
#include "flattenet/rng.hpp"
#include "flattenet/shuffle.hpp"

using namespace flattenet;

namespace {

Tensor<double> seeded(Dims d, std::uint64_t seed) {
    Tensor<double> t(d);
    Rng rng(seed);
    for (double& v : t.values()) v = rng.uniform(-1.0, 1.0);
    return t;
}

std::vector<double> sorted_values(const Tensor<double>& t) {
    std::vector<double> v = t.values();
    std::sort(v.begin(), v.end());
    return v;
}

} // namespace

TEST_CASE("channel shuffle interleaves the groups") {
    // two groups of two: [a, b, c, d] -> [a, c, b, d]
    Tensor<double> x({1, 4, 1, 1}, {1, 2, 3, 4});
    Tensor<double> y = channel_shuffle(x, 2);
    CHECK(y.values() == std::vector<double>{1, 3, 2, 4});
}

TEST_CASE("channel shuffle undone by shuffling with the complementary group count") {
    for (std::int64_t c : {4, 6, 12, 24})
        for (std::int64_t g = 1; g <= c; ++g) {
            if (c % g != 0) continue;
            Tensor<double> x = seeded({2, c, 2, 3}, static_cast<std::uint64_t>(c * 100 + g));
            CHECK(channel_shuffle(channel_shuffle(x, g), c / g).same_bytes(x));
        }
}

TEST_CASE("pixel shuffle scatters channel blocks onto the spatial grid") {
    Tensor<double> x({1, 4, 1, 1}, {1, 2, 3, 4});
    Tensor<double> y = pixel_shuffle(x, 2);
    CHECK(y.dims() == Dims{1, 1, 2, 2});
    CHECK(y.values() == std::vector<double>{1, 2, 3, 4}); // row-major fill of the 2x2 cell
}

TEST_CASE("pixel shuffle and unshuffle are inverse bijections") {
    for (std::int64_t r : {1, 2, 4})
        for (std::int64_t c = r * r; c <= 32; c += r * r) {
            Tensor<double> x = seeded({2, c, 3, 2}, static_cast<std::uint64_t>(c * 10 + r));
            Tensor<double> y = pixel_shuffle(x, r);
            CHECK(y.dims() == Dims{2, c / (r * r), 3 * r, 2 * r});
            CHECK(pixel_unshuffle(y, r).same_bytes(x));
            CHECK(pixel_shuffle(pixel_unshuffle(x, 1), 1).same_bytes(x));
        }
}

TEST_CASE("the full rearrangement on an 8-channel pixel") {
    // s2 = 2 and two descriptor channels: slot-major channel stacking turns channel
    // (slot * c_tilde + c) into output pixel (slot / 2, slot % 2) of channel c.
    Tensor<double> x({1, 8, 1, 1}, {1, 2, 3, 4, 5, 6, 7, 8});
    RearrangeSpec spec{2, 2, RearrangeMode::CsPs, 0};
    Tensor<double> y = rearrange_R(x, spec);
    CHECK(y.dims() == Dims{1, 2, 2, 2});
    CHECK(y.values() == std::vector<double>{1, 3, 5, 7, 2, 4, 6, 8});
    CHECK(rearrange_R_inv(y, spec).same_bytes(x));
}

TEST_CASE("rearrangement with one descriptor channel writes slots row-major") {
    Tensor<double> x({1, 4, 2, 1}, {1, 2, 3, 4, 5, 6, 7, 8}); // channel c holds {2c+1, 2c+2}
    RearrangeSpec spec{2, 1, RearrangeMode::CsPs, 0};
    Tensor<double> y = rearrange_R(x, spec);
    CHECK(y.dims() == Dims{1, 1, 4, 2});
    // top source pixel expands to rows 0-1, bottom to rows 2-3
    CHECK(y.values() == std::vector<double>{1, 3, 5, 7, 2, 4, 6, 8});
}

TEST_CASE("rearrangement round-trips bytewise at deployment size") {
    Tensor<double> x = seeded({1, 2048, 8, 8}, 77);
    for (RearrangeMode mode :
         {RearrangeMode::CsPs, RearrangeMode::PsOnly, RearrangeMode::RandPermPs}) {
        RearrangeSpec spec{8, 32, mode, 123};
        Tensor<double> y = rearrange_R(x, spec);
        CHECK(y.dims() == Dims{1, 32, 64, 64});
        CHECK(rearrange_R_inv(y, spec).same_bytes(x));
        CHECK(sorted_values(y) == sorted_values(x)); // pure permutation, values untouched
    }
}

TEST_CASE("the rearrangement variants are genuinely different permutations") {
    Tensor<double> x = seeded({1, 16, 2, 2}, 5);
    Tensor<double> a = rearrange_R(x, {2, 4, RearrangeMode::CsPs, 0});
    Tensor<double> b = rearrange_R(x, {2, 4, RearrangeMode::PsOnly, 0});
    Tensor<double> c = rearrange_R(x, {2, 4, RearrangeMode::RandPermPs, 9});
    CHECK_FALSE(a.same_bytes(b));
    CHECK_FALSE(a.same_bytes(c));
    CHECK_FALSE(b.same_bytes(c));
}

TEST_CASE("seeded permutations are valid, reproducible, and seed-sensitive") {
    std::vector<std::int64_t> p = seeded_permutation(64, 42);
    std::vector<std::int64_t> sorted = p;
    std::sort(sorted.begin(), sorted.end());
    for (std::int64_t i = 0; i < 64; ++i) CHECK(sorted[static_cast<std::size_t>(i)] == i);
    CHECK(seeded_permutation(64, 42) == p);
    CHECK(seeded_permutation(64, 43) != p);

    Tensor<double> x = seeded({1, 16, 2, 2}, 6);
    RearrangeSpec s9{2, 4, RearrangeMode::RandPermPs, 9};
    CHECK(rearrange_R(x, s9).same_bytes(rearrange_R(x, s9)));
    CHECK_FALSE(rearrange_R(x, s9).same_bytes(rearrange_R(x, {2, 4, RearrangeMode::RandPermPs, 10})));
}

TEST_CASE("losses are invariant under the rearrangement") {
    Tensor<double> p = seeded({2, 16, 3, 3}, 8);
    Tensor<double> t = seeded({2, 16, 3, 3}, 9);
    RearrangeSpec spec{2, 4, RearrangeMode::CsPs, 0};
    CHECK(mse_loss(p, t).value ==
          doctest::Approx(mse_loss(rearrange_R(p, spec), rearrange_R(t, spec)).value)
              .epsilon(1e-14));
}

TEST_CASE("connectivity of grouped 1x1 pairs around a channel shuffle") {
    CHECK(connectivity_check(32, 32, 64, 2048));  // c / g3 = 32 = g1, tight but dense
    CHECK(connectivity_check(2, 2, 2, 4));        // shuffle bridges the two groups
    CHECK_FALSE(connectivity_check(2, 1, 2, 4));  // without it the groups stay disjoint
    CHECK(connectivity_check(1, 1, 1, 4));        // dense convs are trivially connected
    CHECK_FALSE(connectivity_check(4, 4, 4, 4));
    CHECK_THROWS_AS(connectivity_check(3, 1, 1, 4), std::invalid_argument);
    CHECK_THROWS_AS(connectivity_check(0, 1, 1, 4), std::invalid_argument);
}

TEST_CASE("connectivity prediction matches signal flow through the real ops") {
    // Feed one-hot inputs through all-ones grouped convs around the shuffle; output channel o
    // sees input channel i iff the value arrives nonzero. The analytic answer must match for
    // every group combination on a small channel count.
    const std::int64_t c = 8;
    for (std::int64_t g1 : {1, 2, 4, 8})
        for (std::int64_t g2 : {1, 2, 4, 8})
            for (std::int64_t g3 : {1, 2, 4, 8}) {
                ConvSpec s1{c, c, 1, 1, g1, -1, false};
                ConvSpec s3{c, c, 1, 1, g3, -1, false};
                Tensor<double> w1 = Tensor<double>::ones(s1.weight_dims());
                Tensor<double> w3 = Tensor<double>::ones(s3.weight_dims());
                bool all = true;
                for (std::int64_t i = 0; i < c && all; ++i) {
                    Tensor<double> x({1, c, 1, 1});
                    x.at(0, i, 0, 0) = 1.0;
                    Tensor<double> y = conv2d_forward(
                        channel_shuffle(conv2d_forward(x, s1, w1), g2), s3, w3);
                    for (std::int64_t o = 0; o < c; ++o) all = all && y.at(0, o, 0, 0) > 0.0;
                }
                INFO("g1 ", g1, " g2 ", g2, " g3 ", g3);
                CHECK(connectivity_check(g1, g2, g3, c) == all);
            }
}

TEST_CASE("rearrange rejects geometry that does not factor") {
    Tensor<double> x = seeded({1, 6, 2, 2}, 50);
    CHECK_THROWS_AS(rearrange_R(x, RearrangeSpec{2, 2, RearrangeMode::CsPs, 0}),
                    std::invalid_argument);
    Tensor<double> y = seeded({1, 2, 3, 3}, 51);
    CHECK_THROWS_AS(rearrange_R_inv(y, RearrangeSpec{2, 2, RearrangeMode::CsPs, 0}),
                    std::invalid_argument);
    CHECK_THROWS_AS(channel_shuffle(x, 4), std::invalid_argument);
    CHECK_THROWS_AS(pixel_unshuffle(y, 2), std::invalid_argument);
}
