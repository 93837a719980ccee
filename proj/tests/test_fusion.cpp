#include <doctest.h>

#include "evfuse/errors.hpp"
#include "evfuse/fusion.hpp"
#include "oracles.hpp"

using namespace evfuse;

namespace {

FeaturePyramid random_pyramid(Tape& t, std::size_t c, std::size_t base, std::uint64_t seed,
                              bool grad = false) {
    return FeaturePyramid{t.leaf(oracle::random_tensor({c, base, base}, seed), grad),
                          t.leaf(oracle::random_tensor({c, base / 2, base / 2}, seed + 1), grad),
                          t.leaf(oracle::random_tensor({c, base / 4, base / 4}, seed + 2), grad)};
}

}  // namespace

TEST_CASE("fuse_add") {
    Tape t;
    SUBCASE("zero second pyramid is the identity") {
        FeaturePyramid f = random_pyramid(t, 3, 8, 100);
        FeaturePyramid z{t.leaf(Tensor::zeros({3, 8, 8}), false), t.leaf(Tensor::zeros({3, 4, 4}), false),
                         t.leaf(Tensor::zeros({3, 2, 2}), false)};
        FeaturePyramid out = fuse_add(t, f, z);
        for (std::size_t i = 0; i < out.f3.size(); ++i) CHECK(out.f3.at(i) == f.f3.at(i));
        for (std::size_t i = 0; i < out.f5.size(); ++i) CHECK(out.f5.at(i) == f.f5.at(i));
    }
    SUBCASE("opposite pyramids cancel") {
        FeaturePyramid f = random_pyramid(t, 2, 8, 101);
        FeaturePyramid neg{t.scale(f.f3, -1.0), t.scale(f.f4, -1.0), t.scale(f.f5, -1.0)};
        FeaturePyramid out = fuse_add(t, f, neg);
        for (std::size_t i = 0; i < out.f4.size(); ++i) CHECK(out.f4.at(i) == 0.0);
    }
    SUBCASE("random pair equals the elementwise loop") {
        FeaturePyramid f = random_pyramid(t, 2, 8, 102);
        FeaturePyramid s = random_pyramid(t, 2, 8, 103);
        FeaturePyramid out = fuse_add(t, f, s);
        for (std::size_t i = 0; i < out.f3.size(); ++i) {
            CHECK(out.f3.at(i) == f.f3.at(i) + s.f3.at(i));
        }
    }
    SUBCASE("level shape mismatch is an error") {
        FeaturePyramid f = random_pyramid(t, 2, 8, 104);
        FeaturePyramid s = random_pyramid(t, 2, 8, 105);
        s.f4 = t.leaf(Tensor::zeros({2, 3, 3}), false);
        CHECK_THROWS_AS(fuse_add(t, f, s), ShapeError);
    }
}

TEST_CASE("pafpn shape contract and validation") {
    SplitMix64 rng(1);
    PafpnParams params = init_pafpn(32, rng);
    Tape t;
    FeaturePyramid p = random_pyramid(t, 32, 8, 106);
    FeaturePyramid out = pafpn(t, p, params);
    CHECK(out.f3.shape() == std::vector<std::size_t>{32, 8, 8});
    CHECK(out.f4.shape() == std::vector<std::size_t>{32, 4, 4});
    CHECK(out.f5.shape() == std::vector<std::size_t>{32, 2, 2});

    FeaturePyramid bad = p;
    bad.f4 = t.leaf(Tensor::zeros({32, 3, 3}), false);
    CHECK_THROWS_AS(pafpn(t, bad, params), ConfigError);
}

TEST_CASE("identity projections map a zero pyramid to zero") {
    PafpnParams params;
    for (std::size_t i = 0; i < 3; ++i) {
        Tensor eye = Tensor::zeros({4, 4});
        for (std::size_t j = 0; j < 4; ++j) eye.set(j, j, 1.0);
        params.lateral[i] = LinearParams{eye, Tensor::zeros({4})};
        params.merge[i] = LinearParams{eye.detach(), Tensor::zeros({4})};
    }
    Tape t;
    FeaturePyramid zero{t.leaf(Tensor::zeros({4, 8, 8}), false), t.leaf(Tensor::zeros({4, 4, 4}), false),
                        t.leaf(Tensor::zeros({4, 2, 2}), false)};
    FeaturePyramid out = pafpn(t, zero, params);
    for (const Tensor* m : {&out.f3, &out.f4, &out.f5}) {
        for (std::size_t i = 0; i < m->size(); ++i) CHECK(m->at(i) == 0.0);
    }
}

TEST_CASE("information flows across scales in both directions") {
    SplitMix64 rng(2);
    PafpnParams params = init_pafpn(8, rng);
    Tensor p3v = oracle::random_tensor({8, 8, 8}, 107);
    Tensor p4v = oracle::random_tensor({8, 4, 4}, 108);
    Tensor p5v = oracle::random_tensor({8, 2, 2}, 109);

    auto p4_sum_from = [&](const Tensor& p5_in) {
        Tape t;
        FeaturePyramid p{t.leaf(p3v, false), t.leaf(p4v, false), t.leaf(p5_in, false)};
        return t.sum(pafpn(t, p, params).f4).item();
    };
    auto p5_sum_from_p3 = [&](const Tensor& p3_in) {
        Tape t;
        FeaturePyramid p{t.leaf(p3_in, false), t.leaf(p4v, false), t.leaf(p5v, false)};
        return t.sum(pafpn(t, p, params).f5).item();
    };
    auto p3_sum_from_p5 = [&](const Tensor& p5_in) {
        Tape t;
        FeaturePyramid p{t.leaf(p3v, false), t.leaf(p4v, false), t.leaf(p5_in, false)};
        return t.sum(pafpn(t, p, params).f3).item();
    };

    // top-down reach: p5 -> P3; bottom-up reach: p3 -> P5
    Tensor p5_bumped = p5v.detach();
    p5_bumped.set(0, p5_bumped.at(0) + 0.1);
    CHECK(p3_sum_from_p5(p5_bumped) != p3_sum_from_p5(p5v));
    Tensor p3_bumped = p3v.detach();
    p3_bumped.set(0, p3_bumped.at(0) + 0.1);
    CHECK(p5_sum_from_p3(p3_bumped) != p5_sum_from_p3(p3v));
    CHECK(p4_sum_from(p5_bumped) != p4_sum_from(p5v));
}

TEST_CASE("gradient of sum(P4) w.r.t. p5 crosses scales and matches finite differences") {
    SplitMix64 rng(3);
    PafpnParams params = init_pafpn(6, rng);
    Tensor p3v = oracle::random_tensor({6, 8, 8}, 110);
    Tensor p4v = oracle::random_tensor({6, 4, 4}, 111);
    auto build = [&](Tape& t, std::vector<Tensor>& in) {
        FeaturePyramid p{t.leaf(p3v, false), t.leaf(p4v, false), in[0]};
        return t.sum(pafpn(t, p, params).f4);
    };
    Tensor p5v = oracle::random_tensor({6, 2, 2}, 112);
    CHECK(oracle::max_grad_rel_err(build, {p5v}, 1e-6) < 1e-5);

    // and the analytic gradient is not identically zero
    Tape t;
    Tensor p5l = t.leaf(p5v);
    FeaturePyramid p{t.leaf(p3v, false), t.leaf(p4v, false), p5l};
    t.backward(t.sum(pafpn(t, p, params).f4));
    Tensor g = t.grad(p5l);
    double norm = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) norm += std::abs(g.at(i));
    CHECK(norm > 0.0);
}

TEST_CASE("upsample of a 2x2-average is the identity on constant blocks") {
    Tape t;
    // build a map that is constant on each 2x2 block
    Tensor blocks = oracle::random_tensor({2, 2, 2}, 113);
    Tensor x = Tensor::zeros({2, 4, 4});
    for (std::size_t ch = 0; ch < 2; ++ch) {
        for (std::size_t y = 0; y < 4; ++y) {
            for (std::size_t xx = 0; xx < 4; ++xx) x.set(ch, y, xx, blocks.at(ch, y / 2, xx / 2));
        }
    }
    Tensor xl = t.leaf(x, false);
    Tensor round = upsample2x(t, t.adaptive_avg_pool(xl, 2));
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(round.at(i) == doctest::Approx(x.at(i)).epsilon(1e-15));
}
