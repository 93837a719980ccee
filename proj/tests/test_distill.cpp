#include <doctest.h>

#include <cmath>
#include <cstring>
#include <set>

#include "evfuse/counters.hpp"
#include "evfuse/distill.hpp"
#include "evfuse/errors.hpp"
#include "oracles.hpp"

using namespace evfuse;

namespace {

GeneratorParams zero_generator(std::size_t c, std::size_t heads) {
    SplitMix64 rng(1);
    GeneratorParams g = init_generator(c, heads, rng);
    for (LinearParams* lp :
         {&g.attention.to_edge_q, &g.attention.to_edge_k, &g.attention.to_edge_v, &g.attention.to_edge_o,
          &g.attention.to_vertex_q, &g.attention.to_vertex_k, &g.attention.to_vertex_v,
          &g.attention.to_vertex_o}) {
        for (std::size_t i = 0; i < lp->weight.size(); ++i) lp->weight.set(i, 0.0);
    }
    return g;
}

MaskMap ones_mask(std::size_t h, std::size_t w) {
    MaskMap m;
    m.values = Tensor::full({h, w}, 1.0);
    return m;
}

}  // namespace

TEST_CASE("random_mask follows the threshold rule") {
    SUBCASE("alpha = 0 keeps everything") {
        SplitMix64 rng(5);
        MaskMap m = random_mask(4, 4, 0.0, rng);
        for (std::size_t i = 0; i < 16; ++i) CHECK(m.values.at(i) == 1.0);
    }
    SUBCASE("cells with draw below alpha are zeroed") {
        SplitMix64 draws(77);
        std::vector<double> r(24);
        for (auto& v : r) v = draws.next_unit();
        SplitMix64 rng(77);
        MaskMap m = random_mask(4, 6, 0.65, rng);
        for (std::size_t i = 0; i < 24; ++i) {
            CHECK(m.values.at(i) == (r[i] < 0.65 ? 0.0 : 1.0));
        }
    }
    SUBCASE("zero fraction concentrates near alpha") {
        SplitMix64 rng = mask_rng(/*seed=*/1, /*scale=*/0, /*branch=*/0, /*step=*/0);
        MaskMap m = random_mask(100, 100, 0.65, rng);
        double zeros = 0.0;
        for (std::size_t i = 0; i < m.values.size(); ++i) zeros += (m.values.at(i) == 0.0) ? 1.0 : 0.0;
        const double frac = zeros / 10000.0;
        CHECK(frac >= 0.64);
        CHECK(frac <= 0.66);
    }
    SUBCASE("alpha = 1 is rejected") {
        SplitMix64 rng(1);
        CHECK_THROWS_AS(random_mask(2, 2, 1.0, rng), ConfigError);
    }
}

TEST_CASE("masks are deterministic per (seed, scale, branch, step) and fresh per step") {
    FeaturePyramid shapes{Tensor::zeros({2, 8, 8}), Tensor::zeros({2, 4, 4}), Tensor::zeros({2, 2, 2})};
    auto a = make_branch_masks(shapes, 42, 0, 7, 0.65);
    auto b = make_branch_masks(shapes, 42, 0, 7, 0.65);
    for (std::size_t l = 0; l < 3; ++l) {
        CHECK(std::memcmp(a[l].values.data(), b[l].values.data(),
                          a[l].values.size() * sizeof(double)) == 0);
    }
    // branches draw independent masks
    auto ev = make_branch_masks(shapes, 42, 1, 7, 0.65);
    bool any_diff = false;
    for (std::size_t i = 0; i < a[0].values.size(); ++i) {
        any_diff |= (a[0].values.at(i) != ev[0].values.at(i));
    }
    CHECK(any_diff);
    // the 8x8 mask changes across 100 consecutive steps
    std::set<std::vector<double>> seen;
    for (std::uint64_t step = 0; step < 100; ++step) {
        auto m = make_branch_masks(shapes, 42, 0, step, 0.65);
        seen.insert({m[0].values.data(), m[0].values.data() + m[0].values.size()});
    }
    CHECK(seen.size() == 100);
}

TEST_CASE("generate") {
    DistillConfig cfg;
    cfg.gen_hyperedges = 4;
    SUBCASE("identity with zero projections and no clustering iterations") {
        cfg.gen_fcm_iters = 0;
        Tape t;
        Tensor x = oracle::random_tensor({3, 2, 2}, 200);
        Tensor out = generate(t, t.leaf(x, false), zero_generator(3, 1), cfg);
        CHECK(std::memcmp(out.data(), x.data(), x.size() * sizeof(double)) == 0);
    }
    SUBCASE("shape contract") {
        cfg.gen_fcm_iters = 2;
        SplitMix64 rng(9);
        Tape t;
        Tensor out = generate(t, t.leaf(oracle::random_tensor({8, 4, 4}, 201), false),
                              init_generator(8, 2, rng), cfg);
        CHECK(out.shape() == std::vector<std::size_t>{8, 4, 4});
    }
    SUBCASE("gradient matches finite differences") {
        cfg.gen_fcm_iters = 2;
        SplitMix64 rng(10);
        GeneratorParams gen = init_generator(4, 2, rng);
        auto build = [&](Tape& t, std::vector<Tensor>& in) {
            return t.sum(t.square(generate(t, in[0], gen, cfg)));
        };
        CHECK(oracle::max_grad_rel_err(build, {oracle::random_tensor({4, 2, 2}, 202)}, 1e-6) < 1e-4);
    }
    SUBCASE("non-square hyperedge count is a config error") {
        cfg.gen_hyperedges = 5;
        Tape t;
        CHECK_THROWS_AS(generate(t, t.leaf(Tensor::zeros({2, 2, 2}), false), zero_generator(2, 1), cfg),
                        ConfigError);
    }
}

TEST_CASE("branch_distill_loss") {
    DistillConfig cfg;
    cfg.gen_hyperedges = 4;
    cfg.gen_fcm_iters = 0;

    SUBCASE("zero when the generator reproduces the teacher") {
        Tape t;
        FeaturePyramid student{t.leaf(oracle::random_tensor({2, 4, 4}, 210), false),
                               t.leaf(oracle::random_tensor({2, 2, 2}, 211), false),
                               t.leaf(oracle::random_tensor({2, 1, 1}, 212), false)};
        // identity generators + all-ones masks + teacher == student
        std::array<GeneratorParams, 3> gens{zero_generator(2, 1), zero_generator(2, 1),
                                            zero_generator(2, 1)};
        std::array<MaskMap, 3> masks{ones_mask(4, 4), ones_mask(2, 2), ones_mask(1, 1)};
        Tensor loss = branch_distill_loss(t, student, masks, student, gens, cfg);
        CHECK(loss.item() == 0.0);
    }
    SUBCASE("single-scale hand case matches a scalar-loop sum of squares") {
        Tape t;
        // c=1, 2x2 maps; identity generator; mask keeps (0,0) and (1,1)
        Tensor s = Tensor::from_data({1, 2, 2}, {1.0, -2.0, 0.5, 3.0});
        Tensor teach = Tensor::from_data({1, 2, 2}, {0.5, 1.0, -1.0, 2.0});
        MaskMap mask;
        mask.values = Tensor::from_data({2, 2}, {1.0, 0.0, 0.0, 1.0});
        // masked student: {1, 0, 0, 3}; residual vs teacher: {0.5, -1, 1, 1}
        double expected = 0.0;
        const double masked[4] = {1.0, 0.0, 0.0, 3.0};
        const double teachv[4] = {0.5, 1.0, -1.0, 2.0};
        for (int i = 0; i < 4; ++i) expected += (masked[i] - teachv[i]) * (masked[i] - teachv[i]);

        FeaturePyramid sp{t.leaf(s, false), t.leaf(s, false), t.leaf(s, false)};
        FeaturePyramid tp{t.leaf(teach, false), t.leaf(teach, false), t.leaf(teach, false)};
        std::array<GeneratorParams, 3> gens{zero_generator(1, 1), zero_generator(1, 1),
                                            zero_generator(1, 1)};
        std::array<MaskMap, 3> masks{mask, mask, mask};
        Tensor loss = branch_distill_loss(t, sp, masks, tp, gens, cfg);
        CHECK(std::abs(loss.item() - 3.0 * expected) < 1e-12);
    }
    SUBCASE("loss is non-negative and teacher parameters receive no gradient") {
        cfg.gen_fcm_iters = 1;
        SplitMix64 rng(11);
        Tape t;
        // teacher produced from a parameter so gradient flow is observable
        Tensor teacher_param = t.leaf(oracle::random_tensor({2, 2, 2}, 213));
        Tensor teacher_map = t.scale(teacher_param, 2.0);
        Tensor student_param = t.leaf(oracle::random_tensor({2, 2, 2}, 214));
        FeaturePyramid sp{student_param, student_param, student_param};
        FeaturePyramid tp{teacher_map, teacher_map, teacher_map};
        std::array<GeneratorParams, 3> gens{init_generator(2, 1, rng), init_generator(2, 1, rng),
                                            init_generator(2, 1, rng)};
        std::array<MaskMap, 3> masks{ones_mask(2, 2), ones_mask(2, 2), ones_mask(2, 2)};
        Tensor loss = branch_distill_loss(t, sp, masks, tp, gens, cfg);
        CHECK(loss.item() >= 0.0);
        t.backward(loss);
        Tensor g_teacher = t.grad(teacher_param);
        for (std::size_t i = 0; i < g_teacher.size(); ++i) CHECK(g_teacher.at(i) == 0.0);
        Tensor g_student = t.grad(student_param);
        double norm = 0.0;
        for (std::size_t i = 0; i < g_student.size(); ++i) norm += std::abs(g_student.at(i));
        CHECK(norm > 0.0);
    }
}

TEST_CASE("toy head and base loss") {
    SUBCASE("empty targets with confident background give a near-zero loss") {
        Tape t;
        Targets targets;
        targets.h = 2;
        targets.w = 2;
        targets.objectness.assign(4, 0.0);
        Tensor head_out = Tensor::zeros({4, 7});
        for (std::size_t i = 0; i < 4; ++i) head_out.set(i, 0, -20.0);
        Tensor loss = base_loss(t, t.leaf(head_out, false), targets, 2);
        CHECK(loss.item() < 1e-6);
    }
    SUBCASE("perfect predictions score below 0.01") {
        Tape t;
        Targets targets;
        targets.h = 2;
        targets.w = 2;
        targets.objectness = {0.0, 1.0, 0.0, 0.0};
        targets.positive_cells = {1};
        targets.box_offsets = {{0.25, 0.5, 1.5, 1.5}};
        targets.class_ids = {1};
        Tensor head_out = Tensor::zeros({4, 7});
        for (std::size_t i = 0; i < 4; ++i) head_out.set(i, 0, i == 1 ? 20.0 : -20.0);
        head_out.set(1, 1, 0.25);
        head_out.set(1, 2, 0.5);
        head_out.set(1, 3, 1.5);
        head_out.set(1, 4, 1.5);
        head_out.set(1, 5, -20.0);
        head_out.set(1, 6, 20.0);
        Tensor loss = base_loss(t, t.leaf(head_out, false), targets, 2);
        CHECK(loss.item() < 0.01);
    }
    SUBCASE("gradients match finite differences") {
        SplitMix64 rng(12);
        ToyHeadParams head = init_toy_head(4, 2, rng);
        Targets targets;
        targets.h = 2;
        targets.w = 2;
        targets.objectness = {0.0, 0.0, 1.0, 0.0};
        targets.positive_cells = {2};
        targets.box_offsets = {{0.1, 0.9, 1.0, 2.0}};
        targets.class_ids = {0};
        Tensor p3 = oracle::random_tensor({4, 2, 2}, 215);
        auto build = [&](Tape& t, std::vector<Tensor>& in) {
            ToyHeadParams bound = head;
            bound.proj.weight = in[0];
            bound.proj.bias = in[1];
            return base_loss(t, toy_head(t, t.leaf(p3, false), bound), targets, 2);
        };
        CHECK(oracle::max_grad_rel_err(build, {head.proj.weight.detach(), head.proj.bias.detach()},
                                       1e-6) < 1e-5);
    }
}

TEST_CASE("total_loss arithmetic and linearity") {
    Tape t;
    SUBCASE("zero weights reduce to the base loss") {
        Tensor out = total_loss(t, t.leaf(Tensor::scalar(3.5), false), t.leaf(Tensor::scalar(100.0), false),
                                t.leaf(Tensor::scalar(50.0), false), 0.0, 0.0);
        CHECK(out.item() == 3.5);
    }
    SUBCASE("published weights: 1 + 2e-5 * 1e5 twice = 5") {
        Tensor out = total_loss(t, t.leaf(Tensor::scalar(1.0), false), t.leaf(Tensor::scalar(1e5), false),
                                t.leaf(Tensor::scalar(1e5), false), 2e-5, 2e-5);
        CHECK(out.item() == doctest::Approx(5.0).epsilon(1e-12));
    }
    SUBCASE("component gradients are (1, lambda1, lambda2)") {
        Tensor base = t.leaf(Tensor::scalar(1.0));
        Tensor df = t.leaf(Tensor::scalar(2.0));
        Tensor de = t.leaf(Tensor::scalar(3.0));
        Tensor out = total_loss(t, base, df, de, 0.25, 0.125);
        t.backward(out);
        CHECK(t.grad(base).item() == 1.0);
        CHECK(t.grad(df).item() == 0.25);
        CHECK(t.grad(de).item() == 0.125);
    }
}
