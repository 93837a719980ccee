#include <doctest.h>

#include <cstring>
#include <fstream>

#include "evfuse/commands.hpp"
#include "evfuse/counters.hpp"
#include "evfuse/errors.hpp"
#include "evfuse/pipeline.hpp"
#include "evfuse/toy_data.hpp"
#include "evfuse/train.hpp"

using namespace evfuse;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.image_size = 32;
    cfg.stride_base = 8;
    cfg.channels = 8;
    cfg.heads = 2;
    cfg.fcm_train_iters = 3;
    cfg.fcm_infer_iters = 2;
    cfg.gen_fcm_iters = 1;
    return cfg;
}

bool params_bitwise_equal(const Model& a, const Model& b) {
    std::vector<const Tensor*> pa, pb;
    for_each_param(a, [&](const std::string&, const Tensor& t) { pa.push_back(&t); });
    for_each_param(b, [&](const std::string&, const Tensor& t) { pb.push_back(&t); });
    if (pa.size() != pb.size()) return false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        if (pa[i]->size() != pb[i]->size()) return false;
        if (std::memcmp(pa[i]->data(), pb[i]->data(), pa[i]->size() * sizeof(double)) != 0) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("toy samples are deterministic and well-formed") {
    ModelConfig cfg = tiny_config();
    ToySample a = toy_sample(cfg, 17);
    ToySample b = toy_sample(cfg, 17);
    CHECK(std::memcmp(a.frame.data(), b.frame.data(), a.frame.size() * sizeof(double)) == 0);
    CHECK(a.events == b.events);
    CHECK(a.targets.positive_cells == b.targets.positive_cells);

    // moving square should fire events
    CHECK(!a.events.events.empty());
    // one positive cell, offsets within the cell, class id valid
    REQUIRE(a.targets.positive_cells.size() == 1);
    CHECK(a.targets.positive_cells[0] < a.targets.h * a.targets.w);
    CHECK(a.targets.box_offsets[0][0] >= 0.0);
    CHECK(a.targets.box_offsets[0][0] < 1.0);
    CHECK(a.targets.class_ids[0] < cfg.num_classes);
}

TEST_CASE("encoders use separate parameter sets per modality") {
    ModelConfig cfg = tiny_config();
    Model model = init_model(cfg);
    ToySample sample = toy_sample(cfg, 0);

    auto event_f3 = [&](const Model& m) {
        Tape tape;
        Model bound = bind_model(tape, m);
        PipelineOutput out = run_pipeline(tape, bound, cfg, sample.frame, sample.events, Phase::Infer);
        return out.event_raw.f3.detach();
    };
    Tensor before = event_f3(model);
    Model perturbed = model;
    // perturbing a frame-encoder weight must leave event features untouched
    Tensor w = perturbed.enc_frame.scales[0].proj_in.weight.detach();
    w.set(0, w.at(0) + 1.0);
    perturbed.enc_frame.scales[0].proj_in.weight = w;
    Tensor after = event_f3(perturbed);
    CHECK(std::memcmp(before.data(), after.data(), before.size() * sizeof(double)) == 0);
}

TEST_CASE("inference never evaluates masks or generators") {
    ModelConfig cfg = tiny_config();  // lambdas stay at their nonzero defaults
    Model model = init_model(cfg);
    ToySample sample = toy_sample(cfg, 0);

    counters::reset();
    Tape tape;
    Model bound = bind_model(tape, model);
    run_pipeline(tape, bound, cfg, sample.frame, sample.events, Phase::Infer);
    CHECK(counters::get().mask_draws == 0);
    CHECK(counters::get().generator_calls == 0);

    // identical op counts whether the config enables distillation or not
    const counters::Counters with = counters::get();
    ModelConfig no_distill = cfg;
    no_distill.lambda1 = 0.0;
    no_distill.lambda2 = 0.0;
    counters::reset();
    Tape tape2;
    Model bound2 = bind_model(tape2, init_model(no_distill));
    run_pipeline(tape2, bound2, no_distill, sample.frame, sample.events, Phase::Infer);
    CHECK(counters::get().attn_score_mults == with.attn_score_mults);
    CHECK(counters::get().attn_value_mults == with.attn_value_mults);
    CHECK(counters::get().mask_draws == 0);
    CHECK(counters::get().generator_calls == 0);
}

TEST_CASE("training with zero distillation weights matches the distillation-free graph bitwise") {
    ModelConfig cfg = tiny_config();
    cfg.lambda1 = 0.0;
    cfg.lambda2 = 0.0;
    TrainResult skipped = train_toy(cfg, 6, /*force_distill_graph=*/false);
    TrainResult forced = train_toy(cfg, 6, /*force_distill_graph=*/true);
    REQUIRE(skipped.metrics.size() == forced.metrics.size());
    for (std::size_t i = 0; i < skipped.metrics.size(); ++i) {
        CHECK(skipped.metrics[i].total == forced.metrics[i].total);
        CHECK(skipped.metrics[i].base == forced.metrics[i].base);
    }
    CHECK(params_bitwise_equal(skipped.model, forced.model));
}

TEST_CASE("distillation-on and lambda-zero runs share the step-0 base loss bitwise") {
    ModelConfig on = tiny_config();
    ModelConfig off = on;
    off.lambda1 = 0.0;
    off.lambda2 = 0.0;
    TrainResult r_on = train_toy(on, 0);
    TrainResult r_off = train_toy(off, 0);
    CHECK(r_on.metrics[0].base == r_off.metrics[0].base);
    CHECK(r_on.metrics[0].distill_frame > 0.0);
    CHECK(r_off.metrics[0].distill_frame == 0.0);
}

TEST_CASE("train_toy is bitwise reproducible and N = 0 records only the initial loss") {
    ModelConfig cfg = tiny_config();
    TrainResult a = train_toy(cfg, 5);
    TrainResult b = train_toy(cfg, 5);
    REQUIRE(a.metrics.size() == 6);
    for (std::size_t i = 0; i < 6; ++i) CHECK(a.metrics[i].total == b.metrics[i].total);
    CHECK(params_bitwise_equal(a.model, b.model));

    TrainResult zero = train_toy(cfg, 0);
    CHECK(zero.metrics.size() == 1);
    CHECK(zero.metrics[0].step == 0);
}

TEST_CASE("forward_report is deterministic and pure") {
    ModelConfig cfg = tiny_config();
    ToySample sample = toy_sample(cfg, 2);
    auto a = cli::forward_report(cfg, sample.frame, sample.events);
    auto b = cli::forward_report(cfg, sample.frame, sample.events);
    CHECK(a.dump() == b.dump());
    CHECK(a["counters"]["mask_draws"].get<std::uint64_t>() == 0);
    CHECK(a["counters"]["generator_calls"].get<std::uint64_t>() == 0);
}

TEST_CASE("train metrics regression against the committed golden run") {
    // The golden file pins the default-seed 300-step run; a fresh run shares
    // its prefix, so 20 steps are enough to compare. The tolerance absorbs
    // libm variation across platforms.
    std::ifstream golden_file(std::string(EVFUSE_TEST_DATA_DIR) + "/golden_train300.json");
    REQUIRE(golden_file.good());
    const auto golden = nlohmann::json::parse(golden_file);
    ModelConfig cfg;  // desk defaults
    TrainResult r = train_toy(cfg, 20);
    REQUIRE(golden["steps"].size() >= 21);
    for (std::size_t i = 0; i <= 20; ++i) {
        CHECK(r.metrics[i].total ==
              doctest::Approx(golden["steps"][i]["total"].get<double>()).epsilon(1e-6));
    }
    CHECK_FALSE(r.diverged);
}

TEST_CASE("zero frame with empty events runs deterministically") {
    ModelConfig cfg = tiny_config();
    Tensor zero_frame = Tensor::zeros({1, cfg.image_size, cfg.image_size});
    EventStream empty;
    empty.width = cfg.image_size;
    empty.height = cfg.image_size;
    auto a = cli::forward_report(cfg, zero_frame, empty);
    auto b = cli::forward_report(cfg, zero_frame, empty);
    CHECK(a.dump() == b.dump());
    // all-zero activity selects the lowest raster cells (tie rule)
    CHECK(a["sparse_cells"][0].get<std::size_t>() == 0);
}

TEST_CASE("gradcheck passes on the reduced graph with zero clustering iterations") {
    ModelConfig cfg;
    cfg.image_size = 16;
    cfg.stride_base = 4;
    cfg.channels = 8;
    cfg.heads = 2;
    cfg.fcm_train_iters = 0;
    cfg.fcm_infer_iters = 0;
    cfg.gen_fcm_iters = 0;
    auto outcome = cli::gradcheck_full_loss(cfg, 30, 1e-4);
    CHECK(outcome.pass);
}

TEST_CASE("bench rho=1 row reproduces the dense multiply count") {
    ModelConfig cfg;  // 64x64 defaults: m=8, n=8, c=32
    auto rows = cli::bench_sparsity(cfg, {1.0}, {});
    REQUIRE(rows.size() == 1);
    const std::uint64_t expected = 4ull * cfg.hyperedge_count() * 8 * cfg.channels;
    CHECK(rows[0].score_mults + rows[0].value_mults == expected);
}

TEST_CASE("gradcheck outcome on the small reference config") {
    ModelConfig cfg;
    cfg.image_size = 16;
    cfg.stride_base = 4;
    cfg.channels = 8;
    cfg.heads = 2;
    cfg.hyperedge_k = 2;
    cfg.fcm_train_iters = 3;
    cfg.fcm_infer_iters = 2;
    cfg.gen_fcm_iters = 2;
    auto outcome = cli::gradcheck_full_loss(cfg, 50, 1e-4);
    CHECK(outcome.pass);
    CHECK(outcome.report.entries.size() == 50);

    // a gradcheck-sized config refuses large images
    ModelConfig big;
    CHECK_THROWS_AS(cli::gradcheck_full_loss(big, 10, 1e-4), ConfigError);
}

TEST_CASE("fcm iteration count differs between phases as configured") {
    ModelConfig cfg = tiny_config();
    cfg.image_size = 64;
    // k = 1 pools each scale-5 modality map to a genuine 2x2 average, so the
    // initial centroids do not coincide with any vertex and refinement moves
    // them.
    cfg.hyperedge_k = 1;
    cfg.fcm_train_iters = 4;
    cfg.fcm_infer_iters = 0;  // identity at inference
    Model model = init_model(cfg);
    ToySample sample = toy_sample(cfg, 0);
    Tape t1, t2;
    Model b1 = bind_model(t1, model);
    Model b2 = bind_model(t2, model);
    PipelineOutput train_out = run_pipeline(t1, b1, cfg, sample.frame, sample.events, Phase::Train);
    PipelineOutput infer_out = run_pipeline(t2, b2, cfg, sample.frame, sample.events, Phase::Infer);
    bool differ = false;
    for (std::size_t i = 0; i < train_out.head_out.size(); ++i) {
        differ |= train_out.head_out.at(i) != infer_out.head_out.at(i);
    }
    CHECK(differ);
}
