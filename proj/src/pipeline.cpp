#include "evfuse/pipeline.hpp"

#include <string>

#include "evfuse/errors.hpp"
#include "evfuse/hyperedges.hpp"

namespace evfuse {

namespace {

// Window spanning the whole recording; [0, 1) for an empty stream.
std::pair<std::uint64_t, std::uint64_t> full_window(const EventStream& events) {
    if (events.events.empty()) return {0, 1};
    return {events.events.front().t, events.events.back().t + 1};
}

}  // namespace

DistillConfig distill_config(const ModelConfig& cfg) {
    DistillConfig d;
    d.mask_ratio = cfg.mask_ratio;
    d.lambda_frame = cfg.lambda1;
    d.lambda_event = cfg.lambda2;
    d.gen_hyperedges = cfg.gen_hyperedges;
    d.gen_fcm_iters = cfg.gen_fcm_iters;
    d.fuzzifier = cfg.fuzzifier;
    d.dist_floor = cfg.fcm_dist_floor;
    return d;
}

PipelineOutput run_pipeline(Tape& tape, const Model& bound, const ModelConfig& cfg,
                            const Tensor& frame_image, const EventStream& events, Phase phase) {
    if (events.width != cfg.image_size || events.height != cfg.image_size) {
        throw ShapeError("event sensor size " + std::to_string(events.width) + "x" +
                         std::to_string(events.height) + " does not match configured image size " +
                         std::to_string(cfg.image_size));
    }
    const auto [t0, t1] = full_window(events);

    PipelineOutput out;
    out.frame_raw = encode(tape, frame_image, bound.enc_frame);
    out.event_raw = encode(tape, events_to_frame(events, t0, t1), bound.enc_event);

    const Tensor& f5 = out.frame_raw.f5;
    const Tensor& s5 = out.event_raw.f5;
    const std::size_t h5 = f5.extent(1), w5 = f5.extent(2);

    HyperedgeSet initial = build_initial_hyperedges(tape, f5, s5, cfg.hyperedge_k);
    VertexSet verts = concat_vertices(tape, f5, s5);
    FcmConfig fcm{phase == Phase::Train ? cfg.fcm_train_iters : cfg.fcm_infer_iters, cfg.fuzzifier,
                  cfg.fcm_dist_floor};
    HyperedgeSet refined = fcm_refine(tape, initial, verts, fcm);

    Tensor fused_rows;
    if (cfg.sparse) {
        ActivityMap am = activity_map(events, t0, t1, cfg.scale5_stride());
        out.selection = select_sparse_tokens(am, cfg.rho);
        fused_rows = sparse_hypergraph_attention(tape, verts.rows, refined.edges, bound.attention,
                                                 out.selection);
    } else {
        fused_rows = hypergraph_attention(tape, verts.rows, refined.edges, bound.attention);
    }

    auto [frame5, event5] = split_modalities(tape, fused_rows, h5, w5);
    out.refined_frame5 = frame5;
    out.refined_event5 = event5;
    out.student_frame = FeaturePyramid{out.frame_raw.f3, out.frame_raw.f4, frame5};
    out.student_event = FeaturePyramid{out.event_raw.f3, out.event_raw.f4, event5};

    out.fused = pafpn(tape, fuse_add(tape, out.student_frame, out.student_event), bound.pafpn);
    out.head_out = toy_head(tape, out.fused.f3, bound.head);
    return out;
}

DistillLosses distill_losses(Tape& tape, const Model& bound, const ModelConfig& cfg,
                             const PipelineOutput& out, std::uint64_t step) {
    const DistillConfig dcfg = distill_config(cfg);
    const auto frame_masks = make_branch_masks(out.student_frame, cfg.seed, 0, step, cfg.mask_ratio);
    const auto event_masks = make_branch_masks(out.student_event, cfg.seed, 1, step, cfg.mask_ratio);
    return DistillLosses{
        branch_distill_loss(tape, out.student_frame, frame_masks, out.fused, bound.gen_frame, dcfg),
        branch_distill_loss(tape, out.student_event, event_masks, out.fused, bound.gen_event, dcfg)};
}

}  // namespace evfuse
