#include "evfuse/distill.hpp"

#include <cmath>
#include <string>

#include "evfuse/counters.hpp"
#include "evfuse/errors.hpp"
#include "evfuse/hyperedges.hpp"

namespace evfuse {

namespace {

std::size_t exact_sqrt(std::size_t n) {
    const auto r = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(n))));
    if (r * r != n) {
        throw ConfigError("generator hyperedge count " + std::to_string(n) + " is not a perfect square");
    }
    return r;
}

// [h x w] mask replicated across channels, as plain data (masks carry no
// gradient).
Tensor tile_mask(const MaskMap& mask, std::size_t channels) {
    const std::size_t h = mask.values.extent(0), w = mask.values.extent(1);
    Tensor tiled = Tensor::zeros({channels, h, w});
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t i = 0; i < h * w; ++i) tiled.set(c * h * w + i, mask.values.at(i));
    }
    return tiled;
}

}  // namespace

GeneratorParams init_generator(std::size_t channels, std::size_t heads, SplitMix64& rng) {
    return GeneratorParams{init_attention(channels, heads, rng)};
}

SplitMix64 mask_rng(std::uint64_t seed, std::size_t scale_index, std::size_t branch,
                    std::uint64_t step) {
    return SplitMix64(SplitMix64::mix(seed, 0x6D61736Bull /* stream tag */,
                                      (static_cast<std::uint64_t>(scale_index) << 1) | branch, step));
}

MaskMap random_mask(std::size_t h, std::size_t w, double alpha, SplitMix64& rng) {
    if (!(alpha >= 0.0) || alpha >= 1.0) {
        throw ConfigError("mask ratio must lie in [0, 1), got " + std::to_string(alpha));
    }
    MaskMap m;
    m.values = Tensor::zeros({h, w});
    for (std::size_t i = 0; i < h * w; ++i) {
        m.values.set(i, rng.next_unit() < alpha ? 0.0 : 1.0);
    }
    counters::get().mask_draws += h * w;
    return m;
}

std::array<MaskMap, 3> make_branch_masks(const FeaturePyramid& shapes, std::uint64_t seed,
                                         std::size_t branch, std::uint64_t step, double alpha) {
    std::array<MaskMap, 3> masks;
    const Tensor* levels[3] = {&shapes.f3, &shapes.f4, &shapes.f5};
    for (std::size_t l = 0; l < 3; ++l) {
        SplitMix64 rng = mask_rng(seed, l, branch, step);
        masks[l] = random_mask(levels[l]->extent(1), levels[l]->extent(2), alpha, rng);
        masks[l].seed = seed;
        masks[l].scale_index = l;
        masks[l].branch = branch;
        masks[l].step = step;
    }
    return masks;
}

Tensor generate(Tape& tape, const Tensor& chw, const GeneratorParams& gen, const DistillConfig& cfg) {
    counters::get().generator_calls += 1;
    const std::size_t c = chw.extent(0), h = chw.extent(1), w = chw.extent(2);
    const std::size_t kg = exact_sqrt(cfg.gen_hyperedges);

    Tensor pooled = tape.adaptive_avg_pool(chw, kg);
    HyperedgeSet edges;
    edges.edges = tape.transpose(tape.reshape(pooled, {c, kg * kg}));
    edges.provenance.assign(kg * kg, {EdgeProvenance::Source::Refined, 0});

    VertexSet verts;
    verts.rows = chw_to_rows(tape, chw);
    verts.h = h;
    verts.w = w;

    FcmConfig fcm;
    fcm.iterations = cfg.gen_fcm_iters;
    fcm.fuzzifier = cfg.fuzzifier;
    fcm.dist_floor = cfg.dist_floor;
    HyperedgeSet refined = fcm_refine(tape, edges, verts, fcm);

    Tensor out_rows = hypergraph_attention(tape, verts.rows, refined.edges, gen.attention);
    return rows_to_chw(tape, out_rows, h, w);
}

Tensor branch_distill_loss(Tape& tape, const FeaturePyramid& student,
                           const std::array<MaskMap, 3>& masks, const FeaturePyramid& teacher,
                           const std::array<GeneratorParams, 3>& generators,
                           const DistillConfig& cfg) {
    const Tensor* student_levels[3] = {&student.f3, &student.f4, &student.f5};
    const Tensor* teacher_levels[3] = {&teacher.f3, &teacher.f4, &teacher.f5};

    Tensor loss;
    for (std::size_t l = 0; l < 3; ++l) {
        const Tensor& s = *student_levels[l];
        if (!s.same_shape(*teacher_levels[l])) {
            throw ShapeError("distill scale " + std::to_string(l + 3) + " shape mismatch: " +
                             s.shape_str() + " vs " + teacher_levels[l]->shape_str());
        }
        Tensor masked = tape.mul(s, tile_mask(masks[l], s.extent(0)));
        Tensor reconstructed = generate(tape, masked, generators[l], cfg);
        Tensor residual = tape.sub(reconstructed, teacher_levels[l]->detach());
        Tensor level_loss = tape.sum(tape.square(residual));
        loss = (l == 0) ? level_loss : tape.add(loss, level_loss);
    }
    return loss;
}

ToyHeadParams init_toy_head(std::size_t channels, std::size_t num_classes, SplitMix64& rng) {
    if (num_classes == 0) throw ConfigError("toy head needs at least one class");
    ToyHeadParams p;
    p.num_classes = num_classes;
    p.proj = init_linear(channels, 1 + 4 + num_classes, true, rng);
    return p;
}

Tensor toy_head(Tape& tape, const Tensor& p3, const ToyHeadParams& params) {
    return linear(tape, chw_to_rows(tape, p3), params.proj);
}

Tensor base_loss(Tape& tape, const Tensor& head_out, const Targets& targets,
                 std::size_t num_classes) {
    const std::size_t cells = targets.h * targets.w;
    if (head_out.extent(0) != cells || head_out.extent(1) != 5 + num_classes) {
        throw ShapeError("head output " + head_out.shape_str() + " does not match a " +
                         std::to_string(targets.h) + "x" + std::to_string(targets.w) + " grid with " +
                         std::to_string(num_classes) + " classes");
    }
    if (targets.objectness.size() != cells) {
        throw ShapeError("objectness targets must cover all " + std::to_string(cells) + " cells");
    }

    Tensor obj_logits = tape.reshape(tape.slice_cols(head_out, 0, 1), {cells});
    Tensor loss = tape.bce_with_logits(obj_logits, Tensor::from_data({cells}, targets.objectness));

    if (!targets.positive_cells.empty()) {
        const std::size_t npos = targets.positive_cells.size();
        Tensor pos_rows = tape.gather_rows(head_out, targets.positive_cells);

        std::vector<double> flat_boxes;
        flat_boxes.reserve(npos * 4);
        for (const auto& b : targets.box_offsets) flat_boxes.insert(flat_boxes.end(), b.begin(), b.end());
        Tensor offset_err = tape.sub(tape.slice_cols(pos_rows, 1, 5),
                                     Tensor::from_data({npos, 4}, std::move(flat_boxes)));
        Tensor offset_loss = tape.scale(tape.sum(tape.square(offset_err)), 1.0 / static_cast<double>(npos));

        Tensor class_loss =
            tape.softmax_cross_entropy(tape.slice_cols(pos_rows, 5, 5 + num_classes), targets.class_ids);

        loss = tape.add(loss, tape.add(offset_loss, class_loss));
    }
    return loss;
}

Tensor total_loss(Tape& tape, const Tensor& base, const Tensor& distill_frame,
                  const Tensor& distill_event, double lambda1, double lambda2) {
    return tape.add(base,
                    tape.add(tape.scale(distill_frame, lambda1), tape.scale(distill_event, lambda2)));
}

}  // namespace evfuse
