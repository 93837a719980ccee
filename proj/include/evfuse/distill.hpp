#pragma once

#include <array>
#include <cstdint>

#include "evfuse/features.hpp"
#include "evfuse/hypergraph_attention.hpp"
#include "evfuse/linear.hpp"
#include "evfuse/rng.hpp"
#include "evfuse/tape.hpp"

namespace evfuse {

// Binary spatial mask, deterministic in (seed, scale, branch, step).
struct MaskMap {
    Tensor values;  // [h x w], entries in {0, 1}
    std::uint64_t seed = 0;
    std::size_t scale_index = 0;
    std::size_t branch = 0;  // 0 = frame, 1 = event
    std::uint64_t step = 0;
};

struct DistillConfig {
    double mask_ratio = 0.65;  // alpha: cell is zeroed when its draw < alpha
    double lambda_frame = 2e-5;
    double lambda_event = 2e-5;
    std::size_t gen_hyperedges = 4;  // perfect square
    std::size_t gen_fcm_iters = 3;
    double fuzzifier = 2.0;
    double dist_floor = 1e-8;
};

// One feature generator per (scale, branch): hypergraph attention over the
// map's own tokens, with hyperedges pooled from the map itself.
struct GeneratorParams {
    AttentionParams attention;
};

GeneratorParams init_generator(std::size_t channels, std::size_t heads, SplitMix64& rng);

// Substream for mask draws; isolated so mask generation can never shift any
// other consumer of the seed.
SplitMix64 mask_rng(std::uint64_t seed, std::size_t scale_index, std::size_t branch,
                    std::uint64_t step);

// M[i][j] = 0 if the cell's uniform draw < alpha, else 1. Draws are taken in
// raster order.
MaskMap random_mask(std::size_t h, std::size_t w, double alpha, SplitMix64& rng);

std::array<MaskMap, 3> make_branch_masks(const FeaturePyramid& shapes, std::uint64_t seed,
                                         std::size_t branch, std::uint64_t step, double alpha);

// G(x) = attention(x, pooled-and-refined edges of x), reshaped back to
// [c x h x w]. Single-modality counterpart of the cross-modal construction.
Tensor generate(Tape& tape, const Tensor& chw, const GeneratorParams& gen, const DistillConfig& cfg);

// Sum over scales of the squared reconstruction error between the generator
// output on the masked student map and the (detached) teacher map.
Tensor branch_distill_loss(Tape& tape, const FeaturePyramid& student,
                           const std::array<MaskMap, 3>& masks, const FeaturePyramid& teacher,
                           const std::array<GeneratorParams, 3>& generators,
                           const DistillConfig& cfg);

// --- toy detection head ---

struct ToyHeadParams {
    LinearParams proj;  // c -> 1 (objectness) + 4 (offsets) + num_classes
    std::size_t num_classes = 0;
};

ToyHeadParams init_toy_head(std::size_t channels, std::size_t num_classes, SplitMix64& rng);

// Per-cell assignments on the scale-3 grid.
struct Targets {
    std::size_t h = 0, w = 0;
    std::vector<double> objectness;                  // h*w entries in {0, 1}
    std::vector<std::size_t> positive_cells;         // ascending raster indices
    std::vector<std::array<double, 4>> box_offsets;  // one per positive cell
    std::vector<std::size_t> class_ids;              // one per positive cell
};

// [hw x (5 + num_classes)] logits/offsets per cell.
Tensor toy_head(Tape& tape, const Tensor& p3, const ToyHeadParams& params);

// BCE on objectness over all cells + mean squared offset error + class cross
// entropy, the latter two over positive cells only.
Tensor base_loss(Tape& tape, const Tensor& head_out, const Targets& targets,
                 std::size_t num_classes);

// base + lambda1 * frame distill + lambda2 * event distill
Tensor total_loss(Tape& tape, const Tensor& base, const Tensor& distill_frame,
                  const Tensor& distill_event, double lambda1, double lambda2);

}  // namespace evfuse
