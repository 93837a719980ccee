#pragma once

#include <array>

#include "evfuse/features.hpp"
#include "evfuse/linear.hpp"
#include "evfuse/rng.hpp"
#include "evfuse/tape.hpp"

namespace evfuse {

// Path-aggregation pyramid: positionwise linear+ReLU projections, nearest-
// neighbour 2x upsampling on the way down the strides, 2x2 average pooling
// on the way back up.
struct PafpnParams {
    std::array<LinearParams, 3> lateral;  // top-down pass, per level 3/4/5
    std::array<LinearParams, 3> merge;    // bottom-up pass, per level 3/4/5
};

PafpnParams init_pafpn(std::size_t channels, SplitMix64& rng);

// Per-level elementwise sum of two pyramids.
FeaturePyramid fuse_add(Tape& tape, const FeaturePyramid& f, const FeaturePyramid& s);

// T5 = lat5(p5); T4 = lat4(p4) + up(T5); T3 = lat3(p3) + up(T4)
// P3 = mrg3(T3); P4 = mrg4(T4) + down(P3); P5 = mrg5(T5) + down(P4)
FeaturePyramid pafpn(Tape& tape, const FeaturePyramid& p, const PafpnParams& params);

// Nearest-neighbour 2x upsampling; exposed for the pooling consistency test.
Tensor upsample2x(Tape& tape, const Tensor& chw);

}  // namespace evfuse
