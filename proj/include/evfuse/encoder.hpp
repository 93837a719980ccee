#pragma once

#include <array>

#include "evfuse/features.hpp"
#include "evfuse/linear.hpp"
#include "evfuse/tape.hpp"

namespace evfuse {

// Patch-embedding encoder: per scale, non-overlapping s x s patches are
// flattened, projected to c, passed through ReLU, then projected c -> c.
// The three scales use strides stride_base, 2*stride_base, 4*stride_base.
struct EncoderParams {
    struct Scale {
        LinearParams proj_in;   // [in_channels * s^2  x c]
        LinearParams proj_out;  // [c x c]
    };
    std::array<Scale, 3> scales;
    std::size_t in_channels = 0;
    std::size_t channels = 0;
    std::size_t stride_base = 0;
};

EncoderParams init_encoder(std::size_t in_channels, std::size_t channels, std::size_t stride_base,
                           SplitMix64& rng);

// image [in_channels x H x W]; H and W must be divisible by 4*stride_base.
FeaturePyramid encode(Tape& tape, const Tensor& image, const EncoderParams& params);

}  // namespace evfuse
