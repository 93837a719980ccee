#pragma once

#include "evfuse/config.hpp"
#include "evfuse/distill.hpp"
#include "evfuse/events.hpp"
#include "evfuse/tensor.hpp"

namespace evfuse {

// Synthetic moving-square scene: one bright square translating 2 px/frame
// over a seeded static texture, wrapping at the borders (torus) so every
// trajectory stays valid at any image size. Events are synthesised between
// the previous and current frame.
struct ToySample {
    Tensor frame;        // [1 x H x W], intensities in [0, 1]
    EventStream events;  // between the previous and the current frame
    Targets targets;     // on the scale-3 grid
};

// Pure function of (cfg.seed, step); every 8 steps starts a fresh episode
// with a newly sampled square (size, position, direction).
ToySample toy_sample(const ModelConfig& cfg, std::uint64_t step);

}  // namespace evfuse
