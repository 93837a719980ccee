#pragma once

#include <cstdint>
#include <vector>

#include "evfuse/config.hpp"
#include "evfuse/model.hpp"

namespace evfuse {

struct StepMetrics {
    std::uint64_t step = 0;
    double base = 0.0;
    double distill_frame = 0.0;
    double distill_event = 0.0;
    double total = 0.0;
};

struct TrainResult {
    Model model;
    // steps + 1 entries: entry i is the loss before update i; the last entry
    // is the loss after the final update.
    std::vector<StepMetrics> metrics;
    std::uint64_t attn_mults_per_step = 0;
    bool diverged = false;
    std::uint64_t diverged_step = 0;
};

// Plain gradient descent on the synthetic moving-square stream, one sample
// per step, fixed learning rate from the config. The distillation graph is
// built only when a distillation weight is nonzero; force_distill_graph
// keeps it in the graph regardless (its contribution is then exactly zero),
// which exists so tests can prove that equivalence.
TrainResult train_toy(const ModelConfig& cfg, std::uint64_t steps, bool force_distill_graph = false);

// Mean per-element squared error between the pre-fusion (student) pyramids
// and the fused (teacher) pyramid, averaged over scales, branches and
// n_samples fresh inference-phase samples starting at first_step.
double feature_alignment_mse(const Model& model, const ModelConfig& cfg, std::uint64_t first_step,
                             std::size_t n_samples);

}  // namespace evfuse
