#pragma once

#include "evfuse/config.hpp"
#include "evfuse/distill.hpp"
#include "evfuse/events.hpp"
#include "evfuse/model.hpp"

namespace evfuse {

enum class Phase { Train, Infer };  // selects the clustering iteration count

struct PipelineOutput {
    FeaturePyramid frame_raw;   // encoder outputs before hypergraph refinement
    FeaturePyramid event_raw;
    Tensor refined_frame5;      // scale-5 maps after attention + split
    Tensor refined_event5;
    FeaturePyramid student_frame;  // {f3, f4, refined f5}
    FeaturePyramid student_event;
    FeaturePyramid fused;       // pyramid after addition + path aggregation
    Tensor head_out;            // [h3*w3 x (5 + num_classes)]
    SparseSelection selection;  // populated when the sparse path ran
};

// Full forward pass: encode both modalities, build and refine cross-modal
// hyperedges at scale 5, run (optionally sparse) hypergraph attention, split
// back per modality, fuse, aggregate and apply the detection head. The
// distillation branch is NOT part of this graph; training adds it on top.
PipelineOutput run_pipeline(Tape& tape, const Model& bound, const ModelConfig& cfg,
                            const Tensor& frame_image, const EventStream& events, Phase phase);

// Masked-reconstruction losses for both branches at a given step.
struct DistillLosses {
    Tensor frame;
    Tensor event;
};
DistillLosses distill_losses(Tape& tape, const Model& bound, const ModelConfig& cfg,
                             const PipelineOutput& out, std::uint64_t step);

DistillConfig distill_config(const ModelConfig& cfg);

}  // namespace evfuse
