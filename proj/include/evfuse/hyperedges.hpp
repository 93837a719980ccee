#pragma once

#include <cstddef>
#include <vector>

#include "evfuse/tape.hpp"
#include "evfuse/tensor.hpp"

namespace evfuse {

struct EdgeProvenance {
    enum class Source { Frame, Event, Refined };
    Source source = Source::Refined;
    std::size_t cell = 0;  // pooling cell index for the initial set
};

// m hyperedge feature vectors of width c.
struct HyperedgeSet {
    Tensor edges;  // [m x c]
    std::vector<EdgeProvenance> provenance;

    std::size_t count() const { return edges.extent(0); }
};

// Cross-modal vertex rows: the first h*w rows come from the frame map in
// raster order, the rest from the event map.
struct VertexSet {
    Tensor rows;  // [2hw x c]
    std::size_t h = 0;
    std::size_t w = 0;
};

struct FcmConfig {
    std::size_t iterations = 0;
    double fuzzifier = 2.0;
    double dist_floor = 1e-8;
};

// Pools each modality to k x k cells and stacks the flattened cells:
// 2*k^2 edges, frame cells first.
HyperedgeSet build_initial_hyperedges(Tape& tape, const Tensor& frame5, const Tensor& event5,
                                      std::size_t k);

VertexSet concat_vertices(Tape& tape, const Tensor& frame5, const Tensor& event5);

// One membership matrix [m x n]: column j holds vertex j's memberships
// across the m edges (columns sum to 1). Exposed for the invariant tests;
// fcm_refine uses it per iteration.
Tensor fcm_memberships(Tape& tape, const Tensor& edges, const Tensor& verts, const FcmConfig& cfg);

// Unrolled fuzzy C-means starting from the initial edges; fully
// differentiable through all iterations. iterations = 0 returns the input
// set unchanged.
HyperedgeSet fcm_refine(Tape& tape, const HyperedgeSet& init, const VertexSet& verts,
                        const FcmConfig& cfg);

}  // namespace evfuse
