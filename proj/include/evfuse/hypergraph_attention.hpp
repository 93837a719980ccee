#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "evfuse/events.hpp"
#include "evfuse/linear.hpp"
#include "evfuse/rng.hpp"
#include "evfuse/tape.hpp"

namespace evfuse {

// Two four-projection sets (one per message direction) plus the head count.
// All projections are bias-free c -> c maps; c must be divisible by heads.
struct AttentionParams {
    LinearParams to_edge_q, to_edge_k, to_edge_v, to_edge_o;
    LinearParams to_vertex_q, to_vertex_k, to_vertex_v, to_vertex_o;
    std::size_t heads = 1;
};

AttentionParams init_attention(std::size_t channels, std::size_t heads, SplitMix64& rng);

// Aggregation: edges attend over vertices, residual on the edges.
// E' = E + [softmax((E Wq)(X Wk)^T / sqrt(c/heads)) (X Wv)] Wo
Tensor vertex_to_edge(Tape& tape, const Tensor& verts, const Tensor& edges,
                      const AttentionParams& params);

// Distribution: vertices attend over refined edges, residual on the vertices.
Tensor edge_to_vertex(Tape& tape, const Tensor& verts, const Tensor& refined_edges,
                      const AttentionParams& params);

// Full round trip: edge_to_vertex(X, vertex_to_edge(X, E)).
Tensor hypergraph_attention(Tape& tape, const Tensor& verts, const Tensor& edges,
                            const AttentionParams& params);

// [2hw x c] -> frame and event [c x h x w]; exact inverse of concat_vertices.
std::pair<Tensor, Tensor> split_modalities(Tape& tape, const Tensor& fused_rows, std::size_t h,
                                           std::size_t w);

// Token cells retained by the event-guided sparse path. Frame and event
// modalities share the same spatial cells.
struct SparseSelection {
    std::vector<std::size_t> cells;  // ascending raster indices on the scale-5 grid
    std::size_t grid_cells = 0;      // hw of that grid
    double rho = 1.0;

    bool all_selected() const { return cells.size() == grid_cells; }
    // Vertex row indices into a [2hw x c] vertex set: frame block rows then
    // event block rows, ascending.
    std::vector<std::size_t> vertex_rows() const;
};

// Top-ceil(rho*hw) cells by event count, ties broken toward the lower raster
// index; never fewer than one cell.
SparseSelection select_sparse_tokens(const ActivityMap& am, double rho);

// Runs attention on the selected vertex rows only (edges are whatever the
// caller built, typically from the full maps); unselected rows pass through
// unchanged. With rho = 1 this is bit-identical to hypergraph_attention.
Tensor sparse_hypergraph_attention(Tape& tape, const Tensor& verts, const Tensor& edges,
                                   const AttentionParams& params, const SparseSelection& selection);

}  // namespace evfuse
