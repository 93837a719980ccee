#include "evfuse/hypergraph_attention.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "evfuse/counters.hpp"
#include "evfuse/errors.hpp"
#include "evfuse/features.hpp"

namespace evfuse {

namespace {

// Residual attention block shared by both directions. queries double as the
// residual; keyvals provide keys and values.
Tensor attend(Tape& tape, const Tensor& queries, const Tensor& keyvals, const LinearParams& wq,
              const LinearParams& wk, const LinearParams& wv, const LinearParams& wo,
              std::size_t heads) {
    const std::size_t c = queries.extent(1);
    if (keyvals.extent(1) != c) {
        throw ShapeError("attention width mismatch: " + queries.shape_str() + " vs " +
                         keyvals.shape_str());
    }
    if (heads == 0 || c % heads != 0) {
        throw ConfigError("head count " + std::to_string(heads) + " must divide channel width " +
                          std::to_string(c));
    }
    const std::size_t dh = c / heads;
    const std::size_t rq = queries.extent(0), rk = keyvals.extent(0);

    Tensor q = linear(tape, queries, wq);
    Tensor k = linear(tape, keyvals, wk);
    Tensor v = linear(tape, keyvals, wv);

    Tensor mixed;
    for (std::size_t h = 0; h < heads; ++h) {
        Tensor qh = tape.slice_cols(q, h * dh, (h + 1) * dh);
        Tensor kh = tape.slice_cols(k, h * dh, (h + 1) * dh);
        Tensor vh = tape.slice_cols(v, h * dh, (h + 1) * dh);
        Tensor scores = tape.scale(tape.matmul(qh, tape.transpose(kh)),
                                   1.0 / std::sqrt(static_cast<double>(dh)));
        counters::get().attn_score_mults += rq * rk * dh;
        Tensor weights = tape.softmax_rows(scores);
        Tensor head_out = tape.matmul(weights, vh);
        counters::get().attn_value_mults += rq * rk * dh;
        mixed = (h == 0) ? head_out : tape.concat_cols(mixed, head_out);
    }
    return tape.add(queries, linear(tape, mixed, wo));
}

}  // namespace

AttentionParams init_attention(std::size_t channels, std::size_t heads, SplitMix64& rng) {
    if (heads == 0 || channels % heads != 0) {
        throw ConfigError("head count " + std::to_string(heads) + " must divide channel width " +
                          std::to_string(channels));
    }
    AttentionParams p;
    p.heads = heads;
    p.to_edge_q = init_linear(channels, channels, false, rng);
    p.to_edge_k = init_linear(channels, channels, false, rng);
    p.to_edge_v = init_linear(channels, channels, false, rng);
    p.to_edge_o = init_linear(channels, channels, false, rng);
    p.to_vertex_q = init_linear(channels, channels, false, rng);
    p.to_vertex_k = init_linear(channels, channels, false, rng);
    p.to_vertex_v = init_linear(channels, channels, false, rng);
    p.to_vertex_o = init_linear(channels, channels, false, rng);
    return p;
}

Tensor vertex_to_edge(Tape& tape, const Tensor& verts, const Tensor& edges,
                      const AttentionParams& params) {
    return attend(tape, edges, verts, params.to_edge_q, params.to_edge_k, params.to_edge_v,
                  params.to_edge_o, params.heads);
}

Tensor edge_to_vertex(Tape& tape, const Tensor& verts, const Tensor& refined_edges,
                      const AttentionParams& params) {
    return attend(tape, verts, refined_edges, params.to_vertex_q, params.to_vertex_k,
                  params.to_vertex_v, params.to_vertex_o, params.heads);
}

Tensor hypergraph_attention(Tape& tape, const Tensor& verts, const Tensor& edges,
                            const AttentionParams& params) {
    return edge_to_vertex(tape, verts, vertex_to_edge(tape, verts, edges, params), params);
}

std::pair<Tensor, Tensor> split_modalities(Tape& tape, const Tensor& fused_rows, std::size_t h,
                                           std::size_t w) {
    const std::size_t hw = h * w;
    if (fused_rows.ndim() != 2 || fused_rows.extent(0) != 2 * hw) {
        throw ShapeError("split_modalities expects [" + std::to_string(2 * hw) + " x c], got " +
                         fused_rows.shape_str());
    }
    auto [frame_rows, event_rows] = tape.split_rows(fused_rows, hw);
    return {rows_to_chw(tape, frame_rows, h, w), rows_to_chw(tape, event_rows, h, w)};
}

std::vector<std::size_t> SparseSelection::vertex_rows() const {
    std::vector<std::size_t> rows;
    rows.reserve(2 * cells.size());
    for (std::size_t c : cells) rows.push_back(c);
    for (std::size_t c : cells) rows.push_back(grid_cells + c);
    return rows;
}

SparseSelection select_sparse_tokens(const ActivityMap& am, double rho) {
    if (!(rho > 0.0) || rho > 1.0) {
        throw ConfigError("sparsity ratio must lie in (0, 1], got " + std::to_string(rho));
    }
    const std::size_t hw = am.grid.size();
    const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(rho * static_cast<double>(hw))));

    std::vector<std::size_t> order(hw);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (am.grid.at(a) != am.grid.at(b)) return am.grid.at(a) > am.grid.at(b);
        return a < b;  // ties to the lower raster index
    });
    order.resize(std::min(keep, hw));
    std::sort(order.begin(), order.end());

    SparseSelection sel;
    sel.cells = std::move(order);
    sel.grid_cells = hw;
    sel.rho = rho;
    return sel;
}

Tensor sparse_hypergraph_attention(Tape& tape, const Tensor& verts, const Tensor& edges,
                                   const AttentionParams& params, const SparseSelection& selection) {
    const std::size_t hw = selection.grid_cells;
    if (verts.extent(0) != 2 * hw) {
        throw ShapeError("sparse selection built for " + std::to_string(2 * hw) +
                         " vertex rows, got " + verts.shape_str());
    }
    const std::vector<std::size_t> rows = selection.vertex_rows();
    Tensor subset = tape.gather_rows(verts, rows);
    Tensor refined = hypergraph_attention(tape, subset, edges, params);
    return tape.scatter_rows(verts, refined, rows);
}

}  // namespace evfuse
