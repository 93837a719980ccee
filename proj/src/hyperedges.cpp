#include "evfuse/hyperedges.hpp"

#include <atomic>
#include <iostream>
#include <string>

#include "evfuse/errors.hpp"
#include "evfuse/features.hpp"

namespace evfuse {

namespace {

// [c x h x w] -> k^2 rows of width c via pooling; row p is pooling cell
// (p / k, p % k).
Tensor pooled_edge_rows(Tape& tape, const Tensor& map, std::size_t k) {
    const std::size_t c = map.extent(0);
    Tensor pooled = tape.adaptive_avg_pool(map, k);
    return tape.transpose(tape.reshape(pooled, {c, k * k}));
}

void check_pair(const Tensor& frame5, const Tensor& event5, const char* what) {
    if (frame5.ndim() != 3 || !frame5.same_shape(event5)) {
        throw ShapeError(std::string(what) + " expects matching [c x h x w] maps, got " +
                         frame5.shape_str() + " vs " + event5.shape_str());
    }
}

}  // namespace

HyperedgeSet build_initial_hyperedges(Tape& tape, const Tensor& frame5, const Tensor& event5,
                                      std::size_t k) {
    check_pair(frame5, event5, "build_initial_hyperedges");
    if (k == 0) throw ConfigError("hyperedge pooling size k must be positive");

    HyperedgeSet set;
    set.edges = tape.concat_rows(pooled_edge_rows(tape, frame5, k), pooled_edge_rows(tape, event5, k));
    set.provenance.reserve(2 * k * k);
    for (std::size_t cell = 0; cell < k * k; ++cell) {
        set.provenance.push_back({EdgeProvenance::Source::Frame, cell});
    }
    for (std::size_t cell = 0; cell < k * k; ++cell) {
        set.provenance.push_back({EdgeProvenance::Source::Event, cell});
    }
    return set;
}

VertexSet concat_vertices(Tape& tape, const Tensor& frame5, const Tensor& event5) {
    check_pair(frame5, event5, "concat_vertices");
    VertexSet verts;
    verts.h = frame5.extent(1);
    verts.w = frame5.extent(2);
    verts.rows = tape.concat_rows(chw_to_rows(tape, frame5), chw_to_rows(tape, event5));
    return verts;
}

Tensor fcm_memberships(Tape& tape, const Tensor& edges, const Tensor& verts, const FcmConfig& cfg) {
    // u_ij = d_ij^(-2/(f-1)) / sum_l d_lj^(-2/(f-1))
    Tensor dist = tape.pairwise_distance(edges, verts, cfg.dist_floor);
    Tensor affinity = tape.pow_scalar(dist, -2.0 / (cfg.fuzzifier - 1.0));
    Tensor by_vertex = tape.transpose(affinity);  // [n x m]
    Tensor normalised = tape.div_rows(by_vertex, tape.row_sum(by_vertex));
    return tape.transpose(normalised);  // [m x n]
}

HyperedgeSet fcm_refine(Tape& tape, const HyperedgeSet& init, const VertexSet& verts,
                        const FcmConfig& cfg) {
    if (!(cfg.fuzzifier > 1.0)) throw ConfigError("FCM fuzzifier must be > 1");
    if (!(cfg.dist_floor > 0.0)) throw ConfigError("FCM distance floor must be positive");
    const std::size_t m = init.edges.extent(0);
    const std::size_t n = verts.rows.extent(0);
    if (init.edges.extent(1) != verts.rows.extent(1)) {
        throw ShapeError("hyperedge/vertex width mismatch: " + init.edges.shape_str() + " vs " +
                         verts.rows.shape_str());
    }
    if (m > n) {
        static std::atomic<bool> warned{false};
        if (!warned.exchange(true)) {
            std::cerr << "warning: " << m << " hyperedges over only " << n
                      << " vertices; clustering is overcomplete (reported once)\n";
        }
    }
    if (cfg.iterations == 0) return init;

    Tensor edges = init.edges;
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        Tensor memberships = fcm_memberships(tape, edges, verts.rows, cfg);
        Tensor weights = tape.pow_scalar(memberships, cfg.fuzzifier);  // [m x n]
        edges = tape.div_rows(tape.matmul(weights, verts.rows), tape.row_sum(weights));
    }

    HyperedgeSet refined;
    refined.edges = edges;
    refined.provenance.assign(m, EdgeProvenance{EdgeProvenance::Source::Refined, 0});
    return refined;
}

}  // namespace evfuse
