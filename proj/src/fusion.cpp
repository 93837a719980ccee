#include "evfuse/fusion.hpp"

#include <string>

#include "evfuse/errors.hpp"

namespace evfuse {

namespace {

Tensor add_level(Tape& tape, const Tensor& a, const Tensor& b, const char* level) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string("fuse_add level ") + level + " shape mismatch: " + a.shape_str() +
                         " vs " + b.shape_str());
    }
    return tape.add(a, b);
}

// positionwise linear + ReLU
Tensor project(Tape& tape, const Tensor& chw, const LinearParams& p) {
    const std::size_t h = chw.extent(1), w = chw.extent(2);
    Tensor rows = chw_to_rows(tape, chw);
    return rows_to_chw(tape, tape.relu(linear(tape, rows, p)), h, w);
}

Tensor downsample2x(Tape& tape, const Tensor& chw) {
    return tape.adaptive_avg_pool(chw, chw.extent(1) / 2);
}

void check_ratio(const Tensor& fine, const Tensor& coarse, const char* pair) {
    if (fine.extent(0) != coarse.extent(0) || fine.extent(1) != 2 * coarse.extent(1) ||
        fine.extent(2) != 2 * coarse.extent(2)) {
        throw ConfigError(std::string("pafpn needs a strict 2x ratio between levels ") + pair + ": " +
                          fine.shape_str() + " vs " + coarse.shape_str());
    }
}

}  // namespace

PafpnParams init_pafpn(std::size_t channels, SplitMix64& rng) {
    PafpnParams p;
    for (std::size_t i = 0; i < 3; ++i) p.lateral[i] = init_linear(channels, channels, true, rng);
    for (std::size_t i = 0; i < 3; ++i) p.merge[i] = init_linear(channels, channels, true, rng);
    return p;
}

FeaturePyramid fuse_add(Tape& tape, const FeaturePyramid& f, const FeaturePyramid& s) {
    return FeaturePyramid{add_level(tape, f.f3, s.f3, "3"), add_level(tape, f.f4, s.f4, "4"),
                          add_level(tape, f.f5, s.f5, "5")};
}

Tensor upsample2x(Tape& tape, const Tensor& chw) {
    const std::size_t c = chw.extent(0), h = chw.extent(1), w = chw.extent(2);
    std::vector<std::size_t> idx;
    idx.reserve(c * 4 * h * w);
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t y = 0; y < 2 * h; ++y) {
            for (std::size_t x = 0; x < 2 * w; ++x) {
                idx.push_back((ch * h + y / 2) * w + x / 2);
            }
        }
    }
    return tape.gather_flat(chw, std::move(idx), {c, 2 * h, 2 * w});
}

FeaturePyramid pafpn(Tape& tape, const FeaturePyramid& p, const PafpnParams& params) {
    check_ratio(p.f3, p.f4, "3/4");
    check_ratio(p.f4, p.f5, "4/5");
    if (p.f5.extent(1) != p.f5.extent(2)) {
        throw ConfigError("pafpn expects square feature maps, got " + p.f5.shape_str());
    }

    // top-down
    Tensor t5 = project(tape, p.f5, params.lateral[2]);
    Tensor t4 = tape.add(project(tape, p.f4, params.lateral[1]), upsample2x(tape, t5));
    Tensor t3 = tape.add(project(tape, p.f3, params.lateral[0]), upsample2x(tape, t4));

    // bottom-up
    Tensor o3 = project(tape, t3, params.merge[0]);
    Tensor o4 = tape.add(project(tape, t4, params.merge[1]), downsample2x(tape, o3));
    Tensor o5 = tape.add(project(tape, t5, params.merge[2]), downsample2x(tape, o4));
    return FeaturePyramid{o3, o4, o5};
}

}  // namespace evfuse
