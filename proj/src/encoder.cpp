#include "evfuse/encoder.hpp"

#include <cmath>
#include <string>

#include "evfuse/errors.hpp"

namespace evfuse {

namespace {

// One row per patch, columns ordered (channel, dy, dx).
std::vector<std::size_t> patch_index_map(std::size_t ch, std::size_t h, std::size_t w, std::size_t s) {
    const std::size_t ph = h / s, pw = w / s;
    std::vector<std::size_t> idx;
    idx.reserve(ph * pw * ch * s * s);
    for (std::size_t py = 0; py < ph; ++py) {
        for (std::size_t px = 0; px < pw; ++px) {
            for (std::size_t c = 0; c < ch; ++c) {
                for (std::size_t dy = 0; dy < s; ++dy) {
                    for (std::size_t dx = 0; dx < s; ++dx) {
                        idx.push_back((c * h + py * s + dy) * w + px * s + dx);
                    }
                }
            }
        }
    }
    return idx;
}

}  // namespace

LinearParams init_linear(std::size_t in, std::size_t out, bool with_bias, SplitMix64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    LinearParams p;
    p.weight = Tensor::zeros({in, out});
    for (std::size_t i = 0; i < p.weight.size(); ++i) p.weight.set(i, rng.next_uniform(-bound, bound));
    if (with_bias) {
        p.bias = Tensor::zeros({out});
        for (std::size_t i = 0; i < p.bias.size(); ++i) p.bias.set(i, rng.next_uniform(-bound, bound));
    }
    return p;
}

EncoderParams init_encoder(std::size_t in_channels, std::size_t channels, std::size_t stride_base,
                           SplitMix64& rng) {
    EncoderParams p;
    p.in_channels = in_channels;
    p.channels = channels;
    p.stride_base = stride_base;
    for (std::size_t i = 0; i < 3; ++i) {
        const std::size_t s = stride_base << i;
        p.scales[i].proj_in = init_linear(in_channels * s * s, channels, true, rng);
        p.scales[i].proj_out = init_linear(channels, channels, true, rng);
    }
    return p;
}

FeaturePyramid encode(Tape& tape, const Tensor& image, const EncoderParams& params) {
    if (image.ndim() != 3 || image.extent(0) != params.in_channels) {
        throw ShapeError("encode expects [" + std::to_string(params.in_channels) + " x H x W], got " +
                         image.shape_str());
    }
    const std::size_t h = image.extent(1), w = image.extent(2);
    const std::size_t max_stride = params.stride_base * 4;
    if (h % max_stride != 0 || w % max_stride != 0) {
        throw ConfigError("image size " + std::to_string(w) + "x" + std::to_string(h) +
                          " not divisible by the coarsest stride " + std::to_string(max_stride));
    }

    std::array<Tensor, 3> maps;
    for (std::size_t i = 0; i < 3; ++i) {
        const std::size_t s = params.stride_base << i;
        const std::size_t ph = h / s, pw = w / s;
        Tensor patches = tape.gather_flat(image, patch_index_map(params.in_channels, h, w, s),
                                          {ph * pw, params.in_channels * s * s});
        Tensor hidden = tape.relu(linear(tape, patches, params.scales[i].proj_in));
        Tensor rows = linear(tape, hidden, params.scales[i].proj_out);
        maps[i] = rows_to_chw(tape, rows, ph, pw);
    }
    return FeaturePyramid{maps[0], maps[1], maps[2]};
}

}  // namespace evfuse
