#pragma once

#include "evfuse/tape.hpp"
#include "evfuse/tensor.hpp"

namespace evfuse {

// Three feature maps at strides s/2s/4s, shared channel count.
struct FeaturePyramid {
    Tensor f3;  // [c x H/s   x W/s]
    Tensor f4;  // [c x H/2s  x W/2s]
    Tensor f5;  // [c x H/4s  x W/4s]
};

// [c x h x w] -> [hw x c], raster order: row j is pixel (j / w, j % w).
inline Tensor chw_to_rows(Tape& tape, const Tensor& chw) {
    const std::size_t c = chw.extent(0), h = chw.extent(1), w = chw.extent(2);
    return tape.transpose(tape.reshape(chw, {c, h * w}));
}

// [hw x c] -> [c x h x w], inverse of chw_to_rows.
inline Tensor rows_to_chw(Tape& tape, const Tensor& rows, std::size_t h, std::size_t w) {
    const std::size_t c = rows.extent(1);
    return tape.reshape(tape.transpose(rows), {c, h, w});
}

}  // namespace evfuse
