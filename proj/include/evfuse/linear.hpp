#pragma once

#include "evfuse/rng.hpp"
#include "evfuse/tape.hpp"
#include "evfuse/tensor.hpp"

namespace evfuse {

// weight [in x out], optional bias [out] (undefined tensor = none).
struct LinearParams {
    Tensor weight;
    Tensor bias;

    bool has_bias() const { return bias.defined(); }
};

// x [n x in] -> [n x out]
inline Tensor linear(Tape& tape, const Tensor& x, const LinearParams& p) {
    Tensor out = tape.matmul(x, p.weight);
    if (p.has_bias()) out = tape.add_bias(out, p.bias);
    return out;
}

// Uniform init in [-1/sqrt(in), 1/sqrt(in)] for weight and bias.
LinearParams init_linear(std::size_t in, std::size_t out, bool with_bias, SplitMix64& rng);

}  // namespace evfuse
