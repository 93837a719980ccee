#pragma once

#include <cstdint>

namespace evfuse::counters {

// Instrumentation counters. attn_score_mults/attn_value_mults count scalar
// multiplies inside the attention score (Q·K^T) and value (weights·V)
// products only; projections are excluded so the counts scale with the token
// subset. mask_draws and generator_calls exist to prove the inference path
// never touches the distillation machinery.
struct Counters {
    std::uint64_t attn_score_mults = 0;
    std::uint64_t attn_value_mults = 0;
    std::uint64_t mask_draws = 0;
    std::uint64_t generator_calls = 0;

    std::uint64_t attn_total() const { return attn_score_mults + attn_value_mults; }
};

Counters& get();
void reset();

}  // namespace evfuse::counters
