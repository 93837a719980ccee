#pragma once

#include <array>
#include <functional>
#include <string>

#include "evfuse/config.hpp"
#include "evfuse/distill.hpp"
#include "evfuse/encoder.hpp"
#include "evfuse/fusion.hpp"
#include "evfuse/hypergraph_attention.hpp"

namespace evfuse {

// All trainable state. Generators exist regardless of the distillation
// weights so that toggling them never shifts the init stream.
struct Model {
    EncoderParams enc_frame;
    EncoderParams enc_event;
    AttentionParams attention;
    PafpnParams pafpn;
    ToyHeadParams head;
    std::array<GeneratorParams, 3> gen_frame;
    std::array<GeneratorParams, 3> gen_event;
};

// Seeded init in a fixed, documented order; identical seed implies
// bit-identical parameters whatever the other config toggles say.
Model init_model(const ModelConfig& cfg);

// Visits every parameter tensor in the same fixed order as init_model
// creates them. Names are dotted paths ("enc_frame.s0.w_in", ...).
void for_each_param(Model& model, const std::function<void(const std::string&, Tensor&)>& fn);
void for_each_param(const Model& model,
                    const std::function<void(const std::string&, const Tensor&)>& fn);

std::size_t param_count(const Model& model);

// Copy of the model whose tensors are registered as gradient leaves on the
// tape (buffers shared with the original).
Model bind_model(Tape& tape, const Model& model);

}  // namespace evfuse
