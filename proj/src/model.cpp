#include "evfuse/model.hpp"

namespace evfuse {

namespace {

constexpr std::uint64_t kInitStreamTag = 0x696E6974ull;  // "init"

template <typename ModelT, typename Fn>
void visit_params(ModelT& model, Fn&& fn) {
    auto visit_linear = [&](const std::string& name, auto& lp) {
        fn(name + ".weight", lp.weight);
        if (lp.bias.defined()) fn(name + ".bias", lp.bias);
    };
    auto visit_encoder = [&](const std::string& name, auto& enc) {
        for (std::size_t i = 0; i < 3; ++i) {
            const std::string scale = name + ".s" + std::to_string(i);
            visit_linear(scale + ".proj_in", enc.scales[i].proj_in);
            visit_linear(scale + ".proj_out", enc.scales[i].proj_out);
        }
    };
    auto visit_attention = [&](const std::string& name, auto& att) {
        visit_linear(name + ".to_edge_q", att.to_edge_q);
        visit_linear(name + ".to_edge_k", att.to_edge_k);
        visit_linear(name + ".to_edge_v", att.to_edge_v);
        visit_linear(name + ".to_edge_o", att.to_edge_o);
        visit_linear(name + ".to_vertex_q", att.to_vertex_q);
        visit_linear(name + ".to_vertex_k", att.to_vertex_k);
        visit_linear(name + ".to_vertex_v", att.to_vertex_v);
        visit_linear(name + ".to_vertex_o", att.to_vertex_o);
    };

    visit_encoder("enc_frame", model.enc_frame);
    visit_encoder("enc_event", model.enc_event);
    visit_attention("attention", model.attention);
    for (std::size_t i = 0; i < 3; ++i) {
        visit_linear("pafpn.lateral" + std::to_string(i + 3), model.pafpn.lateral[i]);
    }
    for (std::size_t i = 0; i < 3; ++i) {
        visit_linear("pafpn.merge" + std::to_string(i + 3), model.pafpn.merge[i]);
    }
    visit_linear("head", model.head.proj);
    for (std::size_t i = 0; i < 3; ++i) {
        visit_attention("gen_frame.s" + std::to_string(i + 3), model.gen_frame[i].attention);
    }
    for (std::size_t i = 0; i < 3; ++i) {
        visit_attention("gen_event.s" + std::to_string(i + 3), model.gen_event[i].attention);
    }
}

}  // namespace

Model init_model(const ModelConfig& cfg) {
    validate_config(cfg);
    SplitMix64 rng(SplitMix64::mix(cfg.seed, kInitStreamTag));
    Model m;
    m.enc_frame = init_encoder(cfg.frame_channels, cfg.channels, cfg.stride_base, rng);
    m.enc_event = init_encoder(2, cfg.channels, cfg.stride_base, rng);
    m.attention = init_attention(cfg.channels, cfg.heads, rng);
    m.pafpn = init_pafpn(cfg.channels, rng);
    m.head = init_toy_head(cfg.channels, cfg.num_classes, rng);
    for (std::size_t i = 0; i < 3; ++i) m.gen_frame[i] = init_generator(cfg.channels, cfg.heads, rng);
    for (std::size_t i = 0; i < 3; ++i) m.gen_event[i] = init_generator(cfg.channels, cfg.heads, rng);
    return m;
}

void for_each_param(Model& model, const std::function<void(const std::string&, Tensor&)>& fn) {
    visit_params(model, fn);
}

void for_each_param(const Model& model,
                    const std::function<void(const std::string&, const Tensor&)>& fn) {
    visit_params(model, fn);
}

std::size_t param_count(const Model& model) {
    std::size_t n = 0;
    for_each_param(model, [&](const std::string&, const Tensor& t) { n += t.size(); });
    return n;
}

Model bind_model(Tape& tape, const Model& model) {
    Model bound = model;
    for_each_param(bound, [&](const std::string&, Tensor& t) { t = tape.leaf(t); });
    return bound;
}

}  // namespace evfuse
