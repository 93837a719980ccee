#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

namespace evfuse {

// Every runtime knob, serialisable to/from the `key = value` config format.
struct ModelConfig {
    std::size_t image_size = 64;
    std::size_t channels = 32;
    std::size_t frame_channels = 1;
    std::size_t stride_base = 8;     // pyramid strides are s, 2s, 4s
    std::size_t hyperedge_k = 2;     // pooling grid; 2k^2 hyperedges
    std::size_t heads = 4;
    std::size_t fcm_train_iters = 30;
    std::size_t fcm_infer_iters = 5;
    double fuzzifier = 2.0;
    double fcm_dist_floor = 1e-8;
    bool sparse = true;
    double rho = 0.5;
    double mask_ratio = 0.65;
    double lambda1 = 2e-5;
    double lambda2 = 2e-5;
    std::size_t gen_hyperedges = 4;
    std::size_t gen_fcm_iters = 3;
    std::uint64_t seed = 1;
    std::size_t num_classes = 2;
    double learning_rate = 0.01;
    double event_threshold = 0.2;

    bool operator==(const ModelConfig&) const = default;

    std::size_t hyperedge_count() const { return 2 * hyperedge_k * hyperedge_k; }
    std::size_t scale5_stride() const { return 4 * stride_base; }
};

// Plain-text `key = value` lines; '#' starts a comment; unknown keys are
// errors.
ModelConfig parse_config(std::istream& in);
ModelConfig parse_config_file(const std::string& path);
std::string serialize_config(const ModelConfig& cfg);

// Cross-field constraints; ConfigError on violation.
void validate_config(const ModelConfig& cfg);

}  // namespace evfuse
