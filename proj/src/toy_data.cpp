#include "evfuse/toy_data.hpp"

#include <algorithm>

#include "evfuse/rng.hpp"

namespace evfuse {

namespace {

constexpr std::uint64_t kToyStreamTag = 0x746F79ull;  // "toy"
constexpr std::size_t kEpisodeLength = 8;
constexpr double kSquareIntensity = 0.9;

struct Episode {
    Tensor background;  // [1 x H x W]
    std::size_t size = 0;
    std::size_t x0 = 0, y0 = 0;
    long dx = 0, dy = 0;
};

Episode make_episode(const ModelConfig& cfg, std::uint64_t episode_index) {
    const std::size_t n = cfg.image_size;
    SplitMix64 rng(SplitMix64::mix(cfg.seed, kToyStreamTag, episode_index));

    Episode ep;
    ep.background = Tensor::zeros({1, n, n});
    for (std::size_t i = 0; i < n * n; ++i) ep.background.set(i, rng.next_uniform(0.05, 0.30));

    const std::size_t min_size = std::max<std::size_t>(2, n / 8);
    const std::size_t max_size = std::max<std::size_t>(min_size + 1, n / 4);
    ep.size = min_size + rng.next_below(max_size - min_size + 1);
    ep.x0 = rng.next_below(n);
    ep.y0 = rng.next_below(n);
    // direction in {-2, 0, 2}^2 minus (0, 0)
    do {
        ep.dx = 2 * (static_cast<long>(rng.next_below(3)) - 1);
        ep.dy = 2 * (static_cast<long>(rng.next_below(3)) - 1);
    } while (ep.dx == 0 && ep.dy == 0);
    return ep;
}

std::size_t wrap(long v, std::size_t n) {
    long m = v % static_cast<long>(n);
    if (m < 0) m += static_cast<long>(n);
    return static_cast<std::size_t>(m);
}

Tensor render(const Episode& ep, std::uint64_t frame_index, std::size_t n) {
    Tensor frame = ep.background.detach();
    const std::size_t ox = wrap(static_cast<long>(ep.x0) + ep.dx * static_cast<long>(frame_index), n);
    const std::size_t oy = wrap(static_cast<long>(ep.y0) + ep.dy * static_cast<long>(frame_index), n);
    for (std::size_t dy = 0; dy < ep.size; ++dy) {
        for (std::size_t dx = 0; dx < ep.size; ++dx) {
            frame.set(0, (oy + dy) % n, (ox + dx) % n, kSquareIntensity);
        }
    }
    return frame;
}

}  // namespace

ToySample toy_sample(const ModelConfig& cfg, std::uint64_t step) {
    const std::size_t n = cfg.image_size;
    const Episode ep = make_episode(cfg, step / kEpisodeLength);
    const std::uint64_t pos = step % kEpisodeLength;

    ToySample sample;
    Tensor prev = render(ep, pos, n);
    sample.frame = render(ep, pos + 1, n);
    sample.events = synth_events(prev, sample.frame, cfg.event_threshold, 0, 10000);

    // one positive cell: the square's (wrapped) centre on the scale-3 grid
    const std::size_t stride = cfg.stride_base;
    const std::size_t grid = n / stride;
    const std::size_t cx = wrap(static_cast<long>(ep.x0) + ep.dx * static_cast<long>(pos + 1) +
                                    static_cast<long>(ep.size / 2),
                                n);
    const std::size_t cy = wrap(static_cast<long>(ep.y0) + ep.dy * static_cast<long>(pos + 1) +
                                    static_cast<long>(ep.size / 2),
                                n);
    const std::size_t cell = (cy / stride) * grid + cx / stride;

    Targets& tg = sample.targets;
    tg.h = grid;
    tg.w = grid;
    tg.objectness.assign(grid * grid, 0.0);
    tg.objectness[cell] = 1.0;
    tg.positive_cells = {cell};
    const double fs = static_cast<double>(stride);
    tg.box_offsets = {{(static_cast<double>(cx) - static_cast<double>((cx / stride) * stride)) / fs,
                       (static_cast<double>(cy) - static_cast<double>((cy / stride) * stride)) / fs,
                       static_cast<double>(ep.size) / fs, static_cast<double>(ep.size) / fs}};
    const std::size_t class_threshold = (std::max<std::size_t>(2, n / 8) + std::max<std::size_t>(3, n / 4)) / 2;
    tg.class_ids = {cfg.num_classes > 1 && ep.size >= class_threshold ? std::size_t{1} : std::size_t{0}};
    return sample;
}

}  // namespace evfuse
