#pragma once

#include <cstdint>

namespace evfuse {

// splitmix64. Single source of randomness for the whole project: weight
// init, masks, toy data. Substreams are derived with mix() so toggling one
// consumer cannot shift another consumer's draws.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

    // Uniform integer in [0, n). n must be > 0.
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

    // Deterministic substream derivation: feeds both words through the
    // splitmix finalizer so nearby tuples land far apart.
    static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
        SplitMix64 m(a ^ (0x9E3779B97F4A7C15ull * (b + 0x632BE59BD9B4E019ull)));
        return m.next_u64();
    }

    static std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
        return mix(mix(a, b), c);
    }

    static std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
        return mix(mix(a, b, c), d);
    }

private:
    std::uint64_t state_;
};

}  // namespace evfuse
