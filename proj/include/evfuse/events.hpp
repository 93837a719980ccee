#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "evfuse/tensor.hpp"

namespace evfuse {

// One camera event: timestamp in microseconds, pixel position, polarity bit.
struct Event {
    std::uint64_t t = 0;
    std::uint32_t x = 0;
    std::uint32_t y = 0;
    std::uint8_t polarity = 0;

    bool operator==(const Event&) const = default;
};

// Events sorted by timestamp (non-decreasing) with all coordinates inside
// the declared sensor size.
struct EventStream {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<Event> events;

    bool operator==(const EventStream&) const = default;
};

// Per-token event counts on the scale-5 grid.
struct ActivityMap {
    Tensor grid;  // [h_tok x w_tok], non-negative counts
    std::size_t token_stride = 0;
};

// CSV lines "t_us,x,y,p", optional header, LF endings. Out-of-range
// coordinates or polarity raise ParseError with the line number;
// non-monotone timestamps are repaired with a stable sort plus a warning on
// stderr.
EventStream parse_events(std::istream& in, std::size_t width, std::size_t height);
EventStream parse_events_file(const std::string& path, std::size_t width, std::size_t height);
std::string serialize_events(const EventStream& s);

// Two-channel per-polarity count image over [t0, t1), each channel
// max-normalised (all-zero channels stay zero).
Tensor events_to_frame(const EventStream& s, std::uint64_t t0, std::uint64_t t1);

// grid[i][j] = number of window events with floor(y/stride) = i,
// floor(x/stride) = j. stride must divide both sensor dimensions.
ActivityMap activity_map(const EventStream& s, std::uint64_t t0, std::uint64_t t1,
                         std::size_t token_stride);

// Deterministic contrast-threshold model for test data: per pixel emits
// floor(|log(b+eps) - log(a+eps)| / theta) events of the log-difference's
// sign, timestamps evenly spaced in [t0, t1). eps = 1e-3.
EventStream synth_events(const Tensor& frame_a, const Tensor& frame_b, double theta,
                         std::uint64_t t0, std::uint64_t t1);

}  // namespace evfuse
