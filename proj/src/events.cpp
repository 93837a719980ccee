#include "evfuse/events.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "evfuse/errors.hpp"

namespace evfuse {

namespace {

constexpr double kLogEps = 1e-3;

bool parse_u64(const std::string& field, std::uint64_t& out) {
    if (field.empty()) return false;
    out = 0;
    for (char ch : field) {
        if (ch < '0' || ch > '9') return false;
        out = out * 10 + static_cast<std::uint64_t>(ch - '0');
    }
    return true;
}

}  // namespace

EventStream parse_events(std::istream& in, std::size_t width, std::size_t height) {
    EventStream stream;
    stream.width = width;
    stream.height = height;

    std::string line;
    std::size_t line_no = 0;
    bool sorted = true;
    std::uint64_t last_t = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        // optional header: skip a first line that does not start with a digit
        if (line_no == 1 && (line[0] < '0' || line[0] > '9')) continue;

        std::array<std::string, 4> fields;
        std::size_t field = 0;
        std::string cur;
        for (char ch : line) {
            if (ch == ',') {
                if (field >= 3) throw ParseError("too many fields in event record", line_no);
                fields[field++] = cur;
                cur.clear();
            } else {
                cur += ch;
            }
        }
        if (field != 3) throw ParseError("expected 4 comma-separated fields", line_no);
        fields[3] = cur;

        std::uint64_t t, x, y, p;
        if (!parse_u64(fields[0], t) || !parse_u64(fields[1], x) || !parse_u64(fields[2], y) ||
            !parse_u64(fields[3], p)) {
            throw ParseError("event fields must be non-negative integers", line_no);
        }
        if (x >= width) {
            throw ParseError("x = " + std::to_string(x) + " outside sensor width " + std::to_string(width),
                             line_no);
        }
        if (y >= height) {
            throw ParseError("y = " + std::to_string(y) + " outside sensor height " + std::to_string(height),
                             line_no);
        }
        if (p > 1) throw ParseError("polarity must be 0 or 1, got " + std::to_string(p), line_no);

        if (!stream.events.empty() && t < last_t) sorted = false;
        last_t = t;
        stream.events.push_back(Event{t, static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y),
                                      static_cast<std::uint8_t>(p)});
    }
    if (!sorted) {
        std::cerr << "warning: event stream not sorted by timestamp; applying stable sort\n";
        std::stable_sort(stream.events.begin(), stream.events.end(),
                         [](const Event& a, const Event& b) { return a.t < b.t; });
    }
    return stream;
}

EventStream parse_events_file(const std::string& path, std::size_t width, std::size_t height) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open events file: " + path);
    return parse_events(f, width, height);
}

std::string serialize_events(const EventStream& s) {
    std::ostringstream out;
    for (const Event& e : s.events) {
        out << e.t << ',' << e.x << ',' << e.y << ',' << static_cast<unsigned>(e.polarity) << '\n';
    }
    return out.str();
}

Tensor events_to_frame(const EventStream& s, std::uint64_t t0, std::uint64_t t1) {
    if (t0 >= t1) throw ContractError("events_to_frame window must satisfy t0 < t1");
    const std::size_t h = s.height, w = s.width;
    Tensor counts = Tensor::zeros({2, h, w});
    for (const Event& e : s.events) {
        if (e.t < t0 || e.t >= t1) continue;
        const std::size_t idx = (static_cast<std::size_t>(e.polarity) * h + e.y) * w + e.x;
        counts.set(idx, counts.at(idx) + 1.0);
    }
    for (std::size_t ch = 0; ch < 2; ++ch) {
        double mx = 0.0;
        for (std::size_t i = 0; i < h * w; ++i) mx = std::max(mx, counts.at(ch * h * w + i));
        if (mx > 0.0) {
            for (std::size_t i = 0; i < h * w; ++i) {
                counts.set(ch * h * w + i, counts.at(ch * h * w + i) / mx);
            }
        }
    }
    return counts;
}

ActivityMap activity_map(const EventStream& s, std::uint64_t t0, std::uint64_t t1,
                         std::size_t token_stride) {
    if (token_stride == 0 || s.height % token_stride != 0 || s.width % token_stride != 0) {
        throw ConfigError("token stride " + std::to_string(token_stride) + " does not divide sensor size " +
                          std::to_string(s.width) + "x" + std::to_string(s.height));
    }
    const std::size_t ht = s.height / token_stride, wt = s.width / token_stride;
    ActivityMap am;
    am.grid = Tensor::zeros({ht, wt});
    am.token_stride = token_stride;
    for (const Event& e : s.events) {
        if (e.t < t0 || e.t >= t1) continue;
        const std::size_t i = e.y / token_stride, j = e.x / token_stride;
        am.grid.set(i, j, am.grid.at(i, j) + 1.0);
    }
    return am;
}

EventStream synth_events(const Tensor& frame_a, const Tensor& frame_b, double theta,
                         std::uint64_t t0, std::uint64_t t1) {
    if (!frame_a.same_shape(frame_b)) {
        throw ShapeError("synth_events frame shapes differ: " + frame_a.shape_str() + " vs " +
                         frame_b.shape_str());
    }
    if (frame_a.ndim() != 3 || frame_a.extent(0) != 1) {
        throw ShapeError("synth_events expects [1 x H x W] intensity frames, got " + frame_a.shape_str());
    }
    if (!(theta > 0.0)) throw ConfigError("synth_events threshold must be positive");
    if (t0 >= t1) throw ContractError("synth_events window must satisfy t0 < t1");

    const std::size_t h = frame_a.extent(1), w = frame_a.extent(2);
    EventStream stream;
    stream.width = w;
    stream.height = h;
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const double a = frame_a.at(0, y, x);
            const double b = frame_b.at(0, y, x);
            const double diff = std::log(b + kLogEps) - std::log(a + kLogEps);
            const auto count = static_cast<std::uint64_t>(std::floor(std::abs(diff) / theta));
            if (count == 0) continue;
            const std::uint8_t polarity = diff > 0.0 ? 1 : 0;
            const std::uint64_t span = t1 - t0;
            for (std::uint64_t k = 0; k < count; ++k) {
                stream.events.push_back(Event{t0 + (k * span) / count, static_cast<std::uint32_t>(x),
                                              static_cast<std::uint32_t>(y), polarity});
            }
        }
    }
    std::stable_sort(stream.events.begin(), stream.events.end(),
                     [](const Event& a, const Event& b) { return a.t < b.t; });
    return stream;
}

}  // namespace evfuse
