#include "evfuse/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "evfuse/errors.hpp"

namespace evfuse {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t");
    return s.substr(begin, end - begin + 1);
}

std::size_t to_size(const std::string& v, std::size_t line) {
    try {
        std::size_t pos = 0;
        const unsigned long long parsed = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return static_cast<std::size_t>(parsed);
    } catch (const std::exception&) {
        throw ParseError("expected a non-negative integer, got '" + v + "'", line);
    }
}

double to_double(const std::string& v, std::size_t line) {
    try {
        std::size_t pos = 0;
        const double parsed = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return parsed;
    } catch (const std::exception&) {
        throw ParseError("expected a number, got '" + v + "'", line);
    }
}

bool to_bool(const std::string& v, std::size_t line) {
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    throw ParseError("expected on/off, got '" + v + "'", line);
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

ModelConfig parse_config(std::istream& in) {
    ModelConfig cfg;
    const std::map<std::string, std::function<void(const std::string&, std::size_t)>> setters = {
        {"image_size", [&](const std::string& v, std::size_t l) { cfg.image_size = to_size(v, l); }},
        {"channels", [&](const std::string& v, std::size_t l) { cfg.channels = to_size(v, l); }},
        {"frame_channels", [&](const std::string& v, std::size_t l) { cfg.frame_channels = to_size(v, l); }},
        {"stride_base", [&](const std::string& v, std::size_t l) { cfg.stride_base = to_size(v, l); }},
        {"hyperedge_k", [&](const std::string& v, std::size_t l) { cfg.hyperedge_k = to_size(v, l); }},
        {"heads", [&](const std::string& v, std::size_t l) { cfg.heads = to_size(v, l); }},
        {"fcm_train_iters", [&](const std::string& v, std::size_t l) { cfg.fcm_train_iters = to_size(v, l); }},
        {"fcm_infer_iters", [&](const std::string& v, std::size_t l) { cfg.fcm_infer_iters = to_size(v, l); }},
        {"fuzzifier", [&](const std::string& v, std::size_t l) { cfg.fuzzifier = to_double(v, l); }},
        {"fcm_dist_floor", [&](const std::string& v, std::size_t l) { cfg.fcm_dist_floor = to_double(v, l); }},
        {"sparse", [&](const std::string& v, std::size_t l) { cfg.sparse = to_bool(v, l); }},
        {"rho", [&](const std::string& v, std::size_t l) { cfg.rho = to_double(v, l); }},
        {"mask_ratio", [&](const std::string& v, std::size_t l) { cfg.mask_ratio = to_double(v, l); }},
        {"lambda1", [&](const std::string& v, std::size_t l) { cfg.lambda1 = to_double(v, l); }},
        {"lambda2", [&](const std::string& v, std::size_t l) { cfg.lambda2 = to_double(v, l); }},
        {"gen_hyperedges", [&](const std::string& v, std::size_t l) { cfg.gen_hyperedges = to_size(v, l); }},
        {"gen_fcm_iters", [&](const std::string& v, std::size_t l) { cfg.gen_fcm_iters = to_size(v, l); }},
        {"seed", [&](const std::string& v, std::size_t l) { cfg.seed = to_size(v, l); }},
        {"num_classes", [&](const std::string& v, std::size_t l) { cfg.num_classes = to_size(v, l); }},
        {"learning_rate", [&](const std::string& v, std::size_t l) { cfg.learning_rate = to_double(v, l); }},
        {"event_threshold", [&](const std::string& v, std::size_t l) { cfg.event_threshold = to_double(v, l); }},
    };

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto comment = line.find('#');
        if (comment != std::string::npos) line = line.substr(0, comment);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("expected 'key = value'", line_no);
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto it = setters.find(key);
        if (it == setters.end()) throw ParseError("unknown config key '" + key + "'", line_no);
        it->second(value, line_no);
    }
    return cfg;
}

ModelConfig parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config file: " + path);
    return parse_config(f);
}

std::string serialize_config(const ModelConfig& cfg) {
    std::ostringstream out;
    out << "image_size = " << cfg.image_size << "\n";
    out << "channels = " << cfg.channels << "\n";
    out << "frame_channels = " << cfg.frame_channels << "\n";
    out << "stride_base = " << cfg.stride_base << "\n";
    out << "hyperedge_k = " << cfg.hyperedge_k << "\n";
    out << "heads = " << cfg.heads << "\n";
    out << "fcm_train_iters = " << cfg.fcm_train_iters << "\n";
    out << "fcm_infer_iters = " << cfg.fcm_infer_iters << "\n";
    out << "fuzzifier = " << format_double(cfg.fuzzifier) << "\n";
    out << "fcm_dist_floor = " << format_double(cfg.fcm_dist_floor) << "\n";
    out << "sparse = " << (cfg.sparse ? "on" : "off") << "\n";
    out << "rho = " << format_double(cfg.rho) << "\n";
    out << "mask_ratio = " << format_double(cfg.mask_ratio) << "\n";
    out << "lambda1 = " << format_double(cfg.lambda1) << "\n";
    out << "lambda2 = " << format_double(cfg.lambda2) << "\n";
    out << "gen_hyperedges = " << cfg.gen_hyperedges << "\n";
    out << "gen_fcm_iters = " << cfg.gen_fcm_iters << "\n";
    out << "seed = " << cfg.seed << "\n";
    out << "num_classes = " << cfg.num_classes << "\n";
    out << "learning_rate = " << format_double(cfg.learning_rate) << "\n";
    out << "event_threshold = " << format_double(cfg.event_threshold) << "\n";
    return out.str();
}

void validate_config(const ModelConfig& cfg) {
    auto fail = [](const std::string& msg) { throw ConfigError("config: " + msg); };
    if (cfg.image_size == 0) fail("image_size must be positive");
    if (cfg.stride_base == 0) fail("stride_base must be positive");
    if (cfg.image_size % (4 * cfg.stride_base) != 0) {
        fail("image_size " + std::to_string(cfg.image_size) + " must be divisible by 4*stride_base = " +
             std::to_string(4 * cfg.stride_base));
    }
    if (cfg.channels == 0) fail("channels must be positive");
    if (cfg.frame_channels == 0) fail("frame_channels must be positive");
    if (cfg.heads == 0 || cfg.channels % cfg.heads != 0) {
        fail("heads must divide channels (" + std::to_string(cfg.heads) + " vs " +
             std::to_string(cfg.channels) + ")");
    }
    if (cfg.hyperedge_k == 0) fail("hyperedge_k must be positive");
    if (!(cfg.fuzzifier > 1.0)) fail("fuzzifier must be > 1");
    if (!(cfg.fcm_dist_floor > 0.0)) fail("fcm_dist_floor must be positive");
    if (!(cfg.rho > 0.0) || cfg.rho > 1.0) fail("rho must lie in (0, 1]");
    if (!(cfg.mask_ratio >= 0.0) || cfg.mask_ratio >= 1.0) fail("mask_ratio must lie in [0, 1)");
    if (cfg.lambda1 < 0.0 || cfg.lambda2 < 0.0) fail("distillation weights must be non-negative");
    {
        const auto r = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(cfg.gen_hyperedges))));
        if (r * r != cfg.gen_hyperedges) fail("gen_hyperedges must be a perfect square");
    }
    if (cfg.num_classes == 0) fail("num_classes must be positive");
    if (!(cfg.learning_rate > 0.0)) fail("learning_rate must be positive");
    if (!(cfg.event_threshold > 0.0)) fail("event_threshold must be positive");
}

}  // namespace evfuse
