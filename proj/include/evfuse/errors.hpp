#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace evfuse {

// Error taxonomy. The CLI maps ParseError/IoError to exit code 2 and every
// other failure to exit code 1.

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
    ParseError(const std::string& msg, std::size_t line_no)
        : std::runtime_error(msg + " (line " + std::to_string(line_no) + ")"), line(line_no) {}
    explicit ParseError(const std::string& msg) : std::runtime_error(msg), line(0) {}
    std::size_t line;
};

}  // namespace evfuse
