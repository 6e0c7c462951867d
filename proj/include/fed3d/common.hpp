#pragma once

#include <iostream>
#include <stdexcept>
#include <string>

namespace fed3d {

// Error taxonomy. Shape/domain violations are invalid_argument children so
// callers can catch misuse separately from runtime failures.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct DomainError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ProtocolError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Warnings go to stderr so metric/CSV streams stay clean.
inline void log_warn(const std::string& msg) {
    std::cerr << "[fed3d] warning: " << msg << "\n";
}

inline void log_info(const std::string& msg) {
    std::cerr << "[fed3d] " << msg << "\n";
}

}  // namespace fed3d
