#pragma once

#include <cmath>
#include <iostream>
#include <stdexcept>
#include <string>

namespace catebounds {

// Bad user input: schema mismatches, invalid configuration, contract violations.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed file content (CSV cells, JSON artifacts).
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Argument outside the mathematical domain of an operation.
struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void warn(const std::string& msg) {
    std::cerr << "[catebounds] warning: " << msg << "\n";
}

inline bool is_finite(double v) { return std::isfinite(v); }

}  // namespace catebounds
