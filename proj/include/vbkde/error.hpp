#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vbkde {

/// Failure categories. Each maps to a distinct CLI exit code.
enum class ErrorKind {
    invalid_argument,     // malformed input, bad parameter ranges
    invalid_dimension,
    unknown_id,
    invalid_region,
    unsupported,          // (mode, d) combinations that are not implemented
    unsupported_order,
    bandwidth_too_large,
    zero_scale,
    construction,
    quadrature,
    registration,
    insufficient_data,
    empty_region,
    grid_mismatch,
    io,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::invalid_argument: return "invalid-argument";
    case ErrorKind::invalid_dimension: return "invalid-dimension";
    case ErrorKind::unknown_id: return "unknown-id";
    case ErrorKind::invalid_region: return "invalid-region";
    case ErrorKind::unsupported: return "unsupported";
    case ErrorKind::unsupported_order: return "unsupported-order";
    case ErrorKind::bandwidth_too_large: return "bandwidth-too-large";
    case ErrorKind::zero_scale: return "zero-scale";
    case ErrorKind::construction: return "construction";
    case ErrorKind::quadrature: return "quadrature";
    case ErrorKind::registration: return "registration";
    case ErrorKind::insufficient_data: return "insufficient-data";
    case ErrorKind::empty_region: return "empty-region";
    case ErrorKind::grid_mismatch: return "grid-mismatch";
    case ErrorKind::io: return "io";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline void require(bool condition, ErrorKind kind, const std::string& what) {
    if (!condition) throw Error(kind, what);
}

} // namespace vbkde
