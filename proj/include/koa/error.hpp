#pragma once

#include <stdexcept>
#include <string>

namespace koa {

/// Failure categories surfaced across the library and mapped onto the
/// C API status codes.
enum class ErrorCode {
    invalid_argument,
    io,
    parse,
    missing_field,
    unsupported_transfer_syntax,
    missing_required_tag,
    malformed_element,
    lookup_miss,
    backend,
    geometry,
    degenerate_data,
    version_mismatch,
    internal,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
    if (!condition)
        fail(code, message);
}

} // namespace koa
