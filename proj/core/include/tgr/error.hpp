#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace tgr {

/// Malformed or inconsistent user input (files, configs, arguments).
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A file could not be decoded. The message names the offending element.
class ParseError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Failures talking to an external guidance backend.
class ServiceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class ProtocolErrorCode : std::uint16_t {
    None = 0,
    VersionMismatch = 1,
    CapabilityMismatch = 2,
    BadRequest = 3,
    Internal = 4,
    Oversized = 5,
    Transport = 6,
    Timeout = 7,
};

class ProtocolError : public ServiceError {
public:
    ProtocolError(ProtocolErrorCode code, const std::string& what)
        : ServiceError(what), code_(code) {}

    ProtocolErrorCode code() const noexcept { return code_; }

private:
    ProtocolErrorCode code_;
};

/// Broken internal invariant; indicates a bug rather than bad input.
class InvariantError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

} // namespace tgr
