#pragma once

#include <stdexcept>
#include <string>

namespace embsteer {

// Error categories map 1:1 onto CLI exit codes (see tools/main.cpp).
enum class ErrorCategory {
    usage,       // bad arguments or invalid configuration
    format,      // malformed or corrupt file
    dimension,   // shape mismatch between otherwise valid values
    provider,    // encoder provider unavailable or misbehaving
    divergence,  // training aborted on runaway loss
    io,          // filesystem failure
    internal,
};

const char* to_string(ErrorCategory category) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& message)
        : std::runtime_error(message), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

class UsageError : public Error {
public:
    explicit UsageError(const std::string& message) : Error(ErrorCategory::usage, message) {}
};

class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& message) : Error(ErrorCategory::dimension, message) {}
};

// One code per way a file can be rejected; tests distinguish them.
enum class FormatCode {
    bad_magic,
    bad_version,
    unsupported_dtype,
    bad_header,
    bad_meta,
    truncated,
    dim_mismatch,
    digest_mismatch,
    non_finite,
};

const char* to_string(FormatCode code) noexcept;

class FormatError : public Error {
public:
    FormatError(FormatCode code, const std::string& message)
        : Error(ErrorCategory::format, message), code_(code) {}

    FormatCode code() const noexcept { return code_; }

private:
    FormatCode code_;
};

enum class ProviderFailure {
    unavailable,   // endpoint unreachable or manifest unreadable
    not_found,     // prompt not present in a file-backed provider
    bad_response,  // provider replied with something unparseable
};

class ProviderError : public Error {
public:
    ProviderError(ProviderFailure failure, const std::string& message)
        : Error(ErrorCategory::provider, message), failure_(failure) {}

    ProviderFailure failure() const noexcept { return failure_; }

private:
    ProviderFailure failure_;
};

class DivergenceError : public Error {
public:
    explicit DivergenceError(const std::string& message)
        : Error(ErrorCategory::divergence, message) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& message) : Error(ErrorCategory::io, message) {}
};

}  // namespace embsteer
