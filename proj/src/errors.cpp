#include "embsteer/errors.hpp"

namespace embsteer {

const char* to_string(ErrorCategory category) noexcept {
    switch (category) {
        case ErrorCategory::usage: return "usage";
        case ErrorCategory::format: return "format";
        case ErrorCategory::dimension: return "dimension";
        case ErrorCategory::provider: return "provider";
        case ErrorCategory::divergence: return "divergence";
        case ErrorCategory::io: return "io";
        case ErrorCategory::internal: return "internal";
    }
    return "?";
}

const char* to_string(FormatCode code) noexcept {
    switch (code) {
        case FormatCode::bad_magic: return "bad_magic";
        case FormatCode::bad_version: return "bad_version";
        case FormatCode::unsupported_dtype: return "unsupported_dtype";
        case FormatCode::bad_header: return "bad_header";
        case FormatCode::bad_meta: return "bad_meta";
        case FormatCode::truncated: return "truncated";
        case FormatCode::dim_mismatch: return "dim_mismatch";
        case FormatCode::digest_mismatch: return "digest_mismatch";
        case FormatCode::non_finite: return "non_finite";
    }
    return "?";
}

}  // namespace embsteer
