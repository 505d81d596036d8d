#pragma once

#include <cstddef>

namespace embsteer {

// Encoder geometry of Stable Diffusion 2.1's text encoder: 1024 features per
// token, 77 token slots (padding included). The toolkit takes dims from input
// files; this profile exists for tooling that needs the canonical target.
struct EncoderProfile {
    std::size_t d;
    std::size_t l;
    const char* name;
};

inline constexpr EncoderProfile kSd21Profile{1024, 77, "sd21"};

}  // namespace embsteer
