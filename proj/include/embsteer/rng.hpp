#pragma once

#include <cstdint>

namespace embsteer {

// splitmix64 stream. Every seeded draw in the project goes through this so
// that results are reproducible across platforms and standard-library
// versions (std::shuffle and std::uniform_* are implementation-defined).
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    std::uint64_t next_u64() noexcept {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 bits of mantissa.
    double next_double() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * next_double(); }

    // Uniform in [0, bound) via the multiply-shift reduction. The tiny
    // modulo bias is irrelevant at the sizes used here and the result is
    // identical on every platform.
    std::uint64_t below(std::uint64_t bound) noexcept {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * bound) >> 64);
    }

private:
    std::uint64_t state_;
};

}  // namespace embsteer
