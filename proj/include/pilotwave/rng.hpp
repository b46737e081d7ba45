// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>

// Counter-based reproducible random numbers built on the splitmix64 finalizer
// (Steele, Lea & Flood / Vigna). Every draw is a pure function of
// (seed, stream, counter), so ensemble members can be generated independently
// and in any order while staying bit-identical across platforms.

namespace pilotwave {

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream)
        : base_(splitmix64(seed ^ (0xA0761D6478BD642FULL * (stream + 1))))
    {
    }

    std::uint64_t next_u64()
    {
        return splitmix64(base_ + 0x9E3779B97F4A7C15ULL * (++counter_));
    }

    /// Uniform in (0, 1); never returns 0 so it is safe inside logs.
    double next_uniform()
    {
        const std::uint64_t bits = next_u64() >> 11;  // 53 bits
        return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller; pairs are cached for determinism.
    double next_normal()
    {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = next_uniform();
        const double u2 = next_uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    std::size_t index_below(std::size_t n)
    {
        return static_cast<std::size_t>(next_uniform() * static_cast<double>(n)) % n;
    }

private:
    std::uint64_t base_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace pilotwave
