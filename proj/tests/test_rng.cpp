// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <cmath>

#include "pilotwave/rng.hpp"

using namespace pilotwave;

TEST_CASE("splitmix64 matches the published reference sequence")
{
    // Vigna's splitmix64 with initial state 0.
    CHECK(splitmix64(0x0ULL) == 0xE220A8397B1DCDAFULL);
    CHECK(splitmix64(0x9E3779B97F4A7C15ULL) == 0x6E789E6AA1B965F4ULL);
    CHECK(splitmix64(0x3C6EF372FE94F82AULL) == 0x06C45D188009454FULL);
}

TEST_CASE("counter rng is deterministic per (seed, stream)")
{
    CounterRng a(123, 5), b(123, 5), c(123, 6), d(124, 5);
    bool streams_differ = false, seeds_differ = false;
    for (int i = 0; i < 64; ++i) {
        const auto va = a.next_u64();
        CHECK(va == b.next_u64());
        if (va != c.next_u64()) streams_differ = true;
        if (va != d.next_u64()) seeds_differ = true;
    }
    CHECK(streams_differ);
    CHECK(seeds_differ);
}

TEST_CASE("uniforms lie in (0,1) and normals have the right moments")
{
    CounterRng rng(2024, 0);
    const int n = 100000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double u = rng.next_uniform();
        CHECK(u > 0.0);
        CHECK(u < 1.0);
        const double x = rng.next_normal();
        sum += x;
        sum2 += x * x;
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1.0) < 0.03);
}
