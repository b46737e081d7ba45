// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include "pilotwave/rng.hpp"
#include "pilotwave/spacetime.hpp"

using namespace pilotwave;

TEST_CASE("interval2 basic values")
{
    CHECK(interval2({0, 0}, {1, 0}) == doctest::Approx(1.0));
    CHECK(interval2({0, 0}, {1, 1}) == doctest::Approx(0.0));
    // hand-evaluated: 1.25^2 - 0.75^2 = 1.5625 - 0.5625
    CHECK(interval2({0, 0}, {1.25, 0.75}) == doctest::Approx(1.0).epsilon(1e-14));
    // symmetric in its arguments
    CHECK(interval2({0.3, -2.0}, {1.1, 0.4}) == interval2({1.1, 0.4}, {0.3, -2.0}));
}

TEST_CASE("boost_event identity and frozen example")
{
    const Event e{1.0, 0.0};
    const Event r = boost_event(e, Boost(0.0));
    CHECK(r.t == doctest::Approx(1.0));
    CHECK(r.z == doctest::Approx(0.0));

    // gamma = 1.25 at beta = 0.6: (1,1) -> (0.5, 0.5)
    const Event b = boost_event({1.0, 1.0}, Boost(0.6));
    CHECK(b.t == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(b.z == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("boost rejects |beta| >= 1")
{
    CHECK_THROWS_AS(Boost(1.0), std::invalid_argument);
    CHECK_THROWS_AS(Boost(-1.2), std::invalid_argument);
}

TEST_CASE("interval2 is boost invariant")
{
    CounterRng rng(42, 0);
    for (int i = 0; i < 500; ++i) {
        const Event a{4.0 * rng.next_normal(), 4.0 * rng.next_normal()};
        const Event b{4.0 * rng.next_normal(), 4.0 * rng.next_normal()};
        const double beta = 0.9 * (2.0 * rng.next_uniform() - 1.0);
        const Boost bo(beta);
        const double before = interval2(a, b);
        const double after = interval2(boost_event(a, bo), boost_event(b, bo));
        CHECK(after == doctest::Approx(before).epsilon(1e-10));
    }
}

TEST_CASE("boost then inverse boost restores the event")
{
    CounterRng rng(7, 0);
    for (int i = 0; i < 200; ++i) {
        const Event e{rng.next_normal(), rng.next_normal()};
        const double beta = 0.9 * (2.0 * rng.next_uniform() - 1.0);
        const Boost b(beta);
        const Event r = boost_event(boost_event(e, b), b.inverse());
        CHECK(std::abs(r.t - e.t) < 1e-12);
        CHECK(std::abs(r.z - e.z) < 1e-12);
    }
}

TEST_CASE("velocity_add values and range")
{
    CHECK(velocity_add(0.0, Boost(0.0)) == doctest::Approx(0.0));
    CHECK(velocity_add(0.5, Boost(0.5)) == doctest::Approx(0.0));
    // hand-evaluated: (0.5 + 0.5) / (1 + 0.25)
    CHECK(velocity_add(0.5, Boost(-0.5)) == doctest::Approx(0.8).epsilon(1e-14));

    CounterRng rng(3, 0);
    for (int i = 0; i < 2000; ++i) {
        const double v = 0.999 * (2.0 * rng.next_uniform() - 1.0);
        const double beta = 0.999 * (2.0 * rng.next_uniform() - 1.0);
        CHECK(std::abs(velocity_add(v, Boost(beta))) < 1.0);
    }
}

TEST_CASE("proper_time_step values and interval constraint")
{
    const auto s0 = proper_time_step(0.0, 0.1);
    CHECK(s0.dt == doctest::Approx(0.1));
    CHECK(s0.dz == doctest::Approx(0.0));

    // gamma(0.6) = 1.25; 1.25^2 - 0.75^2 = 1
    const auto s1 = proper_time_step(0.6, 1.0);
    CHECK(s1.dt == doctest::Approx(1.25).epsilon(1e-14));
    CHECK(s1.dz == doctest::Approx(0.75).epsilon(1e-14));
    CHECK(s1.dt * s1.dt - s1.dz * s1.dz == doctest::Approx(1.0).epsilon(1e-12));

    CounterRng rng(11, 0);
    for (int i = 0; i < 2000; ++i) {
        const double v = 0.99 * (2.0 * rng.next_uniform() - 1.0);
        const double dtau = 1e-4 + rng.next_uniform();
        const auto s = proper_time_step(v, dtau);
        const double tau2 = s.dt * s.dt - s.dz * s.dz;
        CHECK(tau2 == doctest::Approx(dtau * dtau).epsilon(1e-12));
    }

    CHECK_THROWS_AS(proper_time_step(1.0, 0.1), ModelViolation);
    CHECK_THROWS_AS(proper_time_step(0.5, 0.0), std::invalid_argument);
}

TEST_CASE("hyperplane boosts covariantly")
{
    CounterRng rng(19, 0);
    for (int i = 0; i < 200; ++i) {
        const Hyperplane h = (i % 2) ? Hyperplane::at_time(rng.next_normal() * 10.0)
                                     : Hyperplane::at_position(rng.next_normal() * 10.0);
        const Event e{rng.next_normal() * 5.0, rng.next_normal() * 5.0};
        const Boost b(0.8 * (2.0 * rng.next_uniform() - 1.0));
        const double v0 = h.signed_value(e);
        const double v1 = h.boosted(b).signed_value(boost_event(e, b));
        CHECK(v1 == doctest::Approx(v0).epsilon(1e-10));
    }
}

TEST_CASE("hyperplane crossing fraction")
{
    const Hyperplane h = Hyperplane::at_time(2.0);
    const Event e{1.0, 0.0};
    // moving with dt=1, dz=0.5 per unit fraction
    CHECK(h.crossing_fraction(e, 1.0, 0.5) == doctest::Approx(1.0));
    const Hyperplane plane = Hyperplane::at_position(1.0);
    CHECK(plane.crossing_fraction({0.0, 0.0}, 1.0, 0.5) == doctest::Approx(2.0));
    CHECK(plane.crossing_fraction({0.0, 0.0}, 1.0, 0.0) < 0.0);
}
