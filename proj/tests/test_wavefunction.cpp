// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <cmath>
#include <complex>

#include "oracles.hpp"
#include "pilotwave/rng.hpp"
#include "pilotwave/wavefunction.hpp"

using namespace pilotwave;

namespace {

PacketSegment make_packet(double z0, double v, double sigma = 1.0, double amp = 1.0,
                          double phase = 0.0)
{
    PacketSegment s;
    s.birth = Event{0.0, z0};
    s.v = v;
    s.sigma = sigma;
    s.amp = amp;
    s.phase = phase;
    return s;
}

Branch make_branch(Complex coeff, std::vector<PacketSegment> segs,
                   std::vector<Spinor> spinors = {})
{
    Branch b;
    b.coeff = coeff;
    for (auto& s : segs) {
        PacketHistory h;
        h.segments.push_back(s);
        b.packets.push_back(h);
    }
    if (spinors.empty()) spinors.assign(segs.size(), Spinor{});
    b.spinors = std::move(spinors);
    return b;
}

MultiTimeWaveFunction two_particle_wf(std::vector<Branch> branches)
{
    MultiTimeWaveFunction wf;
    wf.branches = std::move(branches);
    wf.masses = {1.0, 1.0};
    return wf;
}

const Spinor kUp{Complex{1, 0}, Complex{0, 0}};
const Spinor kDown{Complex{0, 0}, Complex{1, 0}};

MultiTimeWaveFunction singlet_wf(double z1 = 0.0, double z2 = 0.0)
{
    const double r = 1.0 / std::sqrt(2.0);
    auto b1 = make_branch(Complex{r, 0}, {make_packet(z1, 0.0), make_packet(z2, 0.0)},
                          {kUp, kDown});
    auto b2 = make_branch(Complex{-r, 0}, {make_packet(z1, 0.0), make_packet(z2, 0.0)},
                          {kDown, kUp});
    return two_particle_wf({b1, b2});
}

}  // namespace

TEST_CASE("packet amplitude peak, envelope and norm")
{
    const PacketSegment seg = make_packet(0.0, 0.5, 0.8, 0.7);
    const double peak = 0.7 * std::pow(2.0 * M_PI * 0.64, -0.25);

    const Complex at_center = packet_amplitude(seg, Event{0.0, 0.0}, 1.0);
    CHECK(at_center.real() == doctest::Approx(peak).epsilon(1e-12));
    CHECK(at_center.imag() == doctest::Approx(0.0));

    const double off = std::abs(packet_amplitude(seg, Event{0.0, 0.8}, 1.0));
    CHECK(off == doctest::Approx(peak * std::exp(-0.25)).epsilon(1e-12));

    // quadrature oracle: integral of |amplitude|^2 over z equals amp^2 at any t
    for (double t : {0.0, 3.7}) {
        const double zc = seg.center_at(t);
        const double integral = oracles::simpson(
            [&](double z) {
                return std::norm(packet_amplitude(seg, Event{t, z}, 1.0));
            },
            zc - 12.0, zc + 12.0, 4000);
        CHECK(integral == doctest::Approx(0.49).epsilon(1e-8));
    }
}

TEST_CASE("packet amplitude envelope is boost invariant")
{
    CounterRng rng(5, 0);
    for (int i = 0; i < 100; ++i) {
        PacketSegment seg = make_packet(rng.next_normal(), 1.8 * rng.next_uniform() - 0.9,
                                        0.5 + rng.next_uniform());
        const Event e{rng.next_normal() * 2.0, rng.next_normal() * 2.0};
        const Boost b(0.8 * (2.0 * rng.next_uniform() - 1.0));
        const PacketSegment bseg = boost_segment(seg, b);
        const double a0 = std::abs(packet_amplitude(seg, e, 1.0));
        const double a1 = std::abs(packet_amplitude(bseg, boost_event(e, b), 1.0));
        // moving-frame norms contain the contracted width; compare envelopes only
        const double n0 = std::pow(2 * M_PI * seg.sigma * seg.sigma, -0.25);
        const double n1 = std::pow(2 * M_PI * bseg.sigma * bseg.sigma, -0.25);
        CHECK(a1 / n1 == doctest::Approx(a0 / n0).epsilon(1e-10));
    }
}

TEST_CASE("evaluate of a product state is the packet product")
{
    auto wf = two_particle_wf(
        {make_branch(Complex{1, 0}, {make_packet(1.0, 0.3), make_packet(-1.0, -0.2)})});
    const ConfigPoint p{{Event{0.5, 1.2}, Event{0.7, -0.9}}};
    const auto a = evaluate(wf, p);
    const Complex expect = packet_amplitude(wf.branches[0].packets[0].segments[0],
                                            p.events[0], 1.0) *
                           packet_amplitude(wf.branches[0].packets[1].segments[0],
                                            p.events[1], 1.0);
    CHECK(a.comps[0].real() == doctest::Approx(expect.real()).epsilon(1e-12));
    CHECK(a.comps[0].imag() == doctest::Approx(expect.imag()).epsilon(1e-12));
    CHECK(std::abs(a.comps[1]) == doctest::Approx(0.0));
    CHECK(std::abs(a.comps[2]) == doctest::Approx(0.0));
    CHECK(std::abs(a.comps[3]) == doctest::Approx(0.0));
}

TEST_CASE("singlet amplitude is antisymmetric in the spin labels")
{
    auto wf = singlet_wf();
    CounterRng rng(9, 0);
    for (int i = 0; i < 20; ++i) {
        const ConfigPoint p{{Event{0.2, rng.next_normal()}, Event{-0.1, rng.next_normal()}}};
        const auto a = evaluate(wf, p);
        // component order: bit k set = particle k down; (+,-) is index 2
        CHECK(std::abs(a.comps[2] + a.comps[1]) < 1e-14);
        CHECK(std::abs(a.comps[0]) < 1e-14);
        CHECK(std::abs(a.comps[3]) < 1e-14);
    }
}

TEST_CASE("evaluate is linear in branch coefficients")
{
    CounterRng rng(21, 0);
    auto base = two_particle_wf(
        {make_branch(Complex{1, 0}, {make_packet(-2.0, 0.4), make_packet(1.0, 0.0)}),
         make_branch(Complex{1, 0}, {make_packet(2.0, -0.4), make_packet(-1.0, 0.1)})});
    for (int i = 0; i < 20; ++i) {
        const Complex c1{rng.next_normal(), rng.next_normal()};
        const Complex c2{rng.next_normal(), rng.next_normal()};
        auto wf = base;
        wf.branches[0].coeff = c1;
        wf.branches[1].coeff = c2;
        const ConfigPoint p{{Event{0.3, rng.next_normal() * 2.0},
                             Event{0.3, rng.next_normal() * 2.0}}};
        auto one = base;
        one.branches[0].coeff = Complex{1, 0};
        one.branches[1].coeff = Complex{0, 0};
        auto two = base;
        two.branches[0].coeff = Complex{0, 0};
        two.branches[1].coeff = Complex{1, 0};
        const Complex combined = evaluate(wf, p).comps[0];
        const Complex expected =
            c1 * evaluate(one, p).comps[0] + c2 * evaluate(two, p).comps[0];
        CHECK(std::abs(combined - expected) < 1e-12);
    }
}

TEST_CASE("density matches evaluate and quadrant weights split 1/2 each")
{
    const double r = 1.0 / std::sqrt(2.0);
    auto wf = two_particle_wf(
        {make_branch(Complex{r, 0}, {make_packet(8.0, 0.0), make_packet(8.0, 0.0)}),
         make_branch(Complex{r, 0}, {make_packet(-8.0, 0.0), make_packet(-8.0, 0.0)})});

    const ConfigPoint p{{Event{0, 7.5}, Event{0, 8.5}}};
    CHECK(density(wf, p) == doctest::Approx(evaluate(wf, p).norm2()));

    // full configuration-space integral is 1 (quadrature oracle)
    const auto rho = [&](double z1, double z2) {
        return density(wf, ConfigPoint{{Event{0, z1}, Event{0, z2}}});
    };
    const double total = oracles::simpson2d(rho, -16, 16, -16, 16, 640, 640);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
    const double upper = oracles::simpson2d(rho, 0, 16, 0, 16, 320, 320);
    CHECK(upper == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("single-particle marginals integrate to 1")
{
    const double r = 1.0 / std::sqrt(2.0);
    auto wf = two_particle_wf(
        {make_branch(Complex{r, 0}, {make_packet(8.0, 0.2), make_packet(-8.0, 0.0)}),
         make_branch(Complex{r, 0}, {make_packet(-8.0, -0.2), make_packet(8.0, 0.0)})});
    const auto marginal1 = [&](double z1) {
        return oracles::simpson(
            [&](double z2) {
                return density(wf, ConfigPoint{{Event{0.4, z1}, Event{0.4, z2}}});
            },
            -20, 20, 1600);
    };
    const double m = oracles::simpson(marginal1, -20, 20, 1600);
    CHECK(m == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("guidance: single branch gives the group velocity in both modes")
{
    auto wf = two_particle_wf(
        {make_branch(Complex{1, 0}, {make_packet(0.0, 0.5), make_packet(30.0, -0.25)})});
    const ConfigPoint p{{Event{1.0, 0.9}, Event{1.0, 29.7}}};
    CHECK(guidance_velocity(wf, p, 0, GuidanceMode::Kinematic) == doctest::Approx(0.5));
    CHECK(guidance_velocity(wf, p, 0, GuidanceMode::Field) ==
          doctest::Approx(0.5).epsilon(1e-12));
    CHECK(guidance_velocity(wf, p, 1, GuidanceMode::Field) ==
          doctest::Approx(-0.25).epsilon(1e-12));
}

TEST_CASE("guidance: symmetric counter-propagating overlap is at rest at the midpoint")
{
    const double r = 1.0 / std::sqrt(2.0);
    auto wf = two_particle_wf(
        {make_branch(Complex{r, 0}, {make_packet(-1.0, 0.5), make_packet(40.0, 0.0)}),
         make_branch(Complex{r, 0}, {make_packet(1.0, -0.5), make_packet(40.0, 0.0)})});
    const ConfigPoint p{{Event{0.0, 0.0}, Event{0.0, 40.0}}};
    CHECK(guidance_velocity(wf, p, 0, GuidanceMode::Field) ==
          doctest::Approx(0.0).epsilon(1e-12));
    CHECK_THROWS_AS(guidance_velocity(wf, p, 0, GuidanceMode::Kinematic),
                    KinematicAmbiguity);
}

TEST_CASE("field-mode velocity agrees with the finite-difference phase oracle")
{
    // splitter-window-like superposition: same envelope centers, opposite momenta,
    // quadrature relative phase
    const double r = 1.0 / std::sqrt(2.0);
    auto wf = two_particle_wf(
        {make_branch(Complex{r, 0}, {make_packet(-0.6, 0.5), make_packet(40.0, 0.0)}),
         make_branch(std::polar(r, -M_PI / 2), {make_packet(0.6, -0.5), make_packet(40.0, 0.0)})});

    for (double z : {-0.9, -0.3, 0.2, 0.8}) {
        const ConfigPoint p{{Event{0.5, z}, Event{0.5, 40.0}}};
        const double v = guidance_velocity(wf, p, 0, GuidanceMode::Field);
        const double P_fd = oracles::phase_derivative(
            [&](double zz) {
                return evaluate(wf, ConfigPoint{{Event{0.5, zz}, Event{0.5, 40.0}}}).comps[0];
            },
            z, 1e-6);
        const double v_fd = P_fd / std::sqrt(1.0 + P_fd * P_fd);
        CHECK(v == doctest::Approx(v_fd).epsilon(1e-6));
    }
}

TEST_CASE("node detection throws at an exact interference zero")
{
    // equal-weight counter-propagating packets at coincident centers with
    // phase difference 0: density ~ cos^2(p z), exact node at p z = pi/2
    const double r = 1.0 / std::sqrt(2.0);
    auto wf = two_particle_wf(
        {make_branch(Complex{r, 0}, {make_packet(0.0, 0.5), make_packet(40.0, 0.0)}),
         make_branch(Complex{r, 0}, {make_packet(0.0, -0.5), make_packet(40.0, 0.0)})});
    const double p_momentum = lorentz_gamma(0.5) * 0.5;
    const double z_node = 0.5 * M_PI / p_momentum;
    const ConfigPoint node{{Event{0.0, z_node}, Event{0.0, 40.0}}};
    CHECK_THROWS_AS(momentum_field(wf, node, 0), NodeEncounter);
}

TEST_CASE("spin vectors: product state, singlet, post-measurement branches")
{
    auto prod = two_particle_wf(
        {make_branch(Complex{1, 0}, {make_packet(0.0, 0.0), make_packet(5.0, 0.0)},
                     {kUp, kDown})});
    const ConfigPoint p0{{Event{0, 0.3}, Event{0, 5.2}}};
    auto s = spin_vector(prod, p0, 0);
    CHECK(s.x == doctest::Approx(0.0));
    CHECK(s.y == doctest::Approx(0.0));
    CHECK(s.z == doctest::Approx(1.0));
    s = spin_vector(prod, p0, 1);
    CHECK(s.z == doctest::Approx(-1.0));

    auto singlet = singlet_wf();
    CounterRng rng(31, 0);
    for (int i = 0; i < 30; ++i) {
        const ConfigPoint p{{Event{0.1, rng.next_normal()}, Event{0.4, rng.next_normal()}}};
        for (std::size_t k : {std::size_t{0}, std::size_t{1}}) {
            const auto sv = spin_vector(singlet, p, k);
            CHECK(std::abs(sv.x) < 1e-10);
            CHECK(std::abs(sv.y) < 1e-10);
            CHECK(std::abs(sv.z) < 1e-10);
        }
    }

    // separated post-measurement branches: inside the f1+ f2- packet the spin
    // columns read (0,0,+1) and (0,0,-1)
    const double r = 1.0 / std::sqrt(2.0);
    auto post = two_particle_wf(
        {make_branch(Complex{r, 0}, {make_packet(9.0, 0.0), make_packet(-9.0, 0.0)},
                     {kUp, kDown}),
         make_branch(Complex{-r, 0}, {make_packet(-9.0, 0.0), make_packet(9.0, 0.0)},
                     {kDown, kUp})});
    const ConfigPoint inside{{Event{0, 9.2}, Event{0, -8.7}}};
    CHECK(spin_vector(post, inside, 0).z == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(spin_vector(post, inside, 1).z == doctest::Approx(-1.0).epsilon(1e-10));
}

TEST_CASE("branch weights: effective branch, symmetric overlap, normalization")
{
    const double r = 1.0 / std::sqrt(2.0);
    auto wf = two_particle_wf(
        {make_branch(Complex{r, 0}, {make_packet(8.0, 0.0), make_packet(8.0, 0.0)}),
         make_branch(Complex{r, 0}, {make_packet(-8.0, 0.0), make_packet(-8.0, 0.0)})});

    const auto deep = branch_weights(wf, ConfigPoint{{Event{0, 8.0}, Event{0, 8.0}}});
    CHECK(deep.weights[0] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(deep.weights[1] == doctest::Approx(0.0).epsilon(1e-10));
    REQUIRE(deep.effective.has_value());
    CHECK(*deep.effective == 0);

    const auto mid = branch_weights(wf, ConfigPoint{{Event{0, 0.0}, Event{0, 0.0}}});
    CHECK(mid.weights[0] == doctest::Approx(0.5));
    CHECK(mid.weights[1] == doctest::Approx(0.5));
    CHECK_FALSE(mid.effective.has_value());

    CounterRng rng(55, 0);
    for (int i = 0; i < 50; ++i) {
        const ConfigPoint p{{Event{0, 20.0 * (rng.next_uniform() - 0.5)},
                             Event{0, 20.0 * (rng.next_uniform() - 0.5)}}};
        const auto bw = branch_weights(wf, p);
        double sum = 0.0;
        for (double w : bw.weights) sum += w;
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("boost_wavefunction: identity, frozen width example, round trip")
{
    auto wf = two_particle_wf(
        {make_branch(Complex{0.6, 0.3}, {make_packet(1.0, 0.5, 1.0), make_packet(-1.0, 0.0, 2.0)})});

    const auto same = boost_wavefunction(wf, Boost(0.0));
    CHECK(same.branches[0].packets[0].segments[0].v == doctest::Approx(0.5));
    CHECK(same.branches[0].packets[0].segments[0].sigma == doctest::Approx(1.0));

    // boosting into the packet rest frame: v' = 0 and the width becomes the
    // rest width sigma * gamma(0.5) = 1.1547005383792515
    const auto rest = boost_wavefunction(wf, Boost(0.5));
    CHECK(rest.branches[0].packets[0].segments[0].v == doctest::Approx(0.0));
    CHECK(rest.branches[0].packets[0].segments[0].sigma ==
          doctest::Approx(1.1547005383792515).epsilon(1e-12));
    CHECK(rest.boost_history.size() == 1);

    const auto back = boost_wavefunction(rest, Boost(-0.5));
    const auto& s0 = wf.branches[0].packets[0].segments[0];
    const auto& s1 = back.branches[0].packets[0].segments[0];
    CHECK(s1.v == doctest::Approx(s0.v).epsilon(1e-10));
    CHECK(s1.sigma == doctest::Approx(s0.sigma).epsilon(1e-10));
    CHECK(s1.birth.t == doctest::Approx(s0.birth.t).epsilon(1e-10));
    CHECK(s1.birth.z == doctest::Approx(s0.birth.z).epsilon(1e-10));
}

TEST_CASE("kinematic guidance transforms as a worldline statement under boosts")
{
    auto wf = two_particle_wf(
        {make_branch(Complex{1, 0}, {make_packet(0.0, 0.5), make_packet(30.0, -0.3)})});
    CounterRng rng(77, 0);
    for (int i = 0; i < 50; ++i) {
        const double beta = 0.8 * (2.0 * rng.next_uniform() - 1.0);
        const Boost b(beta);
        const ConfigPoint p{{Event{2.0, 1.0 + rng.next_normal()},
                             Event{2.0, 30.0 + rng.next_normal()}}};
        const auto boosted = boost_wavefunction(wf, b);
        for (std::size_t k : {std::size_t{0}, std::size_t{1}}) {
            const double v0 = guidance_velocity(wf, p, k, GuidanceMode::Kinematic);
            const double v1 =
                guidance_velocity(boosted, boost_point(p, b), k, GuidanceMode::Kinematic);
            CHECK(v1 == doctest::Approx(velocity_add(v0, b)).epsilon(1e-10));
        }
    }
}

TEST_CASE("evaluate rejects uncovered time coordinates")
{
    PacketSegment seg = make_packet(0.0, 0.2);
    seg.valid_from = Hyperplane::at_time(0.0);
    seg.valid_until = Hyperplane::at_time(5.0);
    Branch b = make_branch(Complex{1, 0}, {seg, make_packet(10.0, 0.0)});
    auto wf = two_particle_wf({b});
    CHECK_THROWS_AS(evaluate(wf, ConfigPoint{{Event{6.0, 0.0}, Event{1.0, 10.0}}}),
                    UncoveredTime);
    CHECK_NOTHROW(evaluate(wf, ConfigPoint{{Event{4.0, 0.0}, Event{1.0, 10.0}}}));
}
