// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include "pilotwave/guidance.hpp"
#include "pilotwave/spacetime.hpp"
#include "pilotwave/wavefunction.hpp"

// Experiment builders: the two-particle double interferometer (two arms per
// particle, full mirrors, final 50/50 splitters, variable phase shifts) and
// the spin-singlet pair with impulsive Stern-Gerlach stages. Both produce
// multi-time wave functions with interaction schedules plus an outcome
// classifier.
//
// Interferometer z-geometry: the two arm tracks of each particle run at
// z = +-arm/2 with no z motion until the mirrors deflect them toward the
// shared splitter plane z = 0 at t_lambda; they recombine there at t_mu and
// the exit beams separate toward +-z, classified at t_nu. Particle 1 carries
// phase phi on its upper arm (a), particle 2 carries chi on its upper arm
// (b); its lower arm is c. This orientation is the one consistent with both
// the joint exit probabilities and the sign conventions of the exit labels.

namespace pilotwave {

struct GeometryError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// HSZ double interferometer

struct HszGeometry {
    Event emission{0.0, 0.0};
    double phi = 0.0;   // phase on particle-1 arm a
    double chi = 0.0;   // phase on particle-2 arm b
    double t_lambda = 20.0;
    double t_mu = 40.0;
    double t_nu = 60.0;
    double v = 0.5;      // packet z speed between mirror and splitter
    double sigma = 1.0;
    double arm_separation = 20.0;
    double mass = 50.0;  // momentum-narrow packets: sigma * m*gamma*v >> 1

    double window_halfwidth() const { return 4.0 * sigma / v; }
    double splitter_plane() const { return emission.z; }

    void validate() const
    {
        if (!(emission.t < t_lambda && t_lambda < t_mu && t_mu < t_nu))
            throw GeometryError("hsz: need emission < t_lambda < t_mu < t_nu");
        if (!(v > 0.0 && v < 1.0)) throw GeometryError("hsz: need 0 < v < 1");
        if (sigma <= 0.0) throw GeometryError("hsz: need sigma > 0");
        const double half = 0.5 * arm_separation;
        if (std::abs(half - v * (t_mu - t_lambda)) > 1e-9 * (1.0 + half))
            throw GeometryError("hsz: arms must meet the splitter, arm/2 = v (t_mu - t_lambda)");
        if (arm_separation < 6.0 * sigma)
            throw GeometryError("hsz: arm packets closer than 6 sigma");
        if (v * (t_nu - t_mu) < 6.0 * sigma)
            throw GeometryError("hsz: exit beams not separated by t_nu");
        if (t_mu - window_halfwidth() <= t_lambda)
            throw GeometryError("hsz: splitter window reaches back past the mirrors");
        if (t_mu + window_halfwidth() >= t_nu)
            throw GeometryError("hsz: splitter window reaches past t_nu");
    }
};

namespace detail {

inline PacketSegment arm_segment(const Event& birth, double v, double sigma, double t_end)
{
    PacketSegment s;
    s.birth = birth;
    s.v = v;
    s.sigma = sigma;
    s.valid_until = std::isfinite(t_end) ? Hyperplane::at_time(t_end) : Hyperplane::never();
    return s;
}

/// Pre-splitter chain of one interferometer arm: launch at z = +-arm/2 with
/// no z motion, mirror deflection toward the splitter plane at t_lambda.
inline std::vector<PacketSegment> interferometer_arm(const HszGeometry& g, bool upper)
{
    const double a = (upper ? 0.5 : -0.5) * g.arm_separation + g.emission.z;
    const double v = upper ? -g.v : g.v;
    PacketSegment launch = arm_segment(Event{g.emission.t, a}, 0.0, g.sigma, g.t_lambda);
    launch.valid_from = unbounded_below();
    PacketSegment approach = arm_segment(Event{g.t_lambda, a}, v, g.sigma, g.t_mu);
    approach.valid_from = Hyperplane::at_time(g.t_lambda);
    return {launch, approach};
}

inline PacketSegment splitter_child(const HszGeometry& g, double v_out)
{
    PacketSegment s;
    s.birth = Event{g.t_mu, g.splitter_plane()};
    s.v = v_out;
    s.sigma = g.sigma;
    s.valid_from = Hyperplane::at_time(g.t_mu);
    return s;
}

}  // namespace detail

/// The two-branch state (1/sqrt2)[a c e^{i phi} + d b e^{i chi}] carried
/// through both mirrors and both splitters: eight branches, one per exit
/// combination, with transmitted children weighted 1/sqrt2 and reflected
/// children e^{-i pi/2}/sqrt2. The coincident exit children (reflected a with
/// transmitted d, and so on) land on identical segments, which is what merges
/// them into the composite exit beams.
inline MultiTimeWaveFunction build_hsz(const HszGeometry& g)
{
    g.validate();
    MultiTimeWaveFunction wf;
    wf.masses = {g.mass, g.mass};

    const Complex tfac{1.0 / std::sqrt(2.0), 0.0};
    const Complex rfac = std::polar(1.0 / std::sqrt(2.0), -0.5 * M_PI);

    struct ArmPlan {
        std::vector<PacketSegment> pre;
        double v_in;
    };
    // particle 1: a = upper arm (phase phi side), d = lower; particle 2:
    // b = upper (phase chi side), c = lower
    const ArmPlan arm_a{detail::interferometer_arm(g, true), -g.v};
    const ArmPlan arm_d{detail::interferometer_arm(g, false), g.v};
    const ArmPlan arm_b{detail::interferometer_arm(g, true), -g.v};
    const ArmPlan arm_c{detail::interferometer_arm(g, false), g.v};

    auto chain = [&](const ArmPlan& arm, bool transmitted) {
        PacketHistory h;
        h.segments = arm.pre;
        h.segments.push_back(detail::splitter_child(g, transmitted ? arm.v_in : -arm.v_in));
        return h;
    };

    const Complex base_ac = std::polar(1.0 / std::sqrt(2.0), g.phi);
    const Complex base_db = std::polar(1.0 / std::sqrt(2.0), g.chi);

    for (int fam = 0; fam < 2; ++fam) {
        const ArmPlan& p1 = fam == 0 ? arm_a : arm_d;
        const ArmPlan& p2 = fam == 0 ? arm_c : arm_b;
        const Complex base = fam == 0 ? base_ac : base_db;
        for (bool t1 : {true, false})
            for (bool t2 : {true, false}) {
                Branch br;
                br.coeff = base * (t1 ? tfac : rfac) * (t2 ? tfac : rfac);
                br.packets = {chain(p1, t1), chain(p2, t2)};
                br.spinors = {Spinor{}, Spinor{}};
                wf.branches.push_back(std::move(br));
            }
    }

    const double w = g.window_halfwidth();
    for (std::size_t k = 0; k < 2; ++k) {
        Interaction ia;
        ia.kind = InteractionKind::Splitter;
        ia.particle = k;
        ia.fire = Hyperplane::at_time(g.t_mu);
        ia.window_start = Hyperplane::at_time(g.t_mu - w);
        ia.window_end = Hyperplane::at_time(g.t_mu + w);
        ia.element = Hyperplane::at_position(g.splitter_plane());
        wf.schedule.push_back(ia);
    }
    return wf;
}

/// Closed-form joint exit probabilities (++, +-, -+, --).
inline std::array<double, 4> hsz_joint_probabilities(double phi, double chi)
{
    const double c = std::cos(chi - phi);
    return {0.25 * (1.0 + c), 0.25 * (1.0 - c), 0.25 * (1.0 - c), 0.25 * (1.0 + c)};
}

// ---------------------------------------------------------------------------
// EPR-Bohm experiment

struct EprGeometry {
    Event emission{0.0, 0.0};
    double t_i_1 = 10.0;  // measurement time, wing 1 (build frame)
    double t_i_2 = 10.0;
    Vec3 axis1{0.0, 0.0, 1.0};
    Vec3 axis2{0.0, 0.0, 1.0};
    double delta_p = 25.0;  // impulse magnitude; kick velocity = delta_p / mass
    double sigma = 1.0;
    double mass = 50.0;

    double kick_velocity() const { return delta_p / mass; }
    double separation_window() const { return 4.0 * sigma / kick_velocity(); }

    void validate() const
    {
        if (sigma <= 0.0 || mass <= 0.0) throw GeometryError("epr: need sigma, mass > 0");
        if (!(t_i_1 > emission.t && t_i_2 > emission.t))
            throw GeometryError("epr: measurement before emission");
        const double kv = kick_velocity();
        if (!(kv > 0.0 && kv < 1.0))
            throw GeometryError("epr: kick velocity delta_p/mass must lie in (0,1)");
    }
};

/// Eigen-spinor of n.sigma with eigenvalue sign (+1/-1), z-basis components.
inline Spinor axis_spinor(const Vec3& n, int sign)
{
    const double r = std::sqrt(n.x * n.x + n.y * n.y + n.z * n.z);
    if (r <= 0.0) throw GeometryError("axis_spinor: zero axis");
    const double theta = std::acos(n.z / r);
    const double phi = std::atan2(n.y, n.x);
    if (sign > 0)
        return Spinor{Complex{std::cos(0.5 * theta), 0.0},
                      std::sin(0.5 * theta) * std::polar(1.0, phi)};
    return Spinor{-std::sin(0.5 * theta) * std::polar(1.0, -phi),
                  Complex{std::cos(0.5 * theta), 0.0}};
}

/// Singlet amplitude in the product basis |alpha n1> |beta n2>.
inline Complex singlet_component(const Spinor& alpha, const Spinor& beta)
{
    return (std::conj(alpha.up) * std::conj(beta.down) -
            std::conj(alpha.down) * std::conj(beta.up)) /
           std::sqrt(2.0);
}

/// Spin-singlet state of two packets, measured impulsively at t_i by
/// Stern-Gerlach stages along per-wing axes: the singlet is expanded in the
/// product measurement basis and each component's packets receive opposite
/// velocity kicks correlated with the spin sign.
inline MultiTimeWaveFunction build_epr(const EprGeometry& g)
{
    g.validate();
    MultiTimeWaveFunction wf;
    wf.masses = {g.mass, g.mass};
    const double kv = g.kick_velocity();
    const double t_i[2] = {g.t_i_1, g.t_i_2};

    auto wing_chain = [&](std::size_t k, int sign) {
        PacketHistory h;
        PacketSegment rest;
        rest.birth = Event{g.emission.t, g.emission.z};
        rest.v = 0.0;
        rest.sigma = g.sigma;
        rest.valid_until = Hyperplane::at_time(t_i[k]);
        PacketSegment kicked;
        kicked.birth = Event{t_i[k], g.emission.z};
        kicked.v = sign * kv;
        kicked.sigma = g.sigma;
        kicked.valid_from = Hyperplane::at_time(t_i[k]);
        h.segments = {rest, kicked};
        return h;
    };

    for (int a : {+1, -1})
        for (int b : {+1, -1}) {
            const Spinor sa = axis_spinor(g.axis1, a);
            const Spinor sb = axis_spinor(g.axis2, b);
            const Complex c = singlet_component(sa, sb);
            if (std::abs(c) < 1e-14) continue;
            Branch br;
            br.coeff = c;
            br.packets = {wing_chain(0, a), wing_chain(1, b)};
            br.spinors = {sa, sb};
            wf.branches.push_back(std::move(br));
        }

    for (std::size_t k = 0; k < 2; ++k) {
        Interaction ia;
        ia.kind = InteractionKind::SternGerlach;
        ia.particle = k;
        ia.fire = Hyperplane::at_time(t_i[k]);
        ia.window_start = Hyperplane::at_time(t_i[k]);
        ia.window_end = Hyperplane::at_time(t_i[k] + g.separation_window());
        ia.element = Hyperplane::at_position(g.emission.z);
        wf.schedule.push_back(ia);
    }
    return wf;
}

// ---------------------------------------------------------------------------
// Classification

enum class ExperimentKind { Hsz, Epr };

struct Outcome {
    std::vector<int> signs;  // +1 / -1 per particle
    bool ambiguous = false;
    std::size_t ambiguous_particle = 0;

    bool operator==(const Outcome& o) const
    {
        return signs == o.signs && ambiguous == o.ambiguous;
    }
};

struct ClassificationSpec {
    ExperimentKind kind = ExperimentKind::Hsz;
    double decision_time = 60.0;  // t_nu (interferometer) or past separation (EPR)
    double reference_z = 0.0;     // splitter plane / packet rest position
    double margin = 1.0;          // |z - reference| below this is ambiguous
};

inline ClassificationSpec hsz_classification(const HszGeometry& g)
{
    return ClassificationSpec{ExperimentKind::Hsz, g.t_nu, g.splitter_plane(), g.sigma};
}

inline ClassificationSpec epr_classification(const EprGeometry& g)
{
    const double t = std::max(g.t_i_1, g.t_i_2) + g.separation_window();
    return ClassificationSpec{ExperimentKind::Epr, t, g.emission.z, g.sigma};
}

/// Exit labels from the first row at which each particle's time exceeds the
/// decision time. Runs that never reach it, or sit within the ambiguity
/// margin of the reference plane, are flagged for exclusion.
inline Outcome classify(const TrajectoryTable& table, const ClassificationSpec& spec)
{
    Outcome out;
    const std::size_t n = table.start.events.size();
    out.signs.assign(n, 0);
    for (std::size_t k = 0; k < n; ++k) {
        bool decided = false;
        for (const auto& row : table.rows) {
            if (row.events[k].t <= spec.decision_time) continue;
            const double d = row.events[k].z - spec.reference_z;
            if (std::abs(d) < spec.margin) {
                out.ambiguous = true;
                out.ambiguous_particle = k;
                return out;
            }
            out.signs[k] = d > 0.0 ? 1 : -1;
            decided = true;
            break;
        }
        if (!decided) {
            out.ambiguous = true;
            out.ambiguous_particle = k;
            return out;
        }
    }
    return out;
}

/// Suggested horizons: slightly past the classification time.
inline std::vector<double> default_stop_times(const ClassificationSpec& spec,
                                              std::size_t particles)
{
    return std::vector<double>(particles, spec.decision_time + 2.0);
}

/// Index 0..3 for outcomes (++, +-, -+, --); -1 for ambiguous.
inline int joint_outcome_index(const Outcome& o)
{
    if (o.ambiguous || o.signs.size() != 2) return -1;
    return (o.signs[0] > 0 ? 0 : 2) + (o.signs[1] > 0 ? 0 : 1);
}

}  // namespace pilotwave
