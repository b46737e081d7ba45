// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <complex>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pilotwave/spacetime.hpp"

// Multi-time wave functions as finite sums of branch products. Each branch is
// a complex coefficient times one Gaussian packet history and one constant
// spinor per particle. Packets are rigid (non-dispersive): between
// interactions every segment is an inertial worldline, which keeps the model
// exactly boost-covariant outside interaction windows.

namespace pilotwave {

using Complex = std::complex<double>;

struct UncoveredTime : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NodeEncounter : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct KinematicAmbiguity : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Packets

inline Hyperplane unbounded_below()
{
    return Hyperplane(1.0, 0.0, -std::numeric_limits<double>::infinity());
}

/// One inertial piece of a packet history. The center worldline passes
/// through `birth` with group velocity `v`; validity is bounded by two
/// hyperplanes so that a boosted segment keeps the same space-time support.
/// The birth event need not lie inside the validity slab.
struct PacketSegment {
    Event birth;
    double v = 0.0;
    double sigma = 1.0;
    double amp = 1.0;
    double phase = 0.0;
    Hyperplane valid_from = unbounded_below();
    Hyperplane valid_until = Hyperplane::never();

    double center_at(double t) const { return birth.z + v * (t - birth.t); }

    bool covers(const Event& e) const
    {
        return valid_from.signed_value(e) >= 0.0 && valid_until.signed_value(e) < 0.0;
    }

    bool in_time_slab(const Event& e) const { return covers(e); }

    /// Width this packet would have in its own rest frame.
    double rest_width() const { return sigma * lorentz_gamma(v); }
};

inline bool same_plane(const Hyperplane& a, const Hyperplane& b)
{
    return a.wt() == b.wt() && a.wz() == b.wz() && a.c() == b.c();
}

/// Exact value identity; children of different parents that land on the same
/// worldline with the same envelope compare equal, which is what merges the
/// coincident exit beams.
inline bool same_segment(const PacketSegment& a, const PacketSegment& b)
{
    return a.birth.t == b.birth.t && a.birth.z == b.birth.z && a.v == b.v &&
           a.sigma == b.sigma && a.amp == b.amp && a.phase == b.phase &&
           same_plane(a.valid_from, b.valid_from) &&
           same_plane(a.valid_until, b.valid_until);
}

inline double packet_norm_factor(double sigma)
{
    // (2 pi sigma^2)^(-1/4)
    return 1.0 / std::sqrt(std::sqrt(6.283185307179586 * sigma * sigma));
}

/// Complex amplitude of one segment at an event.
/// N(sigma) exp(-d^2/4s^2) exp(i[m gamma v d + phase]), d = z - z_c(t).
inline Complex packet_amplitude(const PacketSegment& seg, const Event& e, double mass)
{
    if (!seg.covers(e))
        throw UncoveredTime("packet_amplitude: event outside segment validity");
    const double d = e.z - seg.center_at(e.t);
    const double s2 = seg.sigma * seg.sigma;
    const double envelope = std::exp(-d * d / (4.0 * s2));
    const double p = mass * lorentz_gamma(seg.v) * seg.v;
    return seg.amp * packet_norm_factor(seg.sigma) * envelope *
           std::polar(1.0, p * d + seg.phase);
}

/// d/dz of packet_amplitude at fixed t.
inline Complex packet_amplitude_dz(const PacketSegment& seg, const Event& e, double mass)
{
    const double d = e.z - seg.center_at(e.t);
    const double s2 = seg.sigma * seg.sigma;
    const double p = mass * lorentz_gamma(seg.v) * seg.v;
    return packet_amplitude(seg, e, mass) * Complex(-d / (2.0 * s2), p);
}

/// A particle's packet within one branch: a chain of segments whose validity
/// slabs tile the particle's time axis.
struct PacketHistory {
    std::vector<PacketSegment> segments;

    int segment_index_at(const Event& e) const
    {
        for (std::size_t i = 0; i < segments.size(); ++i)
            if (segments[i].covers(e)) return static_cast<int>(i);
        return -1;
    }

    const PacketSegment& segment_at(const Event& e) const
    {
        const int i = segment_index_at(e);
        if (i < 0) throw UncoveredTime("PacketHistory: uncovered time coordinate");
        return segments[static_cast<std::size_t>(i)];
    }

    /// Group velocity of the covering segment.
    double plain_velocity_at(const Event& e) const { return segment_at(e).v; }

    Complex amplitude_at(const Event& e, double mass) const
    {
        return packet_amplitude(segment_at(e), e, mass);
    }

    /// Value and d/dz at fixed t.
    std::pair<Complex, Complex> amplitude_and_dz_at(const Event& e, double mass) const
    {
        const auto& s = segment_at(e);
        const Complex val = packet_amplitude(s, e, mass);
        const double d = e.z - s.center_at(e.t);
        const double p = mass * lorentz_gamma(s.v) * s.v;
        return {val, val * Complex(-d / (2.0 * s.sigma * s.sigma), p)};
    }
};

// ---------------------------------------------------------------------------
// Spin

/// Two-component spinor in the z basis.
struct Spinor {
    Complex up{1.0, 0.0};
    Complex down{0.0, 0.0};

    double norm2() const { return std::norm(up) + std::norm(down); }

    Complex component(int s) const { return s == 0 ? up : down; }
};

inline Complex spinor_dot(const Spinor& a, const Spinor& b)
{
    return std::conj(a.up) * b.up + std::conj(a.down) * b.down;
}

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;
};

// ---------------------------------------------------------------------------
// Branches and interactions

struct Branch {
    Complex coeff{1.0, 0.0};
    std::vector<PacketHistory> packets;  // one per particle
    std::vector<Spinor> spinors;         // one per particle
};

enum class InteractionKind { Splitter, SternGerlach };

/// Schedule entry consumed by the trajectory integrator: when the rider of
/// `particle` crosses `fire`, branch fates are decided; between `window_start`
/// and `window_end` packets of this particle may overlap, so field-mode
/// guidance must evaluate the full wave function there; `element` is the
/// optical element's worldline.
struct Interaction {
    InteractionKind kind = InteractionKind::Splitter;
    std::size_t particle = 0;
    Hyperplane fire;
    Hyperplane window_start;
    Hyperplane window_end;
    Hyperplane element;
};

struct MultiTimeWaveFunction {
    std::vector<Branch> branches;
    std::vector<double> masses;
    std::vector<Interaction> schedule;
    std::vector<double> boost_history;

    std::size_t particles() const { return masses.size(); }
    std::size_t spin_components() const { return std::size_t{1} << particles(); }

    bool in_window(std::size_t k, const Event& e) const
    {
        for (const auto& ia : schedule)
            if (ia.particle == k && ia.window_start.signed_value(e) >= 0.0 &&
                ia.window_end.signed_value(e) < 0.0)
                return true;
        return false;
    }
};

// ---------------------------------------------------------------------------
// Evaluation

/// Joint spinor-valued amplitude: component i holds the coefficient of the
/// product basis state where particle k is "up" if bit k of i is 0 and
/// "down" if it is 1.
struct JointAmplitude {
    std::vector<Complex> comps;

    double norm2() const
    {
        double s = 0.0;
        for (const auto& c : comps) s += std::norm(c);
        return s;
    }
};

namespace detail {

inline Complex branch_scalar(const Branch& br, const ConfigPoint& p,
                             const std::vector<double>& masses)
{
    Complex a = br.coeff;
    for (std::size_t k = 0; k < p.events.size(); ++k)
        a *= br.packets[k].amplitude_at(p.events[k], masses[k]);
    return a;
}

inline void accumulate_joint(JointAmplitude& out, const Branch& br, Complex scalar,
                             std::size_t n)
{
    const std::size_t m = std::size_t{1} << n;
    for (std::size_t i = 0; i < m; ++i) {
        Complex s = scalar;
        for (std::size_t k = 0; k < n; ++k) s *= br.spinors[k].component((i >> k) & 1);
        out.comps[i] += s;
    }
}

}  // namespace detail

inline JointAmplitude evaluate(const MultiTimeWaveFunction& wf, const ConfigPoint& p)
{
    if (p.events.size() != wf.particles())
        throw std::invalid_argument("evaluate: wrong particle count");
    JointAmplitude out;
    out.comps.assign(wf.spin_components(), Complex{0.0, 0.0});
    for (const auto& br : wf.branches)
        detail::accumulate_joint(out, br, detail::branch_scalar(br, p, wf.masses), wf.particles());
    return out;
}

/// Joint amplitude together with its derivative in z of particle k.
inline std::pair<JointAmplitude, JointAmplitude> evaluate_with_gradient(
    const MultiTimeWaveFunction& wf, const ConfigPoint& p, std::size_t k)
{
    JointAmplitude val, grad;
    val.comps.assign(wf.spin_components(), Complex{0.0, 0.0});
    grad.comps.assign(wf.spin_components(), Complex{0.0, 0.0});
    for (const auto& br : wf.branches) {
        Complex rest = br.coeff;
        Complex ak{0.0, 0.0}, dk{0.0, 0.0};
        for (std::size_t j = 0; j < wf.particles(); ++j) {
            if (j == k) {
                std::tie(ak, dk) = br.packets[j].amplitude_and_dz_at(p.events[j], wf.masses[j]);
            } else {
                rest *= br.packets[j].amplitude_at(p.events[j], wf.masses[j]);
            }
        }
        detail::accumulate_joint(val, br, rest * ak, wf.particles());
        detail::accumulate_joint(grad, br, rest * dk, wf.particles());
    }
    return {val, grad};
}

inline double density(const MultiTimeWaveFunction& wf, const ConfigPoint& p)
{
    return evaluate(wf, p).norm2();
}

/// Reference scale for node detection: the largest branch peak product at p.
inline double local_peak_scale(const MultiTimeWaveFunction& wf, const ConfigPoint& p)
{
    double best = 0.0;
    for (const auto& br : wf.branches) {
        double s = std::norm(br.coeff);
        bool ok = true;
        for (std::size_t k = 0; k < wf.particles(); ++k) {
            const int i = br.packets[k].segment_index_at(p.events[k]);
            if (i < 0) {
                ok = false;
                break;
            }
            const auto& seg = br.packets[k].segments[static_cast<std::size_t>(i)];
            s *= seg.amp * seg.amp / std::sqrt(6.283185307179586 * seg.sigma * seg.sigma);
        }
        if (ok) best = std::max(best, s);
    }
    return best;
}

constexpr double kNodeRelativeThreshold = 1e-12;

/// Incoherent per-branch weights |coeff * prod packets|^2, normalized.
struct BranchWeights {
    std::vector<double> weights;
    std::optional<std::size_t> effective;  // set when one weight > 1 - 1e-6
};

inline BranchWeights branch_weights(const MultiTimeWaveFunction& wf, const ConfigPoint& p)
{
    BranchWeights out;
    out.weights.reserve(wf.branches.size());
    double total = 0.0;
    for (const auto& br : wf.branches) {
        const double w = std::norm(detail::branch_scalar(br, p, wf.masses));
        out.weights.push_back(w);
        total += w;
    }
    if (total <= 0.0)
        throw NodeEncounter("branch_weights: zero density");
    for (auto& w : out.weights) w /= total;
    for (std::size_t b = 0; b < out.weights.size(); ++b)
        if (out.weights[b] > 1.0 - 1e-6) out.effective = b;
    return out;
}

// ---------------------------------------------------------------------------
// Guidance

enum class GuidanceMode { Kinematic, Field };

/// Local momentum beable for particle k, Im(Psi^dag d_k Psi) / Psi^dag Psi.
/// Value, gradient and the node-threshold scale come from one branch pass.
inline double momentum_field(const MultiTimeWaveFunction& wf, const ConfigPoint& p,
                             std::size_t k)
{
    const std::size_t n = wf.particles();
    JointAmplitude val, grad;
    val.comps.assign(wf.spin_components(), Complex{0.0, 0.0});
    grad.comps.assign(wf.spin_components(), Complex{0.0, 0.0});
    double peak = 0.0;
    for (const auto& br : wf.branches) {
        // cheap first pass: peak scale plus an envelope screen (branches
        // buried under e^-50 cannot move the velocity or the node test)
        double expo = 0.0;
        double branch_peak = std::norm(br.coeff);
        for (std::size_t j = 0; j < n; ++j) {
            const auto& seg = br.packets[j].segment_at(p.events[j]);
            const double d = p.events[j].z - seg.center_at(p.events[j].t);
            expo -= d * d / (4.0 * seg.sigma * seg.sigma);
            const double nf = packet_norm_factor(seg.sigma);
            branch_peak *= seg.amp * seg.amp * nf * nf;
        }
        peak = std::max(peak, branch_peak);
        if (expo < -50.0) continue;

        Complex rest = br.coeff;
        Complex ak{0.0, 0.0}, dk{0.0, 0.0};
        for (std::size_t j = 0; j < n; ++j) {
            if (j == k) {
                std::tie(ak, dk) = br.packets[j].amplitude_and_dz_at(p.events[j], wf.masses[j]);
            } else {
                rest *= br.packets[j].amplitude_at(p.events[j], wf.masses[j]);
            }
        }
        detail::accumulate_joint(val, br, rest * ak, n);
        detail::accumulate_joint(grad, br, rest * dk, n);
    }
    const double rho = val.norm2();
    if (rho < kNodeRelativeThreshold * peak)
        throw NodeEncounter("momentum_field: density below node threshold");
    double num = 0.0;
    for (std::size_t i = 0; i < val.comps.size(); ++i)
        num += std::imag(std::conj(val.comps[i]) * grad.comps[i]);
    return num / rho;
}

/// Guidance velocity of particle k at p.
///
/// Kinematic mode returns the group velocity of the branch packets covering
/// the point; it requires all branches with non-negligible weight there to
/// agree (they do wherever branches are non-overlapping in coordinate k, and
/// coincident exit beams share one velocity by construction).
///
/// Field mode converts the local momentum beable into a time-like velocity,
/// v = P / sqrt(m^2 + P^2), so a single packet with group velocity v is
/// guided at exactly v and |v| < 1 holds structurally.
inline double guidance_velocity(const MultiTimeWaveFunction& wf, const ConfigPoint& p,
                                std::size_t k, GuidanceMode mode)
{
    if (mode == GuidanceMode::Field) {
        const double P = momentum_field(wf, p, k);
        const double m = wf.masses[k];
        const double v = P / std::sqrt(m * m + P * P);
        if (!std::isfinite(v) || std::abs(v) >= 1.0)
            throw ModelViolation("guidance_velocity: field-mode velocity not time-like");
        return v;
    }

    double max_w = 0.0;
    std::vector<double> w(wf.branches.size(), 0.0);
    for (std::size_t b = 0; b < wf.branches.size(); ++b) {
        w[b] = std::norm(detail::branch_scalar(wf.branches[b], p, wf.masses));
        max_w = std::max(max_w, w[b]);
    }
    if (max_w <= 0.0) throw NodeEncounter("guidance_velocity: zero density");
    bool found = false;
    double v = 0.0;
    for (std::size_t b = 0; b < wf.branches.size(); ++b) {
        if (w[b] <= 1e-12 * max_w) continue;
        const double vb = wf.branches[b].packets[k].plain_velocity_at(p.events[k]);
        if (!found) {
            v = vb;
            found = true;
        } else if (std::abs(vb - v) > 1e-9) {
            throw KinematicAmbiguity(
                "guidance_velocity: overlapping branches disagree in coordinate " +
                std::to_string(k));
        }
    }
    return v;
}

/// Spin beable of particle k: Psi^dag sigma^(k) Psi / Psi^dag Psi.
inline Vec3 spin_vector(const MultiTimeWaveFunction& wf, const ConfigPoint& p, std::size_t k)
{
    const JointAmplitude a = evaluate(wf, p);
    const double rho = a.norm2();
    if (rho < kNodeRelativeThreshold * local_peak_scale(wf, p))
        throw NodeEncounter("spin_vector: density below node threshold");
    const std::size_t bit = std::size_t{1} << k;
    Complex cross{0.0, 0.0};
    double sz = 0.0;
    for (std::size_t i = 0; i < a.comps.size(); ++i) {
        if ((i & bit) == 0) {
            cross += std::conj(a.comps[i]) * a.comps[i | bit];
            sz += std::norm(a.comps[i]);
        } else {
            sz -= std::norm(a.comps[i]);
        }
    }
    return Vec3{2.0 * std::real(cross) / rho, 2.0 * std::imag(cross) / rho, sz / rho};
}

// ---------------------------------------------------------------------------
// Boosts

inline PacketSegment boost_segment(const PacketSegment& seg, const Boost& b)
{
    PacketSegment out = seg;
    out.birth = boost_event(seg.birth, b);
    out.v = velocity_add(seg.v, b);
    // The rest-frame width is invariant; the moving width contracts.
    out.sigma = seg.sigma * lorentz_gamma(seg.v) / lorentz_gamma(out.v);
    out.valid_from = seg.valid_from.boosted(b);
    out.valid_until = seg.valid_until.boosted(b);
    return out;
}

/// Passive re-expression of the wave function in the frame moving with b.beta.
/// Branch coefficients and constant phases are carried unchanged.
inline MultiTimeWaveFunction boost_wavefunction(const MultiTimeWaveFunction& wf,
                                                const Boost& b)
{
    MultiTimeWaveFunction out;
    out.masses = wf.masses;
    out.boost_history = wf.boost_history;
    out.boost_history.push_back(b.beta());
    out.branches.reserve(wf.branches.size());
    for (const auto& br : wf.branches) {
        Branch nb;
        nb.coeff = br.coeff;
        nb.spinors = br.spinors;
        nb.packets.reserve(br.packets.size());
        for (const auto& ph : br.packets) {
            PacketHistory nh;
            nh.segments.reserve(ph.segments.size());
            for (const auto& seg : ph.segments) nh.segments.push_back(boost_segment(seg, b));
            nb.packets.push_back(std::move(nh));
        }
        out.branches.push_back(std::move(nb));
    }
    out.schedule.reserve(wf.schedule.size());
    for (const auto& ia : wf.schedule) {
        Interaction ni = ia;
        ni.fire = ia.fire.boosted(b);
        ni.window_start = ia.window_start.boosted(b);
        ni.window_end = ia.window_end.boosted(b);
        ni.element = ia.element.boosted(b);
        out.schedule.push_back(ni);
    }
    return out;
}

}  // namespace pilotwave
