// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

// 1+1-dimensional special-relativistic kinematics in natural units (c = 1).
// Signature convention (+,-): interval2 = dt^2 - dz^2.

namespace pilotwave {

struct ModelViolation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A point of one particle's space-time: coordinate time and position along z.
struct Event {
    double t = 0.0;
    double z = 0.0;
};

/// One point of configuration space-time: one Event per particle.
struct ConfigPoint {
    std::vector<Event> events;

    std::size_t particles() const { return events.size(); }
};

inline double lorentz_gamma(double v)
{
    if (std::abs(v) >= 1.0)
        throw ModelViolation("lorentz_gamma: |v| >= 1");
    return 1.0 / std::sqrt((1.0 - v) * (1.0 + v));
}

/// Squared invariant interval between two events, (dt)^2 - (dz)^2.
inline double interval2(const Event& a, const Event& b)
{
    const double dt = b.t - a.t;
    const double dz = b.z - a.z;
    return dt * dt - dz * dz;
}

/// Passive boost along z with velocity beta in (-1, 1).
class Boost {
public:
    explicit Boost(double beta) : beta_(beta)
    {
        if (std::abs(beta) >= 1.0)
            throw std::invalid_argument("Boost: |beta| must be < 1");
        gamma_ = lorentz_gamma(beta);
    }

    double beta() const { return beta_; }
    double gamma() const { return gamma_; }
    Boost inverse() const { return Boost(-beta_); }

private:
    double beta_;
    double gamma_;
};

/// Coordinates of the same event in the frame moving with b.beta.
inline Event boost_event(const Event& e, const Boost& b)
{
    return Event{b.gamma() * (e.t - b.beta() * e.z),
                 b.gamma() * (e.z - b.beta() * e.t)};
}

inline ConfigPoint boost_point(const ConfigPoint& p, const Boost& b)
{
    ConfigPoint out;
    out.events.reserve(p.events.size());
    for (const auto& e : p.events) out.events.push_back(boost_event(e, b));
    return out;
}

/// Velocity of a worldline with velocity v as seen from the frame moving with b.beta.
inline double velocity_add(double v, const Boost& b)
{
    if (std::abs(v) >= 1.0)
        throw ModelViolation("velocity_add: |v| >= 1");
    return (v - b.beta()) / (1.0 - v * b.beta());
}

/// Coordinate displacement of one equal-proper-time step: dt = gamma(v) dtau, dz = v dt.
/// Satisfies dt^2 - dz^2 = dtau^2 up to rounding.
struct StepDisplacement {
    double dt = 0.0;
    double dz = 0.0;
};

inline StepDisplacement proper_time_step(double v, double dtau)
{
    if (std::abs(v) >= 1.0)
        throw ModelViolation("proper_time_step: superluminal velocity");
    if (dtau <= 0.0)
        throw std::invalid_argument("proper_time_step: dtau must be > 0");
    const double dt = lorentz_gamma(v) * dtau;
    return StepDisplacement{dt, v * dt};
}

/// A straight locus { (t,z) : wt*t + wz*z = c } carried covariantly across frames.
/// Build-frame time slices have w = (1,0); element worldlines (fixed z) have w = (0,1).
/// signed_value(e) < 0 on the "before"/"below" side.
class Hyperplane {
public:
    Hyperplane() = default;
    Hyperplane(double wt, double wz, double c) : wt_(wt), wz_(wz), c_(c) {}

    static Hyperplane at_time(double t) { return Hyperplane(1.0, 0.0, t); }
    static Hyperplane at_position(double z) { return Hyperplane(0.0, 1.0, z); }
    static Hyperplane never()
    {
        return Hyperplane(1.0, 0.0, std::numeric_limits<double>::infinity());
    }

    double signed_value(const Event& e) const { return wt_ * e.t + wz_ * e.z - c_; }
    bool before(const Event& e) const { return signed_value(e) < 0.0; }

    /// Time coordinate of the locus at fixed z (requires wt != 0).
    double time_at(double z) const { return (c_ - wz_ * z) / wt_; }

    /// Fraction s in [0, inf) at which the straight worldline e + s*(dt,dz)
    /// crosses the plane; negative result means no forward crossing.
    double crossing_fraction(const Event& e, double dt, double dz) const
    {
        const double rate = wt_ * dt + wz_ * dz;
        if (rate == 0.0) return -1.0;
        return -signed_value(e) / rate;
    }

    /// Same locus expressed in the frame moving with b.beta.
    Hyperplane boosted(const Boost& b) const
    {
        // Covector transform: wt*t + wz*z is invariant when (t,z) are boosted.
        const double g = b.gamma();
        const double beta = b.beta();
        return Hyperplane(g * (wt_ + beta * wz_), g * (wz_ + beta * wt_), c_);
    }

    double wt() const { return wt_; }
    double wz() const { return wz_; }
    double c() const { return c_; }

private:
    double wt_ = 1.0;
    double wz_ = 0.0;
    double c_ = 0.0;
};

}  // namespace pilotwave
