// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "pilotwave/spacetime.hpp"
#include "pilotwave/wavefunction.hpp"

// Configuration-space-time trajectory integration under a coordination rule.
//
// Kinematic mode advances each particle inertially along its branch packet,
// resolving interactions by covariant transport rules (combined-CDF quantile
// transport at splitters, the relative-offset rule at Stern-Gerlach stages).
// Every ingredient (four-velocity steps, boundary hyperplanes, rest-frame
// offsets, branch weights) is frame-covariant, so kinematic integration
// commutes with boosts to rounding accuracy.
//
// Field mode integrates the guidance field honestly with an explicit-midpoint
// step in the rule parameter, evaluating the full multi-time wave function
// inside interaction windows; outside windows the field reduces to the packet
// group velocity and the integrator uses that directly.

namespace pilotwave {

struct InvariantProperTime {
    double dtau = 1e-3;
};

struct FrameEqualTime {
    double beta = 0.0;
    double dt = 1e-3;
};

using CoordinationRule = std::variant<InvariantProperTime, FrameEqualTime>;

inline double rule_step_size(const CoordinationRule& rule)
{
    if (std::holds_alternative<InvariantProperTime>(rule))
        return std::get<InvariantProperTime>(rule).dtau;
    return std::get<FrameEqualTime>(rule).dt;
}

/// Per-particle stop loci, carried as hyperplanes so a boosted run can use
/// the boosted horizon of the original.
struct Horizon {
    std::vector<Hyperplane> stops;

    static Horizon at_times(const std::vector<double>& ts)
    {
        Horizon h;
        h.stops.reserve(ts.size());
        for (double t : ts) h.stops.push_back(Hyperplane::at_time(t));
        return h;
    }

    Horizon boosted(const Boost& b) const
    {
        Horizon h;
        h.stops.reserve(stops.size());
        for (const auto& s : stops) h.stops.push_back(s.boosted(b));
        return h;
    }
};

enum class TrajectoryStatus { Completed, NodeAborted, StepCeilingExceeded };

struct TableRow {
    std::size_t step = 0;
    std::vector<Event> events;
    std::vector<Vec3> spins;
};

struct TrajectoryTable {
    std::vector<TableRow> rows;
    TrajectoryStatus status = TrajectoryStatus::Completed;
    std::string abort_reason;

    // metadata
    std::string experiment;
    CoordinationRule rule;
    GuidanceMode mode = GuidanceMode::Kinematic;
    ConfigPoint start;
    std::size_t row_stride = 1;
    std::size_t total_steps = 0;
    std::vector<double> boost_history;  // boosts applied by boost_table
    std::vector<std::vector<Hyperplane>> kink_planes;  // per particle: worldline kinks
    bool spin_transport_flagged = true;  // spin vectors carried unchanged by boosts
};

struct IntegrateOptions {
    GuidanceMode mode = GuidanceMode::Kinematic;
    std::size_t row_stride = 1;
    std::size_t max_steps = 2'000'000;
    bool fates_only = false;  // record only the first and last row, jump inertial stretches
    int max_node_halvings = 8;
};

namespace detail {

inline JointAmplitude evaluate_subset(const MultiTimeWaveFunction& wf,
                                      const std::vector<std::size_t>& subset,
                                      const ConfigPoint& p)
{
    JointAmplitude out;
    out.comps.assign(wf.spin_components(), Complex{0.0, 0.0});
    for (std::size_t b : subset)
        accumulate_joint(out, wf.branches[b], branch_scalar(wf.branches[b], p, wf.masses),
                         wf.particles());
    return out;
}

inline Vec3 spin_vector_subset(const MultiTimeWaveFunction& wf,
                               const std::vector<std::size_t>& subset, const ConfigPoint& p,
                               std::size_t k)
{
    const JointAmplitude a = evaluate_subset(wf, subset, p);
    const double rho = a.norm2();
    if (rho <= 0.0) return Vec3{};
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

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / 1.4142135623730951); }

/// Invariant (rest-frame) offset of an event from a segment's center worldline.
inline double rest_offset(const PacketSegment& seg, const Event& e)
{
    return lorentz_gamma(seg.v) * (e.z - seg.center_at(e.t));
}

/// Group velocity where all branches carrying weight at p agree, computed
/// from envelope log-weights only (no trigonometry). Empty when branches
/// disagree (genuine packet overlap) or a segment is missing.
inline std::optional<double> common_packet_velocity(const MultiTimeWaveFunction& wf,
                                                    const ConfigPoint& p, std::size_t k)
{
    constexpr double kLogCut = 27.6;  // weight ratio e^-27.6 ~ 1e-12
    double best = -std::numeric_limits<double>::infinity();
    std::vector<double> lw(wf.branches.size());
    std::vector<double> vel(wf.branches.size());
    for (std::size_t b = 0; b < wf.branches.size(); ++b) {
        const auto& br = wf.branches[b];
        double s = std::log(std::max(std::norm(br.coeff), 1e-300));
        for (std::size_t j = 0; j < p.events.size(); ++j) {
            const int si = br.packets[j].segment_index_at(p.events[j]);
            if (si < 0) return std::nullopt;
            const auto& seg = br.packets[j].segments[static_cast<std::size_t>(si)];
            const double d = p.events[j].z - seg.center_at(p.events[j].t);
            s += -d * d / (2.0 * seg.sigma * seg.sigma) +
                 2.0 * std::log(seg.amp / std::sqrt(seg.sigma));
            if (j == k) vel[b] = seg.v;
        }
        lw[b] = s;
        best = std::max(best, s);
    }
    double v = 0.0;
    bool found = false;
    for (std::size_t b = 0; b < wf.branches.size(); ++b) {
        if (lw[b] < best - kLogCut) continue;
        if (!found) {
            v = vel[b];
            found = true;
        } else if (std::abs(vel[b] - v) > 1e-9) {
            return std::nullopt;
        }
    }
    if (!found) return std::nullopt;
    return v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Integrator

class TrajectoryIntegrator {
public:
    TrajectoryIntegrator(const MultiTimeWaveFunction& wf, ConfigPoint start,
                         CoordinationRule rule, Horizon horizon, IntegrateOptions opt)
        : wf_(wf),
          rule_(rule),
          horizon_(std::move(horizon)),
          opt_(opt),
          events_(std::move(start.events))
    {
        n_ = wf_.particles();
        if (events_.size() != n_)
            throw std::invalid_argument("integrate: start point has wrong particle count");
        if (horizon_.stops.size() != n_)
            throw std::invalid_argument("integrate: horizon has wrong particle count");
        frozen_.assign(n_, false);
        fired_.assign(wf_.schedule.size(), false);

        if (std::holds_alternative<FrameEqualTime>(rule_)) {
            // work in the rule frame; rows are mapped back on recording
            const double beta = std::get<FrameEqualTime>(rule_).beta;
            if (beta != 0.0) frame_ = Boost(beta);
        }
        step_size_ = rule_step_size(rule_);
        proper_time_rule_ = std::holds_alternative<InvariantProperTime>(rule_);

        // start-surface fates are anchored to the frame the experiment was
        // built in; a boosted wave function knows its way back
        double net = 0.0;
        for (double beta : wf_.boost_history) net = (net + beta) / (1.0 + net * beta);
        if (net != 0.0) {
            home_ = Boost(-net);
            home_wf_ = boost_wavefunction(wf_, *home_);
        }
    }

    TrajectoryTable run()
    {
        TrajectoryTable table;
        table.rule = rule_;
        table.mode = opt_.mode;
        table.start = ConfigPoint{events_};
        table.row_stride = opt_.fates_only ? 0 : opt_.row_stride;
        collect_kink_planes();
        table.kink_planes = kinks_;

        try {
            initialize();
        } catch (const std::exception& err) {
            table.status = TrajectoryStatus::NodeAborted;
            table.abort_reason = err.what();
            return table;
        }

        record_row(table, 0);
        std::size_t step = 0;
        while (!all_frozen() && step < opt_.max_steps) {
            try {
                if (opt_.fates_only && fast_forward()) {
                    ++step;
                    update_frozen();
                    continue;
                }
                if (opt_.mode == GuidanceMode::Kinematic)
                    kinematic_step();
                else
                    field_step();
            } catch (const NodeEncounter& err) {
                table.status = TrajectoryStatus::NodeAborted;
                table.abort_reason = err.what();
                break;
            } catch (const ModelViolation& err) {
                table.status = TrajectoryStatus::NodeAborted;
                table.abort_reason = err.what();
                break;
            }
            ++step;
            update_frozen();
            if (!opt_.fates_only && step % opt_.row_stride == 0) record_row(table, step);
        }
        if (step >= opt_.max_steps && !all_frozen())
            table.status = TrajectoryStatus::StepCeilingExceeded;
        if (opt_.fates_only || (table.rows.size() && table.rows.back().step != step))
            record_row(table, step);
        table.total_steps = step;
        return table;
    }

private:
    // --- setup -------------------------------------------------------------

    void collect_kink_planes()
    {
        kinks_.assign(n_, {});
        for (std::size_t k = 0; k < n_; ++k) {
            auto& planes = kinks_[k];
            for (const auto& br : wf_.branches)
                for (const auto& seg : br.packets[k].segments) {
                    if (!std::isfinite(seg.valid_until.c())) continue;
                    bool known = false;
                    for (const auto& pl : planes)
                        if (same_plane(pl, seg.valid_until)) known = true;
                    if (!known) planes.push_back(seg.valid_until);
                }
        }
    }

    void initialize()
    {
        snap_start_to_boundaries();

        // density precondition
        const ConfigPoint p{events_};
        const double rho = density(wf_, p);
        if (rho < kNodeRelativeThreshold * local_peak_scale(wf_, p))
            throw NodeEncounter("integrate: start point at a node");

        if (opt_.mode == GuidanceMode::Kinematic) assign_riders();

        // interactions already behind the start are either resolved by the
        // rider assignment or decided by the start-surface fate rule
        for (std::size_t i = 0; i < wf_.schedule.size(); ++i) {
            const auto& ia = wf_.schedule[i];
            if (ia.fire.signed_value(events_[ia.particle]) >= 0.0) fired_[i] = true;
        }
    }

    /// A start that sits within rounding of a fire or segment boundary is
    /// moved onto its far side, so a boosted copy of a surface launch makes
    /// the same structural decisions as the original.
    void snap_start_to_boundaries()
    {
        for (std::size_t k = 0; k < n_; ++k) {
            Event& e = events_[k];
            const double scale = 1e-9 * (1.0 + std::abs(e.t) + std::abs(e.z));
            auto snap = [&](const Hyperplane& pl) {
                if (pl.wt() == 0.0) return;
                for (int it = 0; it < 4; ++it) {
                    const double sv = pl.signed_value(e);
                    if (sv >= 0.0 || sv < -scale) return;
                    e.t += -sv / pl.wt() * 1.5;
                }
            };
            for (const auto& ia : wf_.schedule)
                if (ia.particle == k) snap(ia.fire);
            for (const auto& pl : kinks_[k]) snap(pl);
        }
    }

    /// Pick, for each particle, the branch packet it rides at the start.
    /// Particles starting inside an interaction overlap are decided by the
    /// start-surface rule after all unambiguous slots are assigned.
    void assign_riders()
    {
        riders_.assign(n_, Rider{});
        std::vector<double> w(wf_.branches.size(), 0.0);
        double max_w = 0.0;
        const ConfigPoint p{events_};
        for (std::size_t b = 0; b < wf_.branches.size(); ++b) {
            w[b] = std::norm(detail::branch_scalar(wf_.branches[b], p, wf_.masses));
            max_w = std::max(max_w, w[b]);
        }
        std::vector<std::size_t> ambiguous;
        for (std::size_t k = 0; k < n_; ++k) {
            std::vector<std::pair<std::size_t, int>> distinct;
            for (std::size_t b = 0; b < wf_.branches.size(); ++b) {
                if (w[b] <= 1e-9 * max_w) continue;
                const int si = wf_.branches[b].packets[k].segment_index_at(events_[k]);
                if (si < 0) throw UncoveredTime("integrate: start outside coverage");
                bool known = false;
                for (auto& [db, ds] : distinct)
                    if (same_segment(wf_.branches[db].packets[k].segments[ds],
                                     wf_.branches[b].packets[k].segments[si]))
                        known = true;
                if (!known) distinct.emplace_back(b, si);
            }
            if (distinct.empty()) throw NodeEncounter("integrate: start without support");
            riders_[k] = Rider{distinct[0].first, distinct[0].second};
            bool same_v = true;
            for (auto& [db, ds] : distinct)
                if (std::abs(wf_.branches[db].packets[k].segments[ds].v -
                             rider_segment(k).v) > 1e-12)
                    same_v = false;
            if (!same_v) ambiguous.push_back(k);
        }
        for (std::size_t k : ambiguous) surface_fate(k);
    }

    // --- rider bookkeeping ---------------------------------------------------

    struct Rider {
        std::size_t branch = 0;
        int seg = 0;
    };

    const PacketSegment& rider_segment(std::size_t k) const
    {
        return wf_.branches[riders_[k].branch].packets[k].segments[riders_[k].seg];
    }

    /// Branches whose current segments match the rider assignment in every
    /// slot except `except` (pass n_ to match all slots).
    std::vector<std::size_t> compatible_branches(std::size_t except) const
    {
        std::vector<std::size_t> out;
        for (std::size_t b = 0; b < wf_.branches.size(); ++b) {
            bool ok = true;
            for (std::size_t j = 0; j < n_ && ok; ++j) {
                if (j == except) continue;
                const int si = wf_.branches[b].packets[j].segment_index_at(events_[j]);
                if (si < 0 ||
                    !same_segment(wf_.branches[b].packets[j].segments[si],
                                  rider_segment(j)))
                    ok = false;
            }
            if (ok) out.push_back(b);
        }
        return out;
    }

    // --- fates ---------------------------------------------------------------

    struct ExitGroup {
        std::vector<std::size_t> branches;
        int seg_of_first = 0;
        double v = 0.0;
        double weight = 0.0;
    };

    /// <sum, sum> over a set of branches with the joint spinor inner products:
    /// coherent within equal-spinor families, incoherent across orthogonal
    /// ones. Packet envelopes cancel in the ratios used here because grouped
    /// children share one birth event and width.
    double gram_weight(const std::vector<std::size_t>& members) const
    {
        double total = 0.0;
        for (std::size_t i : members)
            for (std::size_t j : members) {
                Complex g = wf_.branches[i].coeff * std::conj(wf_.branches[j].coeff);
                for (std::size_t kk = 0; kk < n_; ++kk)
                    g *= spinor_dot(wf_.branches[j].spinors[kk], wf_.branches[i].spinors[kk]);
                total += std::real(g);
            }
        return total;
    }

    std::vector<ExitGroup> exit_groups(const std::vector<std::size_t>& candidates,
                                       std::size_t k) const
    {
        std::vector<ExitGroup> groups;
        for (std::size_t b : candidates) {
            const int si = wf_.branches[b].packets[k].segment_index_at(events_[k]);
            if (si < 0) continue;
            const auto& seg = wf_.branches[b].packets[k].segments[si];
            bool placed = false;
            for (auto& g : groups) {
                if (same_segment(
                        wf_.branches[g.branches[0]].packets[k].segments[g.seg_of_first], seg)) {
                    g.branches.push_back(b);
                    placed = true;
                }
            }
            if (!placed) groups.push_back(ExitGroup{{b}, si, seg.v, 0.0});
        }
        double total = 0.0;
        const ConfigPoint p{events_};
        for (auto& g : groups) {
            g.weight = gram_weight(g.branches);
            total += g.weight;
        }
        if (total <= 0.0) throw NodeEncounter("fate: zero exit weight");
        for (auto& g : groups) g.weight /= total;
        std::sort(groups.begin(), groups.end(),
                  [](const ExitGroup& a, const ExitGroup& b) { return a.v < b.v; });
        return groups;
    }

    void adopt_exit(std::size_t k, const ExitGroup& chosen)
    {
        riders_[k] = Rider{chosen.branches[0], chosen.seg_of_first};
    }

    /// Splitter fate at the interaction event: combined-CDF quantile transport.
    /// The incoming parents are ordered by approach side (higher velocity
    /// arrives from below); the rider's cumulative position is mapped onto the
    /// exit beams ordered by outgoing velocity.
    void splitter_fate(std::size_t k)
    {
        const auto candidates = compatible_branches(k);
        if (candidates.empty()) throw ModelViolation("splitter fate: no compatible branch");
        auto exits = exit_groups(candidates, k);
        if (exits.size() == 1) {
            adopt_exit(k, exits[0]);
            return;
        }

        // incoming mixture: group candidates by the parent segment (the chain
        // entry preceding the current child)
        struct ParentGroup {
            std::vector<std::size_t> branches;
            const PacketSegment* seg = nullptr;
            double weight = 0.0;
        };
        std::vector<ParentGroup> parents;
        for (std::size_t b : candidates) {
            const int ci = wf_.branches[b].packets[k].segment_index_at(events_[k]);
            if (ci <= 0) throw ModelViolation("splitter fate: missing parent segment");
            const auto& pseg = wf_.branches[b].packets[k].segments[ci - 1];
            bool placed = false;
            for (auto& g : parents)
                if (same_segment(*g.seg, pseg)) {
                    g.branches.push_back(b);
                    placed = true;
                }
            if (!placed) parents.push_back(ParentGroup{{b}, &pseg, 0.0});
        }
        double total = 0.0;
        const ConfigPoint p{events_};
        for (auto& g : parents) {
            g.weight = gram_weight(g.branches);
            total += g.weight;
        }
        for (auto& g : parents) g.weight /= total;
        // ascending arrival position = descending incoming velocity
        std::sort(parents.begin(), parents.end(),
                  [](const ParentGroup& a, const ParentGroup& b) {
                      return a.seg->v > b.seg->v;
                  });

        const auto& mine = rider_segment(k);
        double cum = 0.0;
        double F = -1.0;
        for (const auto& g : parents) {
            if (same_segment(*g.seg, mine)) {
                const double q_z =
                    detail::normal_cdf(detail::rest_offset(*g.seg, events_[k]) /
                                       g.seg->rest_width());
                F = cum + g.weight * q_z;
                break;
            }
            cum += g.weight;
        }
        if (F < 0.0) {
            std::string msg = "splitter fate: rider packet not among parents; rider birth=(" +
                              std::to_string(mine.birth.t) + "," + std::to_string(mine.birth.z) +
                              ") v=" + std::to_string(mine.v) + "; parents:";
            for (const auto& g : parents)
                msg += " [birth=(" + std::to_string(g.seg->birth.t) + "," +
                       std::to_string(g.seg->birth.z) + ") v=" + std::to_string(g.seg->v) + "]";
            throw ModelViolation(msg);
        }
        choose_exit_by_cdf(k, exits, F);
    }

    void choose_exit_by_cdf(std::size_t k, const std::vector<ExitGroup>& exits, double F)
    {
        double cum = 0.0;
        for (const auto& e : exits) {
            cum += e.weight;
            if (F < cum || &e == &exits.back()) {
                adopt_exit(k, e);
                return;
            }
        }
    }

    /// Stern-Gerlach fate: the branch pair is selected by the invariant
    /// relative offset (field-mode integration has the separatrix exactly at
    /// zero relative offset for the equal-weight opposite-kick pair); a second
    /// wing with its partner already resolved is forced, and any remaining
    /// freedom uses the orthogonal offset sum.
    void stern_gerlach_fate(std::size_t k)
    {
        const auto candidates = compatible_branches(k);
        if (candidates.empty()) throw ModelViolation("sg fate: no compatible branch");
        auto exits = exit_groups(candidates, k);
        if (exits.size() == 1) {
            adopt_exit(k, exits[0]);
            return;
        }
        double stat = 0.0;
        double var = 0.0;
        for (std::size_t j = 0; j < n_; ++j) {
            const auto& seg = rider_segment(j);
            const double d0 = detail::rest_offset(seg, events_[j]);
            const double sign = (j == k) ? 1.0 : (partner_resolved_ ? 1.0 : -1.0);
            stat += sign * d0;
            var += seg.rest_width() * seg.rest_width();
        }
        const double F = detail::normal_cdf(stat / std::sqrt(var));
        choose_exit_by_cdf(k, exits, F);
        partner_resolved_ = true;
    }

    /// Start-surface fate for a trajectory initiated inside an interaction
    /// window: cumulative position within the instantaneous conditional
    /// profile along coordinate k, mapped onto the exit beams. Fates are
    /// computed in the experiment's build frame so a boosted run decides
    /// identically to the original.
    void surface_fate(std::size_t k)
    {
        const auto candidates = compatible_branches(k);
        if (candidates.empty()) throw ModelViolation("surface fate: no compatible branch");
        auto exits = exit_groups(candidates, k);
        if (exits.size() == 1) {
            adopt_exit(k, exits[0]);
            return;
        }
        const MultiTimeWaveFunction& wf = home_ ? home_wf_ : wf_;
        std::vector<Event> events = events_;
        if (home_)
            for (auto& e : events) e = boost_event(e, *home_);

        // conditional density along z_k through the start point: fold the
        // frozen coordinates and spinor overlaps into one Gram matrix.
        // Segments are picked by chain position on the integration side so a
        // rounded-off boundary cannot select different pieces per frame.
        auto amp_unchecked = [](const PacketSegment& seg, const Event& e, double mass) {
            const double d = e.z - seg.center_at(e.t);
            const double s2 = seg.sigma * seg.sigma;
            const double p = mass * lorentz_gamma(seg.v) * seg.v;
            return seg.amp * packet_norm_factor(seg.sigma) *
                   std::exp(-d * d / (4.0 * s2)) * std::polar(1.0, p * d + seg.phase);
        };
        const std::size_t m = candidates.size();
        std::vector<Complex> other(m);
        std::vector<const PacketSegment*> segs(m);
        double lo = events[k].z, hi = events[k].z;
        for (std::size_t i = 0; i < m; ++i) {
            const auto& br = wf.branches[candidates[i]];
            const auto& ibr = wf_.branches[candidates[i]];
            Complex o = br.coeff;
            for (std::size_t j = 0; j < n_; ++j) {
                if (j == k) continue;
                const int sj = ibr.packets[j].segment_index_at(events_[j]);
                if (sj < 0) throw UncoveredTime("surface fate: partner outside coverage");
                o *= amp_unchecked(br.packets[j].segments[static_cast<std::size_t>(sj)],
                                   events[j], wf.masses[j]);
            }
            other[i] = o;
            const int sk = ibr.packets[k].segment_index_at(events_[k]);
            if (sk < 0) throw UncoveredTime("surface fate: particle outside coverage");
            segs[i] = &br.packets[k].segments[static_cast<std::size_t>(sk)];
            const double c = segs[i]->center_at(events[k].t);
            lo = std::min(lo, c - 8.0 * segs[i]->sigma);
            hi = std::max(hi, c + 8.0 * segs[i]->sigma);
        }
        std::vector<Complex> gram(m * m);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j) {
                Complex g = other[i] * std::conj(other[j]);
                for (std::size_t kk = 0; kk < n_; ++kk)
                    g *= spinor_dot(wf.branches[candidates[j]].spinors[kk],
                                    wf.branches[candidates[i]].spinors[kk]);
                gram[i * m + j] = g;
            }

        const int n_grid = 2001;
        const double h = (hi - lo) / (n_grid - 1);
        std::vector<Complex> amp(m);
        Event probe = events[k];
        double below = 0.0, total = 0.0;
        for (int g = 0; g < n_grid; ++g) {
            probe.z = lo + g * h;
            for (std::size_t i = 0; i < m; ++i)
                amp[i] = amp_unchecked(*segs[i], probe, wf.masses[k]);
            double rho = 0.0;
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < m; ++j)
                    rho += std::real(gram[i * m + j] * amp[i] * std::conj(amp[j]));
            const double w = (g == 0 || g == n_grid - 1) ? 0.5 : 1.0;
            total += w * rho;
            if (probe.z <= events[k].z) below += w * rho;
        }
        if (total <= 0.0) throw NodeEncounter("surface fate: empty profile");
        choose_exit_by_cdf(k, exits, below / total);
    }

    void fire_interaction(std::size_t idx)
    {
        const auto& ia = wf_.schedule[idx];
        fired_[idx] = true;
        if (ia.kind == InteractionKind::Splitter)
            splitter_fate(ia.particle);
        else
            stern_gerlach_fate(ia.particle);
    }

    // --- kinematic stepping ----------------------------------------------------

    StepDisplacement displacement(double v, double amount) const
    {
        if (proper_time_rule_) return proper_time_step(v, amount);
        return StepDisplacement{amount, v * amount};
    }

    /// Advance particle k by `amount` of the rule parameter, splitting the
    /// advance exactly at boundary crossings (segment ends, interaction
    /// events). Velocities are frame-local when an equal-time frame is set.
    void advance_kinematic(std::size_t k, double amount)
    {
        int guard = 0;
        while (amount > 0.0 && guard++ < 64) {
            const auto& seg = rider_segment(k);
            double v = seg.v;
            Event e = events_[k];
            if (frame_) {
                v = velocity_add(v, *frame_);
                e = boost_event(e, *frame_);
            }
            const StepDisplacement d = displacement(v, amount);

            // earliest boundary crossing within this step; the test runs in
            // the rule frame where the step is straight
            double best = 1.0;
            int what = -1;  // -1 none, -2 segment end, >=0 interaction index
            Hyperplane crossed;
            const Event base = frame_ ? boost_event(events_[k], *frame_) : events_[k];
            auto consider = [&](const Hyperplane& plane, int tag) {
                const Hyperplane pl = frame_ ? plane.boosted(*frame_) : plane;
                const double s = pl.crossing_fraction(base, d.dt, d.dz);
                if (s > 0.0 && s <= 1.0 && s < best) {
                    best = s;
                    what = tag;
                    crossed = plane;
                }
            };
            // interactions first so they win the tie against the coincident
            // parent-segment end plane
            for (std::size_t i = 0; i < wf_.schedule.size(); ++i)
                if (!fired_[i] && wf_.schedule[i].particle == k)
                    consider(wf_.schedule[i].fire, static_cast<int>(i));
            consider(seg.valid_until, -2);

            const double frac = (what == -1) ? 1.0 : best;
            const Event stepped{base.t + frac * d.dt, base.z + frac * d.dz};
            const Event prev = events_[k];
            Event landed = frame_ ? boost_event(stepped, frame_->inverse()) : stepped;
            if (what != -1) {
                // land on or just past the boundary despite rounding, checked
                // against the original plane so segment lookups stay consistent
                double ddt = landed.t - prev.t, ddz = landed.z - prev.z;
                if (std::abs(ddt) < 1e-300) {
                    ddt = 1e-6;
                    ddz = v * ddt;
                }
                for (int g = 0; g < 6 && crossed.signed_value(landed) < 0.0; ++g) {
                    const double rate = crossed.wt() * ddt + crossed.wz() * ddz;
                    if (rate <= 0.0) break;
                    const double extra =
                        1.5 * (-crossed.signed_value(landed) / rate) + 1e-12;
                    landed.t += extra * ddt;
                    landed.z += extra * ddz;
                }
            }
            events_[k] = landed;
            amount *= (1.0 - frac);

            if (what == -2) {
                // chain advance within the rider's branch
                const auto& chain = wf_.branches[riders_[k].branch].packets[k];
                const int ni = chain.segment_index_at(events_[k]);
                if (ni < 0)
                    throw UncoveredTime("integrate: rider ran out of packet history");
                riders_[k].seg = ni;
            } else if (what >= 0) {
                fire_interaction(static_cast<std::size_t>(what));
            }
        }
        if (guard >= 64) throw ModelViolation("integrate: boundary-crossing loop stuck");
    }

    void kinematic_step()
    {
        for (std::size_t k = 0; k < n_; ++k)
            if (!frozen_[k]) advance_kinematic(k, step_size_);
    }

    /// Jump straight to the next boundary when no rows are being recorded and
    /// every unfrozen particle moves inertially: always in kinematic mode,
    /// and outside interaction windows in field mode. Returns false when
    /// honest stepping is required.
    bool fast_forward()
    {
        if (opt_.mode == GuidanceMode::Field)
            for (std::size_t k = 0; k < n_; ++k)
                if (!frozen_[k] && wf_.in_window(k, events_[k])) return false;

        double jump = std::numeric_limits<double>::infinity();
        std::vector<double> vel(n_, 0.0);
        const ConfigPoint here{events_};
        for (std::size_t k = 0; k < n_; ++k) {
            if (frozen_[k]) continue;
            if (opt_.mode == GuidanceMode::Kinematic) {
                vel[k] = rider_segment(k).v;
            } else {
                const auto cv = detail::common_packet_velocity(wf_, here, k);
                if (!cv) return false;
                vel[k] = *cv;
            }
            double v = vel[k];
            Event base = events_[k];
            if (frame_) {
                v = velocity_add(v, *frame_);
                base = boost_event(base, *frame_);
            }
            const StepDisplacement u = displacement(v, 1.0);
            auto consider = [&](const Hyperplane& plane) {
                const Hyperplane pl = frame_ ? plane.boosted(*frame_) : plane;
                const double s = pl.crossing_fraction(base, u.dt, u.dz);
                if (s > 0.0) jump = std::min(jump, s);
            };
            consider(horizon_.stops[k]);
            if (opt_.mode == GuidanceMode::Kinematic) {
                consider(rider_segment(k).valid_until);
                for (std::size_t i = 0; i < wf_.schedule.size(); ++i)
                    if (!fired_[i] && wf_.schedule[i].particle == k)
                        consider(wf_.schedule[i].fire);
            } else {
                for (const auto& pl : kinks_[k]) consider(pl);
                for (const auto& ia : wf_.schedule)
                    if (ia.particle == k) consider(ia.window_start);
            }
        }
        if (!std::isfinite(jump)) return false;
        jump += 1e-9;

        for (std::size_t k = 0; k < n_; ++k) {
            if (frozen_[k]) continue;
            if (opt_.mode == GuidanceMode::Kinematic) {
                advance_kinematic(k, jump);
            } else {
                double v = vel[k];
                Event e = events_[k];
                if (frame_) {
                    v = velocity_add(v, *frame_);
                    e = boost_event(e, *frame_);
                }
                const StepDisplacement d = displacement(v, jump);
                e.t += d.dt;
                e.z += d.dz;
                events_[k] = frame_ ? boost_event(e, frame_->inverse()) : e;
            }
        }
        return true;
    }

    // --- field stepping ----------------------------------------------------------

    double field_velocity(const ConfigPoint& p, std::size_t k) const
    {
        const Event& e = p.events[k];
        if (!wf_.in_window(k, e)) {
            if (const auto cv = detail::common_packet_velocity(wf_, p, k)) {
                double v = *cv;
                if (frame_) v = velocity_add(v, *frame_);
                return v;
            }
        }
        double v = guidance_velocity(wf_, p, k, GuidanceMode::Field);
        if (frame_) v = velocity_add(v, *frame_);
        return v;
    }

    void field_substep(double amount)
    {
        const ConfigPoint here{events_};
        std::vector<double> v0(n_, 0.0);
        std::vector<bool> windowed(n_, false);
        for (std::size_t k = 0; k < n_; ++k) {
            if (frozen_[k]) continue;
            windowed[k] = wf_.in_window(k, here.events[k]);
            v0[k] = field_velocity(here, k);
        }

        ConfigPoint half{events_};
        for (std::size_t k = 0; k < n_; ++k) {
            if (frozen_[k]) continue;
            const StepDisplacement d = displacement(v0[k], 0.5 * amount);
            Event e = frame_ ? boost_event(half.events[k], *frame_) : half.events[k];
            e.t += d.dt;
            e.z += d.dz;
            half.events[k] = frame_ ? boost_event(e, frame_->inverse()) : e;
        }
        for (std::size_t k = 0; k < n_; ++k) {
            if (frozen_[k]) continue;
            // outside windows the packet velocity is constant across the step
            const double v = windowed[k] ? field_velocity(half, k) : v0[k];
            const StepDisplacement d = displacement(v, amount);
            Event e = frame_ ? boost_event(events_[k], *frame_) : events_[k];
            e.t += d.dt;
            e.z += d.dz;
            events_[k] = frame_ ? boost_event(e, frame_->inverse()) : e;
        }
    }

    void field_step()
    {
        double remaining = step_size_;
        int halvings = 0;
        double piece = step_size_;
        while (remaining > 1e-15 * step_size_) {
            const std::vector<Event> saved = events_;
            try {
                field_substep(std::min(piece, remaining));
            } catch (const NodeEncounter&) {
                events_ = saved;
                if (++halvings > opt_.max_node_halvings)
                    throw NodeEncounter("integrate: node persisted through step halving");
                piece *= 0.5;
                continue;
            }
            remaining -= std::min(piece, remaining);
        }
    }

    // --- bookkeeping ----------------------------------------------------------

    void update_frozen()
    {
        for (std::size_t k = 0; k < n_; ++k)
            if (!frozen_[k] && horizon_.stops[k].signed_value(events_[k]) >= 0.0)
                frozen_[k] = true;
    }

    bool all_frozen() const
    {
        for (bool f : frozen_)
            if (!f) return false;
        return true;
    }

    void record_row(TrajectoryTable& table, std::size_t step)
    {
        TableRow row;
        row.step = step;
        row.events = events_;
        row.spins.reserve(n_);
        const ConfigPoint p{events_};
        if (opt_.mode == GuidanceMode::Kinematic) {
            const auto effective = compatible_branches(n_);
            for (std::size_t k = 0; k < n_; ++k)
                row.spins.push_back(detail::spin_vector_subset(wf_, effective, p, k));
        } else {
            for (std::size_t k = 0; k < n_; ++k) {
                try {
                    row.spins.push_back(spin_vector(wf_, p, k));
                } catch (const NodeEncounter&) {
                    row.spins.push_back(Vec3{});
                }
            }
        }
        table.rows.push_back(std::move(row));
    }

    const MultiTimeWaveFunction& wf_;
    CoordinationRule rule_;
    Horizon horizon_;
    IntegrateOptions opt_;
    std::vector<Event> events_;
    std::vector<bool> frozen_;
    std::vector<bool> fired_;
    std::vector<Rider> riders_;
    std::vector<std::vector<Hyperplane>> kinks_;
    std::optional<Boost> frame_;
    std::optional<Boost> home_;  // back to the experiment's build frame
    MultiTimeWaveFunction home_wf_;
    std::size_t n_ = 0;
    double step_size_ = 1e-3;
    bool proper_time_rule_ = true;
    bool partner_resolved_ = false;
};

/// Integrate one configuration-space-time trajectory. Rows are recorded on
/// the rule-parameter grid; a particle past its horizon is frozen while the
/// others continue.
inline TrajectoryTable integrate(const MultiTimeWaveFunction& wf, const ConfigPoint& start,
                                 const CoordinationRule& rule, const Horizon& horizon,
                                 const IntegrateOptions& opt = {})
{
    TrajectoryIntegrator icore(wf, start, rule, horizon, opt);
    TrajectoryTable t = icore.run();
    t.boost_history = {};
    return t;
}

inline TrajectoryTable integrate(const MultiTimeWaveFunction& wf, const ConfigPoint& start,
                                 const CoordinationRule& rule,
                                 const std::vector<double>& stop_times,
                                 const IntegrateOptions& opt = {})
{
    return integrate(wf, start, rule, Horizon::at_times(stop_times), opt);
}

/// Passive boost of a whole table: every event is re-expressed in the moving
/// frame; spin vectors are carried unchanged (recording convention, flagged
/// in the metadata).
inline TrajectoryTable boost_table(const TrajectoryTable& table, const Boost& b)
{
    TrajectoryTable out = table;
    for (auto& row : out.rows)
        for (auto& e : row.events) e = boost_event(e, b);
    for (auto& e : out.start.events) e = boost_event(e, b);
    out.boost_history.push_back(b.beta());
    return out;
}

/// Report of the per-row coordination constraint.
struct CoordinationReport {
    double max_violation = 0.0;          // worst |interval2 - step^2| (relative)
    std::size_t checked_pairs = 0;
    std::size_t exempt_pairs = 0;        // straddling a kink or frozen
    std::size_t worst_row = 0;
    std::size_t worst_particle = 0;
    bool passed = false;
};

/// Verify that successive per-particle events satisfy the rule's step
/// constraint, taking the stored coordinates at face value: equal proper
/// time per row for the invariant rule (which survives any boost of the
/// table), or equal coordinate time in the rule's declared frame (which a
/// boosted table fails, exhibiting the rule's frame dependence). Row pairs
/// whose interval contains a worldline kink are exempt, as are frozen
/// particles.
inline CoordinationReport coordination_check(const TrajectoryTable& table,
                                             double tolerance = 1e-10)
{
    CoordinationReport rep;
    if (table.rows.size() < 2 || table.row_stride == 0) {
        rep.passed = true;
        return rep;
    }
    const double h = rule_step_size(table.rule);
    const bool proper = std::holds_alternative<InvariantProperTime>(table.rule);
    std::optional<Boost> frame;
    if (!proper) {
        const double beta = std::get<FrameEqualTime>(table.rule).beta;
        if (beta != 0.0) frame = Boost(beta);
    }
    // kink planes were recorded in the integration frame; follow the table's
    // boost history so exemptions stay aligned with the stored rows
    std::vector<std::vector<Hyperplane>> kinks = table.kink_planes;
    for (double beta : table.boost_history)
        for (auto& planes : kinks)
            for (auto& pl : planes) pl = pl.boosted(Boost(beta));

    for (std::size_t r = 1; r < table.rows.size(); ++r) {
        const auto& prev = table.rows[r - 1];
        const auto& cur = table.rows[r];
        const double steps = static_cast<double>(cur.step - prev.step);
        if (steps <= 0.0) continue;
        for (std::size_t k = 0; k < prev.events.size(); ++k) {
            const Event a = prev.events[k], b = cur.events[k];
            if (a.t == b.t && a.z == b.z) {  // frozen
                ++rep.exempt_pairs;
                continue;
            }
            bool kinked = false;
            if (k < kinks.size())
                for (const auto& pl : kinks[k])
                    if (pl.signed_value(a) < 0.0 && pl.signed_value(b) >= 0.0) kinked = true;
            if (kinked) {
                ++rep.exempt_pairs;
                continue;
            }
            double violation;
            if (proper) {
                const double want = steps * h * steps * h;
                violation = std::abs(interval2(a, b) - want) / want;
            } else {
                const Event aa = frame ? boost_event(a, *frame) : a;
                const Event bb = frame ? boost_event(b, *frame) : b;
                const double want = steps * h;
                violation = std::abs((bb.t - aa.t) - want) / want;
            }
            ++rep.checked_pairs;
            if (violation > rep.max_violation) {
                rep.max_violation = violation;
                rep.worst_row = r;
                rep.worst_particle = k;
            }
        }
    }
    rep.passed = rep.max_violation <= tolerance && rep.checked_pairs > 0;
    return rep;
}

}  // namespace pilotwave
