// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <filesystem>
#include <ostream>

#include "pilotwave/io.hpp"

// Command implementations behind the CLI: run an ensemble, run the
// verification suites, emit plot data, echo the resolved configuration.
// Exit codes: 0 success, 1 runtime or suite failure, 2 configuration errors
// (handled by the caller).

namespace pilotwave::cli {

namespace fs = std::filesystem;

inline Json provenance(const RunConfig& cfg)
{
    return Json{{"config_hash", config_hash(cfg)}, {"seed", cfg.seed}};
}

inline void write_resolved_config(const RunConfig& cfg)
{
    fs::create_directories(cfg.output);
    Json j = resolved_config_json(cfg);
    write_file(cfg.output + "/resolved_config.json", j.dump(2) + "\n");
}

inline int cmd_echo_config(const RunConfig& cfg, std::ostream& out)
{
    out << resolved_config_json(cfg).dump(2) << "\n";
    return 0;
}

inline int cmd_run(const RunConfig& cfg, std::ostream& log)
{
    const auto ctx = cfg.context();
    EnsembleOptions opt;
    opt.rule = cfg.coordination_rule();
    opt.mode = cfg.guidance_mode();
    opt.threads = cfg.threads;
    opt.keep_tables = cfg.dump_trajectories;
    opt.table_row_stride = cfg.trajectory_stride;

    const auto t0 = std::chrono::steady_clock::now();
    const EnsembleRun run = run_ensemble(ctx, cfg.n, cfg.seed, opt);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    write_resolved_config(cfg);
    Json rep = ensemble_report_json(run.report);
    rep["provenance"] = provenance(cfg);
    rep["wall_seconds"] = secs;
    write_file(cfg.output + "/report.json", rep.dump(2) + "\n");

    if (cfg.dump_trajectories) {
        const fs::path dir = fs::path(cfg.output) / "trajectories";
        fs::create_directories(dir);
        for (std::size_t i = 0; i < run.tables.size(); ++i) {
            char name[32];
            std::snprintf(name, sizeof(name), "%06zu", i);
            write_file((dir / (std::string(name) + ".csv")).string(),
                       trajectory_csv(run.tables[i]));
            write_file((dir / (std::string(name) + ".meta.json")).string(),
                       table_sidecar_json(run.tables[i], cfg.seed).dump(2) + "\n");
        }
    }

    log << "experiment " << run.report.experiment << ": n=" << run.report.samples
        << " excluded=" << run.report.excluded << " p=(";
    for (std::size_t i = 0; i < 4; ++i)
        log << run.report.joint_probability[i] << (i + 1 < 4 ? " " : ")");
    log << " max|dev|=" << run.report.max_deviation_se << " s.e."
        << "  [" << secs << " s]\n";
    const bool exclusion_ok =
        run.report.excluded * 1000 <= run.report.samples;  // < 0.1 %
    if (!exclusion_ok) log << "excluded trajectories above the 0.1% budget\n";
    return exclusion_ok ? 0 : 1;
}

inline int cmd_verify(const RunConfig& cfg, std::ostream& log)
{
    const auto ctx = cfg.context();
    Json out;
    bool all_ok = true;

    {  // non-crossing over a field-mode bundle
        EnsembleOptions opt;
        opt.rule = InvariantProperTime{cfg.dtau};
        opt.mode = GuidanceMode::Field;
        opt.threads = cfg.threads;
        opt.keep_tables = true;
        opt.table_row_stride = cfg.trajectory_stride;
        const auto run = run_ensemble(ctx, cfg.crossing_samples, cfg.seed, opt);
        const auto rep = check_no_crossing(run.tables);
        out["no_crossing"] = {{"tables", rep.tables},
                              {"crossings", rep.crossings},
                              {"min_distance", rep.min_distance},
                              {"resolution", rep.resolution},
                              {"passed", rep.passed}};
        log << "no-crossing: " << rep.crossings << " crossings in " << rep.tables
            << " trajectories (min distance " << rep.min_distance << ")\n";
        all_ok = all_ok && rep.passed;
    }

    if (cfg.rule == "frame_equal_time") {
        // a frame-dependent rule is expected to flip outcomes between frames
        auto scan_ctx = ctx;
        scan_ctx.surface = CoordinationSurface{
            std::vector<double>(ctx.wf.particles(), 0.0)};
        const auto pts = sample_initial(scan_ctx.wf, scan_ctx.surface, 100, cfg.seed);
        const auto rep = equal_time_flip_scan(scan_ctx, pts,
                                              cfg.beta != 0.0 ? cfg.beta : 0.5, cfg.dtau,
                                              cfg.threads);
        out["equal_time_flips"] = {{"points", rep.points},
                                   {"flips", rep.flips},
                                   {"excluded", rep.excluded},
                                   {"rule_is_frame_dependent", rep.flips_found}};
        log << "frame-equal-time rule: " << rep.flips << "/" << rep.points
            << " outcomes flip between frames (rule marked non-invariant)\n";
        all_ok = all_ok && rep.flips_found;
    } else {
        const auto pts = sample_initial(ctx.wf, ctx.surface, cfg.verify_points, cfg.seed);
        const auto rep = verify_frame_invariance(ctx, pts, cfg.verify_betas,
                                                 cfg.verify_dtaus, cfg.threads);
        Json cases = Json::array();
        for (const auto& c : rep.cases)
            cases.push_back({{"beta", c.beta},
                             {"dtau", c.dtau},
                             {"max_event_deviation", c.max_event_deviation},
                             {"outcomes_match", c.outcomes_match}});
        out["frame_invariance"] = {{"cases", cases},
                                   {"orders", rep.orders},
                                   {"outcome_mismatches", rep.outcome_mismatches},
                                   {"deviations_vanish", rep.deviations_vanish},
                                   {"passed", rep.passed}};
        double worst = 0.0;
        for (const auto& c : rep.cases) worst = std::max(worst, c.max_event_deviation);
        log << "frame invariance: " << rep.outcome_mismatches
            << " outcome mismatches, max row deviation " << worst << "\n";
        all_ok = all_ok && rep.passed;
    }

    if (cfg.experiment == "hsz") {
        const auto rep =
            quantile_oracle_suite(cfg.oracle_samples, cfg.seed, cfg.dtau, cfg.hsz, cfg.threads);
        out["quantile_oracle"] = {{"trajectories", rep.trajectories},
                                  {"disagreements", rep.disagreements},
                                  {"agreement_rate", rep.agreement_rate},
                                  {"worst_band", rep.worst_band},
                                  {"passed", rep.passed}};
        log << "quantile oracle: agreement " << rep.agreement_rate << ", band "
            << rep.worst_band << "\n";
        all_ok = all_ok && rep.passed;

        const auto sc = scenario_contrast(cfg.hsz, 0.8, 0.7, cfg.dtau);
        const bool exhibit =
            sc.scenario1.particle1 == SplitterFate::Transmitted && sc.particle1_differs;
        out["scenario_contrast"] = {
            {"q1", sc.q1},
            {"q2", sc.q2},
            {"scenario1_particle1",
             sc.scenario1.particle1 == SplitterFate::Transmitted ? "transmitted" : "reflected"},
            {"scenario2_particle1",
             sc.scenario2.particle1 == SplitterFate::Transmitted ? "transmitted" : "reflected"},
            {"particle1_differs", sc.particle1_differs},
            {"passed", exhibit}};
        log << "scenario contrast: particle 1 "
            << (sc.scenario1.particle1 == SplitterFate::Transmitted ? "transmitted"
                                                                    : "reflected")
            << " / "
            << (sc.scenario2.particle1 == SplitterFate::Transmitted ? "transmitted"
                                                                    : "reflected")
            << " across the two coordination surfaces\n";
        all_ok = all_ok && exhibit;
    }

    out["passed"] = all_ok;
    out["provenance"] = provenance(cfg);
    fs::create_directories(cfg.output);
    write_file(cfg.output + "/verify.json", out.dump(2) + "\n");
    write_resolved_config(cfg);
    log << (all_ok ? "verification suites passed\n" : "verification suites FAILED\n");
    return all_ok ? 0 : 1;
}

inline int cmd_plotdata(const RunConfig& cfg, std::ostream& log)
{
    const auto ctx = cfg.context();

    // grid ranges from the covering packets on the surface
    double lo[2], hi[2];
    for (std::size_t k = 0; k < 2; ++k) {
        lo[k] = 1e300;
        hi[k] = -1e300;
        for (const auto& br : ctx.wf.branches)
            for (const auto& seg : br.packets[k].segments) {
                if (!seg.in_time_slab(Event{ctx.surface.times[k], seg.center_at(
                                                                      ctx.surface.times[k])}))
                    continue;
                const double c = seg.center_at(ctx.surface.times[k]);
                lo[k] = std::min(lo[k], c - 5.0 * seg.sigma);
                hi[k] = std::max(hi[k], c + 5.0 * seg.sigma);
            }
    }

    fs::create_directories(cfg.output);
    write_file(cfg.output + "/density_grid.csv",
               density_grid_csv(ctx.wf, ctx.surface, lo[0], hi[0], lo[1], hi[1], cfg.grid_n1,
                                cfg.grid_n2));

    EnsembleOptions opt;
    opt.rule = cfg.coordination_rule();
    opt.mode = cfg.guidance_mode();
    opt.threads = cfg.threads;
    opt.keep_tables = true;
    opt.table_row_stride = cfg.trajectory_stride;
    const auto run = run_ensemble(ctx, cfg.plot_trajectories, cfg.seed, opt);
    write_file(cfg.output + "/trajectories.csv", trajectory_polylines_csv(run.tables));

    const double x_el = 10.0;
    const double t_el = cfg.experiment == "hsz" ? cfg.hsz.t_mu : cfg.epr.t_i_1;
    write_file(cfg.output + "/spacetime_paths.csv",
               spacetime_paths_csv(run.tables, x_el, t_el));
    write_resolved_config(cfg);
    log << "wrote density_grid.csv (" << cfg.grid_n1 << "x" << cfg.grid_n2 << "), "
        << run.tables.size() << " trajectory polylines, space-time paths\n";
    return 0;
}

}  // namespace pilotwave::cli
