// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pilotwave/ensemble.hpp"
#include "pilotwave/experiments.hpp"
#include "pilotwave/guidance.hpp"

// File formats: the look-up-table CSV with its JSON sidecar, ensemble report
// JSON, plot-data CSVs, and the run configuration (a sectioned key = value
// text format or the equivalent JSON; the resolved form echoes back as JSON
// and can be fed in again unchanged).

namespace pilotwave {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Formatting helpers

inline std::string format_sig12(double x)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.12g", x);
    return buf;
}

inline std::uint64_t fnv1a64(const std::string& s)
{
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v)
{
    char buf[19];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// ---------------------------------------------------------------------------
// Trajectory table CSV + sidecar

/// One row per table row, decimal floating point with 12 significant digits.
inline std::string trajectory_csv(const TrajectoryTable& table)
{
    std::string out = "step,t1,z1,sx1,sy1,sz1,t2,z2,sx2,sy2,sz2\n";
    for (const auto& row : table.rows) {
        out += std::to_string(row.step);
        for (std::size_t k = 0; k < row.events.size(); ++k) {
            out += ',' + format_sig12(row.events[k].t) + ',' + format_sig12(row.events[k].z);
            const Vec3 s = k < row.spins.size() ? row.spins[k] : Vec3{};
            out += ',' + format_sig12(s.x) + ',' + format_sig12(s.y) + ',' + format_sig12(s.z);
        }
        out += '\n';
    }
    return out;
}

inline Json table_sidecar_json(const TrajectoryTable& table, std::uint64_t seed)
{
    Json j;
    j["experiment"] = table.experiment;
    if (std::holds_alternative<InvariantProperTime>(table.rule)) {
        j["rule"] = "invariant_proper_time";
        j["dtau"] = std::get<InvariantProperTime>(table.rule).dtau;
    } else {
        const auto& r = std::get<FrameEqualTime>(table.rule);
        j["rule"] = "frame_equal_time";
        j["dt"] = r.dt;
        j["beta"] = r.beta;
    }
    j["mode"] = table.mode == GuidanceMode::Field ? "field" : "kinematic";
    j["seed"] = seed;
    j["row_stride"] = table.row_stride;
    j["total_steps"] = table.total_steps;
    j["status"] = table.status == TrajectoryStatus::Completed
                      ? "completed"
                      : (table.status == TrajectoryStatus::NodeAborted ? "node_aborted"
                                                                       : "step_ceiling");
    j["boost_history"] = table.boost_history;
    j["spin_transport"] = "carried unchanged under boosts (recording convention)";
    Json st = Json::array();
    for (const auto& e : table.start.events) st.push_back(Json::array({e.t, e.z}));
    j["start"] = st;
    return j;
}

// ---------------------------------------------------------------------------
// Ensemble report JSON

inline Json ensemble_report_json(const EnsembleReport& rep)
{
    Json j;
    j["experiment"] = rep.experiment;
    j["seed"] = rep.seed;
    j["samples"] = rep.samples;
    j["excluded"] = rep.excluded;
    j["joint_counts"] = rep.joint_counts;
    j["joint_probability"] = rep.joint_probability;
    j["joint_stderr"] = rep.joint_stderr;
    j["expected_joint"] = rep.expected_joint;
    j["marginal_plus"] = rep.marginal_plus;
    j["anticorrelation_rate"] = rep.anticorrelation_rate;
    j["max_deviation_se"] = rep.max_deviation_se;
    j["surface_times"] = rep.surface.times;
    j["rule"] = rep.rule;
    j["step"] = rep.step;
    j["mode"] = rep.mode;
    j["outcome_order"] = "++, +-, -+, --";
    return j;
}

// ---------------------------------------------------------------------------
// Run configuration

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct RunConfig {
    std::string experiment = "hsz";  // hsz | epr
    HszGeometry hsz;
    EprGeometry epr;
    std::string rule = "invariant_proper_time";  // | frame_equal_time
    double dtau = 1e-3;
    double beta = 0.0;  // frame_equal_time only
    int scenario = 1;   // hsz surface choice
    std::vector<double> surface_times;  // overrides scenario when set
    std::size_t n = 10000;
    std::uint64_t seed = 1;
    std::string mode = "field";  // | kinematic
    unsigned threads = 0;
    bool dump_trajectories = false;
    std::size_t trajectory_stride = 50;
    std::string output = "out";
    // verification suite sizes
    std::vector<double> verify_betas{0.3, -0.3, 0.6, -0.6};
    std::vector<double> verify_dtaus{4e-3, 2e-3, 1e-3};
    std::size_t verify_points = 20;
    std::size_t crossing_samples = 200;
    std::size_t oracle_samples = 400;
    // plot grids
    std::size_t grid_n1 = 321;
    std::size_t grid_n2 = 321;
    std::size_t plot_trajectories = 16;

    CoordinationRule coordination_rule() const
    {
        if (rule == "invariant_proper_time") return InvariantProperTime{dtau};
        if (rule == "frame_equal_time") return FrameEqualTime{beta, dtau};
        throw ConfigError("rule.type: unknown rule '" + rule + "'");
    }

    GuidanceMode guidance_mode() const
    {
        if (mode == "field") return GuidanceMode::Field;
        if (mode == "kinematic") return GuidanceMode::Kinematic;
        throw ConfigError("run.mode: expected field or kinematic");
    }

    ExperimentContext context() const
    {
        ExperimentContext ctx = experiment == "epr" ? epr_context(epr) : hsz_context(hsz, scenario);
        if (!surface_times.empty()) {
            if (surface_times.size() != 2)
                throw ConfigError("surface.times: need one time per particle");
            ctx.surface = CoordinationSurface{surface_times};
        }
        return ctx;
    }

    void validate() const
    {
        if (experiment != "hsz" && experiment != "epr")
            throw ConfigError("experiment: expected hsz or epr");
        if (n < 1) throw ConfigError("run.n: need at least one sample");
        if (dtau <= 0.0) throw ConfigError("rule.dtau: must be positive");
        if (scenario != 1 && scenario != 2) throw ConfigError("surface.scenario: 1 or 2");
        (void)coordination_rule();
        (void)guidance_mode();
        if (experiment == "hsz")
            hsz.validate();
        else
            epr.validate();
    }
};

namespace detail {

inline Json ini_to_json(const std::string& text)
{
    Json j = Json::object();
    std::string section;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config line " + std::to_string(line_no) +
                                  ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (section.empty())
            throw ConfigError("config line " + std::to_string(line_no) + ": key outside a section");
        Json parsed;
        if (!val.empty() && (val.front() == '[' || val.front() == '{')) {
            parsed = Json::parse(val);
        } else {
            try {
                std::size_t used = 0;
                const double d = std::stod(val, &used);
                if (used == val.size())
                    parsed = d;
                else
                    parsed = val;
            } catch (...) {
                if (val == "true" || val == "false")
                    parsed = (val == "true");
                else
                    parsed = val;
            }
        }
        j[section][key] = parsed;
    }
    return j;
}

template <typename T>
void read_key(const Json& j, const char* section, const char* key, T& out)
{
    if (!j.contains(section)) return;
    const auto& s = j.at(section);
    if (!s.contains(key)) return;
    try {
        out = s.at(key).get<T>();
    } catch (const Json::exception&) {
        throw ConfigError(std::string(section) + "." + key + ": wrong value type");
    }
}

inline Vec3 read_axis(const Json& j, const char* section, const char* key, Vec3 fallback)
{
    if (!j.contains(section) || !j.at(section).contains(key)) return fallback;
    const auto& a = j.at(section).at(key);
    if (!a.is_array() || a.size() != 3)
        throw ConfigError(std::string(section) + "." + key + ": expected [x, y, z]");
    return Vec3{a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}

}  // namespace detail

/// Parse a configuration from sectioned key = value text or from the JSON
/// shape that echo-config emits. Unknown keys are rejected with a field path.
inline RunConfig parse_config(const std::string& text)
{
    std::size_t first = text.find_first_not_of(" \t\r\n");
    Json j;
    if (first != std::string::npos && text[first] == '{')
        j = Json::parse(text);
    else
        j = detail::ini_to_json(text);

    static const std::map<std::string, std::vector<std::string>> known = {
        {"experiment", {"type"}},
        {"geometry",
         {"phi", "chi", "t_lambda", "t_mu", "t_nu", "v", "sigma", "arm_separation", "mass",
          "t_i", "t_i_1", "t_i_2", "delta_p", "axis1", "axis2"}},
        {"rule", {"type", "dtau", "dt", "beta"}},
        {"surface", {"scenario", "times"}},
        {"run",
         {"n", "seed", "mode", "threads", "dump_trajectories", "trajectory_stride", "output"}},
        {"verify", {"betas", "dtaus", "points", "crossing_samples", "oracle_samples"}},
        {"plot", {"grid_n1", "grid_n2", "trajectories"}},
    };
    for (const auto& [section, body] : j.items()) {
        const auto it = known.find(section);
        if (it == known.end()) throw ConfigError(section + ": unknown section");
        if (!body.is_object()) throw ConfigError(section + ": expected a section");
        for (const auto& [key, _] : body.items()) {
            if (std::find(it->second.begin(), it->second.end(), key) == it->second.end())
                throw ConfigError(section + "." + key + ": unknown key");
        }
    }

    RunConfig c;
    detail::read_key(j, "experiment", "type", c.experiment);
    detail::read_key(j, "geometry", "phi", c.hsz.phi);
    detail::read_key(j, "geometry", "chi", c.hsz.chi);
    detail::read_key(j, "geometry", "t_lambda", c.hsz.t_lambda);
    detail::read_key(j, "geometry", "t_mu", c.hsz.t_mu);
    detail::read_key(j, "geometry", "t_nu", c.hsz.t_nu);
    detail::read_key(j, "geometry", "v", c.hsz.v);
    detail::read_key(j, "geometry", "sigma", c.hsz.sigma);
    detail::read_key(j, "geometry", "arm_separation", c.hsz.arm_separation);
    detail::read_key(j, "geometry", "mass", c.hsz.mass);
    double t_i = -1.0;
    detail::read_key(j, "geometry", "t_i", t_i);
    if (t_i > 0.0) c.epr.t_i_1 = c.epr.t_i_2 = t_i;
    detail::read_key(j, "geometry", "t_i_1", c.epr.t_i_1);
    detail::read_key(j, "geometry", "t_i_2", c.epr.t_i_2);
    detail::read_key(j, "geometry", "delta_p", c.epr.delta_p);
    c.epr.axis1 = detail::read_axis(j, "geometry", "axis1", c.epr.axis1);
    c.epr.axis2 = detail::read_axis(j, "geometry", "axis2", c.epr.axis2);
    if (c.experiment == "epr") {
        detail::read_key(j, "geometry", "sigma", c.epr.sigma);
        detail::read_key(j, "geometry", "mass", c.epr.mass);
    }
    detail::read_key(j, "rule", "type", c.rule);
    detail::read_key(j, "rule", "dtau", c.dtau);
    detail::read_key(j, "rule", "dt", c.dtau);
    detail::read_key(j, "rule", "beta", c.beta);
    double scen = c.scenario;
    detail::read_key(j, "surface", "scenario", scen);
    c.scenario = static_cast<int>(scen);
    detail::read_key(j, "surface", "times", c.surface_times);
    double n = static_cast<double>(c.n), seed = static_cast<double>(c.seed);
    detail::read_key(j, "run", "n", n);
    detail::read_key(j, "run", "seed", seed);
    c.n = static_cast<std::size_t>(n);
    c.seed = static_cast<std::uint64_t>(seed);
    detail::read_key(j, "run", "mode", c.mode);
    double threads = c.threads;
    detail::read_key(j, "run", "threads", threads);
    c.threads = static_cast<unsigned>(threads);
    detail::read_key(j, "run", "dump_trajectories", c.dump_trajectories);
    double stride = static_cast<double>(c.trajectory_stride);
    detail::read_key(j, "run", "trajectory_stride", stride);
    c.trajectory_stride = static_cast<std::size_t>(stride);
    detail::read_key(j, "run", "output", c.output);
    detail::read_key(j, "verify", "betas", c.verify_betas);
    detail::read_key(j, "verify", "dtaus", c.verify_dtaus);
    double vp = static_cast<double>(c.verify_points);
    detail::read_key(j, "verify", "points", vp);
    c.verify_points = static_cast<std::size_t>(vp);
    double cs = static_cast<double>(c.crossing_samples);
    detail::read_key(j, "verify", "crossing_samples", cs);
    c.crossing_samples = static_cast<std::size_t>(cs);
    double os = static_cast<double>(c.oracle_samples);
    detail::read_key(j, "verify", "oracle_samples", os);
    c.oracle_samples = static_cast<std::size_t>(os);
    double g1 = static_cast<double>(c.grid_n1), g2 = static_cast<double>(c.grid_n2),
           pt = static_cast<double>(c.plot_trajectories);
    detail::read_key(j, "plot", "grid_n1", g1);
    detail::read_key(j, "plot", "grid_n2", g2);
    detail::read_key(j, "plot", "trajectories", pt);
    c.grid_n1 = static_cast<std::size_t>(g1);
    c.grid_n2 = static_cast<std::size_t>(g2);
    c.plot_trajectories = static_cast<std::size_t>(pt);

    c.validate();
    return c;
}

/// Canonical JSON form of a fully resolved configuration; feeding it back
/// reproduces the run bit for bit.
inline Json resolved_config_json(const RunConfig& c)
{
    Json j;
    j["experiment"]["type"] = c.experiment;
    if (c.experiment == "hsz") {
        j["geometry"] = {{"phi", c.hsz.phi},
                         {"chi", c.hsz.chi},
                         {"t_lambda", c.hsz.t_lambda},
                         {"t_mu", c.hsz.t_mu},
                         {"t_nu", c.hsz.t_nu},
                         {"v", c.hsz.v},
                         {"sigma", c.hsz.sigma},
                         {"arm_separation", c.hsz.arm_separation},
                         {"mass", c.hsz.mass}};
    } else {
        j["geometry"] = {{"t_i_1", c.epr.t_i_1},
                         {"t_i_2", c.epr.t_i_2},
                         {"delta_p", c.epr.delta_p},
                         {"sigma", c.epr.sigma},
                         {"mass", c.epr.mass},
                         {"axis1", {c.epr.axis1.x, c.epr.axis1.y, c.epr.axis1.z}},
                         {"axis2", {c.epr.axis2.x, c.epr.axis2.y, c.epr.axis2.z}}};
    }
    j["rule"]["type"] = c.rule;
    j["rule"]["dtau"] = c.dtau;
    if (c.rule == "frame_equal_time") j["rule"]["beta"] = c.beta;
    j["surface"]["scenario"] = c.scenario;
    if (!c.surface_times.empty()) j["surface"]["times"] = c.surface_times;
    j["run"] = {{"n", c.n},
                {"seed", c.seed},
                {"mode", c.mode},
                {"threads", c.threads},
                {"dump_trajectories", c.dump_trajectories},
                {"trajectory_stride", c.trajectory_stride},
                {"output", c.output}};
    j["verify"] = {{"betas", c.verify_betas},
                   {"dtaus", c.verify_dtaus},
                   {"points", c.verify_points},
                   {"crossing_samples", c.crossing_samples},
                   {"oracle_samples", c.oracle_samples}};
    j["plot"] = {{"grid_n1", c.grid_n1},
                 {"grid_n2", c.grid_n2},
                 {"trajectories", c.plot_trajectories}};
    return j;
}

/// Provenance hash over the resolved configuration, excluding the output
/// location so reruns into different directories identify as the same run.
inline std::string config_hash(const RunConfig& c)
{
    Json j = resolved_config_json(c);
    j["run"].erase("output");
    return hex64(fnv1a64(j.dump()));
}

// ---------------------------------------------------------------------------
// Plot data

/// Long-form density grid over the reduced configuration space on a surface.
inline std::string density_grid_csv(const MultiTimeWaveFunction& wf,
                                    const CoordinationSurface& surf, double z1_lo,
                                    double z1_hi, double z2_lo, double z2_hi,
                                    std::size_t n1, std::size_t n2)
{
    std::string out = "z1,z2,density\n";
    for (std::size_t i = 0; i < n1; ++i) {
        const double z1 = z1_lo + (z1_hi - z1_lo) * i / (n1 - 1);
        for (std::size_t j = 0; j < n2; ++j) {
            const double z2 = z2_lo + (z2_hi - z2_lo) * j / (n2 - 1);
            const double rho = density(
                wf, ConfigPoint{{Event{surf.times[0], z1}, Event{surf.times[1], z2}}});
            out += format_sig12(z1) + ',' + format_sig12(z2) + ',' + format_sig12(rho) + '\n';
        }
    }
    return out;
}

/// Reduced-configuration-space polylines of a trajectory bundle.
inline std::string trajectory_polylines_csv(const std::vector<TrajectoryTable>& tables)
{
    std::string out = "trajectory,step,t1,z1,t2,z2\n";
    for (std::size_t i = 0; i < tables.size(); ++i)
        for (const auto& row : tables[i].rows) {
            out += std::to_string(i) + ',' + std::to_string(row.step);
            for (const auto& e : row.events)
                out += ',' + format_sig12(e.t) + ',' + format_sig12(e.z);
            out += '\n';
        }
    return out;
}

/// Per-particle space-time paths with the decorative transverse coordinate
/// (packets fly along x at a constant rate; the optical elements sit at
/// x = +-x_element).
inline std::string spacetime_paths_csv(const std::vector<TrajectoryTable>& tables,
                                       double x_element, double t_element)
{
    std::string out = "trajectory,particle,step,t,z,x\n";
    const double rate = t_element > 0.0 ? x_element / t_element : 0.0;
    for (std::size_t i = 0; i < tables.size(); ++i)
        for (const auto& row : tables[i].rows)
            for (std::size_t k = 0; k < row.events.size(); ++k) {
                const double dir = k == 0 ? -1.0 : 1.0;
                out += std::to_string(i) + ',' + std::to_string(k + 1) + ',' +
                       std::to_string(row.step) + ',' + format_sig12(row.events[k].t) + ',' +
                       format_sig12(row.events[k].z) + ',' +
                       format_sig12(dir * rate * row.events[k].t) + '\n';
            }
    return out;
}

inline void write_file(const std::string& path, const std::string& content)
{
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << content;
}

inline std::string read_file(const std::string& path)
{
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for reading: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace pilotwave
