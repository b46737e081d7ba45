// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <filesystem>
#include <sstream>

#include "commands.hpp"

using namespace pilotwave;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag)
        : path(fs::temp_directory_path() / ("pilotwave_" + tag))
    {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

RunConfig small_hsz(const fs::path& out)
{
    RunConfig cfg;
    cfg.experiment = "hsz";
    cfg.n = 200;
    cfg.seed = 7;
    cfg.dtau = 4e-3;
    cfg.mode = "kinematic";
    cfg.output = out.string();
    return cfg;
}

}  // namespace

TEST_CASE("cmd_run writes report, resolved config, and is bit-deterministic")
{
    TempDir dir("run");
    auto cfg = small_hsz(dir.path / "a");
    std::ostringstream log;
    REQUIRE(cli::cmd_run(cfg, log) == 0);
    CHECK(fs::exists(dir.path / "a" / "report.json"));
    CHECK(fs::exists(dir.path / "a" / "resolved_config.json"));

    const std::string report1 = read_file((dir.path / "a" / "report.json").string());
    const Json j = Json::parse(report1);
    CHECK(j["samples"] == 200);
    CHECK(j["excluded"] == 0);
    CHECK(j["provenance"]["config_hash"] == config_hash(cfg));
    CHECK(std::abs(j["joint_probability"][0].get<double>() - 0.5) < 0.15);

    // identical seed and config reproduce the report bit for bit
    auto cfg2 = small_hsz(dir.path / "b");
    REQUIRE(cli::cmd_run(cfg2, log) == 0);
    std::string report2 = read_file((dir.path / "b" / "report.json").string());
    // the reports differ only through wall_seconds; strip it before comparing
    auto strip = [](std::string s) {
        Json j2 = Json::parse(s);
        j2.erase("wall_seconds");
        return j2.dump();
    };
    CHECK(strip(report1) == strip(report2));
}

TEST_CASE("resolved-config echo re-fed to the CLI reproduces identical outputs")
{
    TempDir dir("roundtrip");
    auto cfg = small_hsz(dir.path / "first");
    std::ostringstream log;
    REQUIRE(cli::cmd_run(cfg, log) == 0);

    // feed the echoed resolved config back in, changing only the output dir
    const std::string echoed =
        read_file((dir.path / "first" / "resolved_config.json").string());
    RunConfig cfg2 = parse_config(echoed);
    const std::string original_output = cfg2.output;
    cfg2.output = (dir.path / "second").string();
    REQUIRE(cli::cmd_run(cfg2, log) == 0);

    Json r1 = Json::parse(read_file((dir.path / "first" / "report.json").string()));
    Json r2 = Json::parse(read_file((dir.path / "second" / "report.json").string()));
    r1.erase("wall_seconds");
    r2.erase("wall_seconds");
    CHECK(r1.dump() == r2.dump());
    CHECK(original_output == (dir.path / "first").string());
}

TEST_CASE("cmd_run dumps trajectory tables with sidecars when asked")
{
    TempDir dir("dump");
    auto cfg = small_hsz(dir.path / "out");
    cfg.n = 5;
    cfg.dump_trajectories = true;
    std::ostringstream log;
    REQUIRE(cli::cmd_run(cfg, log) == 0);
    CHECK(fs::exists(dir.path / "out" / "trajectories" / "000000.csv"));
    CHECK(fs::exists(dir.path / "out" / "trajectories" / "000004.meta.json"));
    const std::string csv =
        read_file((dir.path / "out" / "trajectories" / "000000.csv").string());
    CHECK(csv.rfind("step,t1,z1,sx1,sy1,sz1,t2,z2,sx2,sy2,sz2", 0) == 0);
}

TEST_CASE("cmd_verify passes on the default invariant-rule geometry")
{
    TempDir dir("verify");
    auto cfg = small_hsz(dir.path / "v");
    cfg.dtau = 2e-3;
    cfg.verify_points = 4;
    cfg.verify_betas = {0.3, -0.6};
    cfg.verify_dtaus = {4e-3, 2e-3};
    cfg.crossing_samples = 40;
    cfg.oracle_samples = 60;
    std::ostringstream log;
    REQUIRE(cli::cmd_verify(cfg, log) == 0);
    const Json j = Json::parse(read_file((dir.path / "v" / "verify.json").string()));
    CHECK(j["passed"] == true);
    CHECK(j["no_crossing"]["crossings"] == 0);
    CHECK(j["frame_invariance"]["outcome_mismatches"] == 0);
    CHECK(j["quantile_oracle"]["passed"] == true);
    CHECK(j["scenario_contrast"]["particle1_differs"] == true);
}

TEST_CASE("cmd_verify under a frame-equal-time rule reports flips and still exits 0")
{
    TempDir dir("verify_eq");
    auto cfg = small_hsz(dir.path / "v");
    cfg.rule = "frame_equal_time";
    cfg.beta = 0.5;
    cfg.dtau = 2e-3;
    cfg.crossing_samples = 30;
    cfg.oracle_samples = 60;
    std::ostringstream log;
    REQUIRE(cli::cmd_verify(cfg, log) == 0);
    const Json j = Json::parse(read_file((dir.path / "v" / "verify.json").string()));
    CHECK(j["equal_time_flips"]["rule_is_frame_dependent"] == true);
    CHECK(j["equal_time_flips"]["flips"].get<int>() > 0);
}

TEST_CASE("cmd_plotdata emits a normalized grid and polylines")
{
    TempDir dir("plot");
    auto cfg = small_hsz(dir.path / "p");
    cfg.scenario = 1;
    cfg.grid_n1 = 241;
    cfg.grid_n2 = 201;
    cfg.plot_trajectories = 4;
    cfg.trajectory_stride = 100;
    std::ostringstream log;
    REQUIRE(cli::cmd_plotdata(cfg, log) == 0);

    const std::string grid = read_file((dir.path / "p" / "density_grid.csv").string());
    std::istringstream in(grid);
    std::string line;
    std::getline(in, line);
    REQUIRE(line == "z1,z2,density");
    std::vector<double> z1s, z2s, rho;
    while (std::getline(in, line)) {
        const auto c1 = line.find(',');
        const auto c2 = line.rfind(',');
        z1s.push_back(std::stod(line.substr(0, c1)));
        z2s.push_back(std::stod(line.substr(c1 + 1, c2 - c1 - 1)));
        rho.push_back(std::stod(line.substr(c2 + 1)));
    }
    REQUIRE(rho.size() == cfg.grid_n1 * cfg.grid_n2);
    const double h1 = (z1s.back() - z1s.front()) / (cfg.grid_n1 - 1);
    const double h2 =
        (z2s[cfg.grid_n2 - 1] - z2s[0]) / (cfg.grid_n2 - 1);
    double total = 0.0;
    for (std::size_t i = 0; i < cfg.grid_n1; ++i)
        for (std::size_t j = 0; j < cfg.grid_n2; ++j) {
            double w = 1.0;
            if (i == 0 || i == cfg.grid_n1 - 1) w *= 0.5;
            if (j == 0 || j == cfg.grid_n2 - 1) w *= 0.5;
            total += w * rho[i * cfg.grid_n2 + j];
        }
    total *= h1 * h2;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-4));

    const std::string poly = read_file((dir.path / "p" / "trajectories.csv").string());
    CHECK(poly.rfind("trajectory,step,t1,z1,t2,z2", 0) == 0);
    const std::string paths = read_file((dir.path / "p" / "spacetime_paths.csv").string());
    CHECK(paths.rfind("trajectory,particle,step,t,z,x", 0) == 0);
}

TEST_CASE("epr verify covers non-crossing and frame invariance")
{
    TempDir dir("verify_epr");
    RunConfig cfg;
    cfg.experiment = "epr";
    cfg.n = 50;
    cfg.dtau = 2e-3;
    cfg.mode = "kinematic";
    cfg.output = (dir.path / "v").string();
    cfg.verify_points = 4;
    cfg.verify_betas = {0.4};
    cfg.verify_dtaus = {4e-3, 2e-3};
    cfg.crossing_samples = 30;
    std::ostringstream log;
    REQUIRE(cli::cmd_verify(cfg, log) == 0);
    const Json j = Json::parse(read_file((dir.path / "v" / "verify.json").string()));
    CHECK(j["passed"] == true);
    CHECK_FALSE(j.contains("quantile_oracle"));
}
