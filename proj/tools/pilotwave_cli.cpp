// SPDX-License-Identifier: Apache-2.0
//
// pilotwave: Lorentz-invariant pilot-wave trajectories for entangled pairs.
//
//   pilotwave run       --experiment hsz --phi 0 --chi 0 --scenario 1 --n 10000 --seed 7
//   pilotwave verify    --config experiment.cfg
//   pilotwave plotdata  --experiment hsz --scenario 2 --out plots
//   pilotwave echo-config [--config ...]
//
// Configuration comes from a sectioned key = value file (--config or the
// PILOTWAVE_CONFIG environment variable), from the JSON that echo-config
// emits, or from flags; flags override file values.

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"

using namespace pilotwave;

int main(int argc, char** argv)
{
    CLI::App app{"Lorentz-invariant pilot-wave trajectory simulator"};
    app.require_subcommand(1);

    std::string config_path;
    if (const char* env = std::getenv("PILOTWAVE_CONFIG")) config_path = env;

    struct Flags {
        std::string experiment, mode, rule, output;
        double phi = 0, chi = 0, t_lambda = 0, t_mu = 0, t_nu = 0, dtau = 0, beta = 0,
               sigma = 0, v = 0, mass = 0, arm = 0, t_i = 0, delta_p = 0;
        std::uint64_t n = 0, seed = 0;
        int scenario = 0;
        bool dump = false;
    } f;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "configuration file (key = value or JSON)");
        cmd->add_option("--experiment", f.experiment, "hsz or epr");
        cmd->add_option("--phi", f.phi, "phase shift on particle-1 arm a");
        cmd->add_option("--chi", f.chi, "phase shift on particle-2 arm b");
        cmd->add_option("--t-lambda", f.t_lambda, "mirror time");
        cmd->add_option("--t-mu", f.t_mu, "splitter time");
        cmd->add_option("--t-nu", f.t_nu, "exit classification time");
        cmd->add_option("--t-i", f.t_i, "measurement time (epr)");
        cmd->add_option("--delta-p", f.delta_p, "impulse magnitude (epr)");
        cmd->add_option("--v", f.v, "packet speed");
        cmd->add_option("--sigma", f.sigma, "packet width");
        cmd->add_option("--mass", f.mass, "particle mass");
        cmd->add_option("--arm", f.arm, "arm separation (hsz)");
        cmd->add_option("--rule", f.rule, "invariant_proper_time or frame_equal_time");
        cmd->add_option("--dtau", f.dtau, "coordination step");
        cmd->add_option("--beta", f.beta, "rule frame velocity (frame_equal_time)");
        cmd->add_option("--scenario", f.scenario, "coordination surface: 1 or 2");
        cmd->add_option("--n", f.n, "ensemble size");
        cmd->add_option("--seed", f.seed, "random seed");
        cmd->add_option("--mode", f.mode, "field or kinematic guidance");
        cmd->add_option("--out", f.output, "output directory");
        cmd->add_flag("--dump-trajectories", f.dump, "write per-trajectory CSV tables");
    };

    auto* run = app.add_subcommand("run", "sample, integrate and classify an ensemble");
    auto* verify = app.add_subcommand("verify", "run the verification suites");
    auto* plot = app.add_subcommand("plotdata", "emit density grids and trajectory bundles");
    auto* echo = app.add_subcommand("echo-config", "print the resolved configuration as JSON");
    for (auto* c : {run, verify, plot, echo}) add_common(c);

    CLI11_PARSE(app, argc, argv);

    RunConfig cfg;
    try {
        if (!config_path.empty()) cfg = parse_config(read_file(config_path));
        auto* cmd = app.get_subcommands().front();
        auto passed = [&](const char* name) { return cmd->count(name) > 0; };
        if (passed("--experiment")) cfg.experiment = f.experiment;
        if (passed("--phi")) cfg.hsz.phi = f.phi;
        if (passed("--chi")) cfg.hsz.chi = f.chi;
        if (passed("--t-lambda")) cfg.hsz.t_lambda = f.t_lambda;
        if (passed("--t-mu")) cfg.hsz.t_mu = f.t_mu;
        if (passed("--t-nu")) cfg.hsz.t_nu = f.t_nu;
        if (passed("--t-i")) cfg.epr.t_i_1 = cfg.epr.t_i_2 = f.t_i;
        if (passed("--delta-p")) cfg.epr.delta_p = f.delta_p;
        if (passed("--v")) cfg.hsz.v = f.v;
        if (passed("--sigma")) {
            cfg.hsz.sigma = f.sigma;
            cfg.epr.sigma = f.sigma;
        }
        if (passed("--mass")) {
            cfg.hsz.mass = f.mass;
            cfg.epr.mass = f.mass;
        }
        if (passed("--arm")) cfg.hsz.arm_separation = f.arm;
        if (passed("--rule")) cfg.rule = f.rule;
        if (passed("--dtau")) cfg.dtau = f.dtau;
        if (passed("--beta")) cfg.beta = f.beta;
        if (passed("--scenario")) cfg.scenario = f.scenario;
        if (passed("--n")) cfg.n = f.n;
        if (passed("--seed")) cfg.seed = f.seed;
        if (passed("--mode")) cfg.mode = f.mode;
        if (passed("--out")) cfg.output = f.output;
        if (passed("--dump-trajectories")) cfg.dump_trajectories = f.dump;
        cfg.validate();
    } catch (const std::exception& err) {
        std::cerr << Json{{"error", "configuration"}, {"detail", err.what()}}.dump() << "\n";
        return 2;
    }

    try {
        if (app.got_subcommand(run)) return cli::cmd_run(cfg, std::cout);
        if (app.got_subcommand(verify)) return cli::cmd_verify(cfg, std::cout);
        if (app.got_subcommand(plot)) return cli::cmd_plotdata(cfg, std::cout);
        return cli::cmd_echo_config(cfg, std::cout);
    } catch (const std::exception& err) {
        std::cerr << Json{{"error", "runtime"}, {"detail", err.what()}}.dump() << "\n";
        return 1;
    }
}
