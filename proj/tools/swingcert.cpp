// swingcert: simulate, certify and verify swing networks under DAI control
// with denial-of-service outages.
//
// Exit codes: 0 success, 1 failed check or numeric failure, 2 input error.

#include "swingcert/swingcert.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace swingcert;

namespace {

struct DosFlags {
    std::string file;
    std::string generate;  // kappa,tau,policy,seed
};

DoSSchedule parse_generate(const std::string& arg, double t_end) {
    std::vector<std::string> parts;
    std::stringstream ss(arg);
    for (std::string item; std::getline(ss, item, ',');) parts.push_back(item);
    if (parts.size() != 4) throw InputError("--dos-generate expects kappa,tau,policy,seed");
    try {
        const double kappa = std::stod(parts[0]);
        const double tau = std::stod(parts[1]);
        const auto seed = static_cast<std::uint64_t>(std::stoull(parts[3]));
        return generate_schedule(kappa, tau, t_end, seed, parse_policy(parts[2]));
    } catch (const std::logic_error&) {
        throw InputError("--dos-generate: cannot parse '" + arg + "'");
    }
}

DoSSchedule load_schedule(const DosFlags& f, double t_end) {
    if (!f.file.empty() && !f.generate.empty()) throw InputError("--dos and --dos-generate are mutually exclusive");
    if (!f.file.empty()) return schedule_from_json(read_json_file(f.file));
    if (!f.generate.empty()) return parse_generate(f.generate, t_end);
    return {};
}

void print_checks(const VerificationResult& res) {
    for (const auto& c : res.checks) {
        std::printf("%-24s %-15s %s\n", c.name.c_str(), to_string(c.status), c.detail.c_str());
    }
    std::printf("overall: %s\n", res.passed ? "PASS" : "FAIL");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Lyapunov certificates for swing networks under distributed averaging control and DoS"};
    app.require_subcommand(1);

    std::string config, out;
    DosFlags dos;
    double dt = 1e-3, t_end = 10.0, kappa = 0.0, tau = std::numeric_limits<double>::infinity();
    std::size_t record_every = 1;
    std::optional<double> eps1, eps2;

    auto* sim = app.add_subcommand("simulate", "integrate the closed loop and write trajectory.csv");
    sim->add_option("--config", config, "network config (JSON)")->required()->check(CLI::ExistingFile);
    sim->add_option("--dos", dos.file, "DoS schedule (JSON)");
    sim->add_option("--dos-generate", dos.generate, "generate a schedule: kappa,tau,policy,seed");
    sim->add_option("--dt", dt, "integrator step [s]");
    sim->add_option("--t-end", t_end, "horizon [s]");
    sim->add_option("--record-every", record_every, "integrator steps per recorded sample");
    sim->add_option("--out", out, "output directory")->required();

    auto* cert = app.add_subcommand("certify", "compute the convergence certificate and write it as JSON");
    cert->add_option("--config", config, "network config (JSON)")->required()->check(CLI::ExistingFile);
    cert->add_option("--kappa", kappa, "DoS budget offset [s]");
    cert->add_option("--tau", tau, "DoS budget rate");
    cert->add_option("--eps1", eps1, "fix eps1 instead of searching");
    cert->add_option("--eps2", eps2, "fix eps2 instead of searching");
    cert->add_option("--out", out, "output file")->required();

    auto* ver = app.add_subcommand("verify", "simulate and check every certificate inequality");
    ver->add_option("--config", config, "network config (JSON)")->required()->check(CLI::ExistingFile);
    ver->add_option("--dos", dos.file, "DoS schedule (JSON)");
    ver->add_option("--dos-generate", dos.generate, "generate a schedule: kappa,tau,policy,seed");
    ver->add_option("--dt", dt, "integrator step [s]");
    ver->add_option("--t-end", t_end, "horizon [s]");
    ver->add_option("--record-every", record_every, "integrator steps per recorded sample");
    ver->add_option("--out", out, "output directory")->required();

    auto* cs = app.add_subcommand("case-study", "reproduce the four-bus DoS experiment");
    CaseStudyOptions cs_opt;
    cs->add_option("--t-end", cs_opt.t_end, "horizon [s]");
    cs->add_option("--dt", cs_opt.dt, "integrator step [s]");
    cs->add_option("--out", out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return 2;
    }

    try {
        ThetaSearchOptions theta;
        theta.threads = threads_from_env();

        if (*sim) {
            const NetworkModel model = load_network(config);
            const DoSSchedule schedule = load_schedule(dos, t_end);
            const BudgetCheck budget = validate_schedule(schedule);
            if (!budget.valid) {
                std::fprintf(stderr, "error: schedule violates DoS budget at t=%.12g\n", *budget.first_violation);
                return 2;
            }
            Trajectory traj = simulate(model.net, model.ctrl, zero_state(model.net), schedule, {dt, t_end, record_every});
            const Equilibrium eq = solve_equilibrium(model.net, model.ctrl);
            try {
                const Certificate c = build_certificate(model.net, model.ctrl, eq, schedule.kappa, schedule.tau, {}, theta);
                annotate_trajectory(traj, model.net, model.ctrl, eq, {c.eps1, c.eps2});
            } catch (const NumericError& e) {
                std::fprintf(stderr, "warning: no certificate, W left empty: %s\n", e.what());
            }
            fs::create_directories(out);
            std::ofstream f(fs::path(out) / "trajectory.csv");
            write_trajectory_csv(f, traj, model.net);
            write_json(fs::path(out) / "equilibrium.json", equilibrium_json(model.net, eq));
            if (!traj.completed) {
                std::fprintf(stderr, "error: %s\n", traj.diagnostic.c_str());
                return 1;
            }
            return 0;
        }

        if (*cert) {
            const NetworkModel model = load_network(config);
            if (eps1.has_value() != eps2.has_value()) throw InputError("--eps1 and --eps2 must be given together");
            std::optional<Epsilons> eps;
            if (eps1) eps = Epsilons{*eps1, *eps2};
            const Equilibrium eq = solve_equilibrium(model.net, model.ctrl);
            const Certificate c = build_certificate(model.net, model.ctrl, eq, kappa, tau, eps, theta);
            const fs::path path(out);
            if (path.has_parent_path()) fs::create_directories(path.parent_path());
            write_json(path, certificate_document(model.net, model.ctrl, eq, c, theta));
            std::printf("eps = (%.4g, %.4g)  c = %.6g  alpha = %.6g  beta = %.6g  dos_stable = %s\n", c.eps1, c.eps2,
                        c.c, c.alpha_nom, c.beta_nom, c.dos_stable ? "true" : "false");
            return 0;
        }

        if (*ver) {
            VerificationSetup setup;
            setup.model = load_network(config);
            setup.schedule = load_schedule(dos, t_end);
            setup.sim = {dt, t_end, record_every};
            setup.theta = theta;
            const VerificationResult res = run_verification(setup);
            write_artifacts(res, setup.model.net, out);
            print_checks(res);
            return res.passed ? 0 : 1;
        }

        if (*cs) {
            cs_opt.theta = theta;
            const VerificationResult res = run_case_study(fs::path(out), cs_opt);
            print_checks(res);
            return res.passed ? 0 : 1;
        }
    } catch (const InputError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
