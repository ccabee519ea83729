// qkfp: command-line driver for the kinetic Fokker-Planck solver.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "qkfp/harness/check.hpp"
#include "qkfp/harness/config.hpp"
#include "qkfp/harness/scenario.hpp"

namespace {

struct Args {
    std::string config;
    std::uint64_t seed = 1;
    std::string out;
    bool quiet = false;
    // equilibrium
    std::optional<int> kappa;
    // check
    std::string snapshot;
    bool skip_refinement = false;
    // sweep-delta
    std::vector<double> deltas;
};

std::string out_dir(const Args& a, const qkfp::ScenarioConfig& c) {
    return a.out.empty() ? c.output.directory : a.out;
}

qkfp::RunOptions run_options(const Args& a, const qkfp::ScenarioConfig& c) {
    qkfp::RunOptions o;
    o.out_dir = out_dir(a, c);
    o.quiet = a.quiet;
    return o;
}

void say(const Args& a, const std::string& line) {
    if (!a.quiet) std::cout << line << "\n";
}

int cmd_equilibrium(const Args& a) {
    qkfp::ModelParams mp;
    qkfp::GridSpec grid;
    if (!a.config.empty()) {
        const auto c = qkfp::load_config(a.config);
        mp = c.model;
        grid = c.grid;
    }
    if (a.kappa) mp.kappa = *a.kappa;
    qkfp::statistics_from_kappa(mp.kappa);

    const auto quad = grid.momentum_quadrature();
    const double hi = mp.kappa == 1 ? 0.99 * qkfp::boson_beta_limit(1) : 2.5;
    std::string csv = "beta,mass_grid,mass_whole_line\n";
    std::printf("kappa = %d, grid np = %d, p_max = %g\n", mp.kappa, grid.np(), grid.p_max());
    std::printf("%12s %22s %22s\n", "beta", "mass (grid)", "mass (whole line)");
    for (int k = 1; k <= 20; ++k) {
        const double beta = hi * k / 20.0;
        const double mg = qkfp::mass_of_beta(beta, mp.kappa, 1, quad);
        const double mw = qkfp::mass_of_beta(beta, mp.kappa, 1, qkfp::WholeSpace{});
        std::printf("%12.6g %22.15g %22.15g\n", beta, mg, mw);
        csv += qkfp::format_double(beta) + "," + qkfp::format_double(mg) + "," + qkfp::format_double(mw) + "\n";
    }
    std::printf("critical mass: d=1 %g, d=2 %g, d=3 %.15g\n", qkfp::critical_mass(1), qkfp::critical_mass(2),
                qkfp::critical_mass(3));
    if (!a.out.empty()) {
        std::filesystem::create_directories(a.out);
        std::ofstream(std::filesystem::path(a.out) / "equilibrium.csv") << csv;
    }
    return qkfp::kExitOk;
}

int cmd_run(const Args& a) {
    const auto c = qkfp::load_config(a.config);
    const auto res = qkfp::run_scenario(c, run_options(a, c));
    if (res.fit)
        say(a, "lambda = " + qkfp::format_double(res.fit->lambda) + ", c = " + qkfp::format_double(res.fit->c) +
                   ", r^2 = " + qkfp::format_double(res.fit->r_squared));
    else
        say(a, res.fit_note);
    say(a, "wrote " + out_dir(a, c));
    for (const auto& f : res.failures) std::cerr << "invariant failed: " << f << "\n";
    return res.exit_code;
}

int cmd_contract(const Args& a) {
    const auto c = qkfp::load_config(a.config);
    const auto rep = qkfp::run_contraction_pair(c, run_options(a, c));
    std::cout << rep.to_json().dump(2) << "\n";
    return rep.passed() ? qkfp::kExitOk : qkfp::kExitInvariant;
}

int cmd_check(const Args& a) {
    const auto c = qkfp::load_config(a.config);
    qkfp::CheckOptions opt;
    opt.seed = a.seed;
    opt.refinement_study = !a.skip_refinement;
    if (!a.snapshot.empty()) opt.snapshot = qkfp::read_snapshot(a.snapshot);
    const auto report = qkfp::check_suite(c, opt);
    const auto j = report.to_json();
    const std::string dir = out_dir(a, c);
    std::filesystem::create_directories(dir);
    std::ofstream(std::filesystem::path(dir) / "check.json") << j.dump(2) << "\n";
    if (!a.quiet)
        for (const auto& e : report.entries)
            std::printf("%-4s %-36s %-13s value %-12.4g threshold %.4g\n", e.passed ? "ok" : "FAIL", e.name.c_str(),
                        e.module.c_str(), e.value, e.threshold);
    for (const auto& name : report.failed()) std::cerr << "invariant failed: " << name << "\n";
    return report.passed() ? qkfp::kExitOk : qkfp::kExitInvariant;
}

int cmd_sweep(const Args& a) {
    const auto c = qkfp::load_config(a.config);
    const auto table = qkfp::sweep_delta(c, a.deltas, run_options(a, c));
    std::printf("%14s %14s %14s %6s %6s %12s %10s\n", "delta", "C6", "C7", "equiv", "mono", "lambda_E", "r^2");
    for (const auto& r : table)
        std::printf("%14.6g %14.6g %14.6g %6s %6s %12.6g %10.6g\n", r.delta, r.c6, r.c7,
                    r.equivalence_holds ? "yes" : "no", r.monotone_after_transient ? "yes" : "no", r.lambda_e,
                    r.r_squared);
    return qkfp::kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Quantum kinetic Fokker-Planck solver and diagnostics"};
    app.require_subcommand(1);
    Args args;

    auto add_common = [&](CLI::App* sub, bool need_config) {
        auto* opt = sub->add_option("--config", args.config, "scenario config file");
        if (need_config) opt->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", args.seed, "seed for randomized checks");
        sub->add_option("--out", args.out, "output directory (overrides output.directory)");
        sub->add_flag("--quiet", args.quiet, "suppress progress output");
    };

    auto* eq = app.add_subcommand("equilibrium", "print the beta <-> mass table and critical masses");
    add_common(eq, false);
    eq->add_option("--kappa", args.kappa, "statistics: -1, 0 or 1")->check(CLI::IsMember({-1, 0, 1}));

    auto* run = app.add_subcommand("run", "evolve a scenario and write diagnostics, fit and plots");
    add_common(run, true);

    auto* contract = app.add_subcommand("contract", "evolve a pair in lockstep and report L1 contraction");
    add_common(contract, true);

    auto* check = app.add_subcommand("check", "run the invariant suite and write check.json");
    add_common(check, true);
    check->add_option("--snapshot", args.snapshot, "also check a stored snapshot")->check(CLI::ExistingFile);
    check->add_flag("--skip-refinement", args.skip_refinement, "skip the dissipation-identity refinement study");

    auto* sweep = app.add_subcommand("sweep-delta", "re-fit the decay of E over a grid of delta values");
    add_common(sweep, true);
    sweep->add_option("--deltas", args.deltas, "delta values (default: heuristic times 1/4 .. 4)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : qkfp::kExitConfig;
    }

    try {
        if (*eq) return cmd_equilibrium(args);
        if (*run) return cmd_run(args);
        if (*contract) return cmd_contract(args);
        if (*check) return cmd_check(args);
        if (*sweep) return cmd_sweep(args);
    } catch (const qkfp::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return qkfp::kExitConfig;
    } catch (const qkfp::SolverFault& e) {
        std::cerr << "solver fault: " << e.what() << "\n";
        return qkfp::kExitSolver;
    } catch (const qkfp::DomainError& e) {
        std::cerr << "domain error: " << e.what() << "\n";
        return qkfp::kExitSolver;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return qkfp::kExitInvariant;
    }
    return qkfp::kExitOk;
}
