#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qkfp/equilibria.hpp"
#include "qkfp/errors.hpp"
#include "qkfp/functionals.hpp"
#include "qkfp/grid.hpp"
#include "qkfp/harness/config.hpp"
#include "qkfp/harness/plot.hpp"
#include "qkfp/macroscopics.hpp"
#include "qkfp/solver.hpp"

namespace qkfp {

enum ExitCode : int { kExitOk = 0, kExitInvariant = 1, kExitConfig = 2, kExitSolver = 3 };

inline constexpr const char* kDiagnosticsHeader =
    "t,mass,H_abs,H_rel,H_rel_pi,D,E,dist_w,dist_pi,dist_macro,l1_pair,floor_events,bound_violation";

/// Run-level tolerances.
inline constexpr double kMassDriftTol = 1e-10;        // relative, whole run
inline constexpr double kEntropyStepTol = 1e-8;       // relative, per sample
inline constexpr double kEquilibriumDistance = 1e-11; // below this the fit is degenerate
/// Absolute floor for H_rel comparisons, per unit mass (64 ulp): near the
/// equilibrium H_rel itself is at roundoff and its relative changes are noise.
inline constexpr double kEntropyRoundoff = 64.0 * std::numeric_limits<double>::epsilon();

/// Rise of H_rel from h_prev to h beyond the roundoff floor, relative to
/// |h_prev|; <= 0 when the rise is within the floor.
inline double entropy_rise(double h_prev, double h, double mass) {
    double rise = h - h_prev;
    if (rise > 0.0 && rise <= kEntropyRoundoff * mass) rise = 0.0;
    return rise / std::max(std::abs(h_prev), 1e-300);
}

struct RunOptions {
    std::string out_dir;          ///< empty: do not write files
    bool quiet = true;
    std::ostream* log = &std::cerr;
};

/// Everything fixed before time stepping starts.
struct ScenarioSetup {
    ModelParams params;           ///< beta_inf replaced by the mass-matched value
    PhaseField f0;
    std::optional<PhaseField> g0; ///< companion initial field
    PhaseField f_inf;
    double delta = 0.0;
    EquivalenceConstants eq;
    double coupling = 0.0;        ///< C_coupling

    double c6() const { return eq.c3 - delta * coupling; }
    double c7() const { return eq.c4 + delta * coupling; }
};

/// Builds the initial field(s) and the global equilibrium with the same
/// discrete mass.
inline ScenarioSetup prepare_scenario(const ScenarioConfig& config) {
    ScenarioSetup s{config.model, initial_field(config.initial, config.grid, config.model), std::nullopt,
                    PhaseField(config.grid)};
    if (config.companion) s.g0 = initial_field(*config.companion, config.grid, config.model);
    const double mass = integrate_phase(s.f0);
    s.params.beta_inf = beta_of_mass(mass, config.model.kappa, 1, config.grid.momentum_quadrature());
    s.f_inf = global_equilibrium(config.grid, s.params.kappa, s.params.beta_inf);
    s.eq = equivalence_constants(s.params, config.grid);
    s.coupling = coupling_bound(config.grid);
    s.delta = config.model.delta.value_or(0.5 * s.eq.c3 / s.coupling);
    return s;
}

struct RunResult {
    std::vector<DiagnosticsRow> rows;
    std::optional<DecayFit> fit;
    std::string fit_note;         ///< why the fit was declined, if it was
    std::vector<std::string> failures;
    nlohmann::json fit_json;
    SolverStats stats;
    int exit_code = kExitOk;
};

inline std::string diagnostics_line(const DiagnosticsRow& r) {
    std::string s = format_double(r.t);
    for (double v : {r.mass, r.h_abs, r.h_rel, r.h_rel_pi, r.dissipation, r.e, r.dist_w, r.dist_pi, r.dist_macro})
        s += "," + format_double(v);
    s += ",";
    if (r.l1_pair) s += format_double(*r.l1_pair);
    s += "," + std::to_string(r.floor_events) + "," + format_double(r.bound_violation);
    return s;
}

inline void write_diagnostics_csv(const std::string& path, const std::vector<DiagnosticsRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << kDiagnosticsHeader << "\n";
    for (const auto& r : rows) out << diagnostics_line(r) << "\n";
}

namespace detail {

inline void log_progress(const RunOptions& opt, const std::string& msg) {
    if (!opt.quiet && opt.log) *opt.log << msg << std::endl;
}

} // namespace detail

/// Lockstep evolution of f (and the companion, if any). The callback gets
/// (step index, t, f, g*) at t = 0, every `sample_every` steps and at t_end.
template <class Callback>
void evolve_lockstep(const ScenarioConfig& config, const ModelParams& params, PhaseField f,
                     std::optional<PhaseField> g, long sample_every, SolverStats& stats, Callback&& cb) {
    const StepSchedule schedule(config.solver);
    cb(0L, 0.0, std::as_const(f), g ? &std::as_const(*g) : nullptr);
    for (long k = 1; k <= schedule.steps; ++k) {
        const double dt = schedule.step_size(k);
        f = step(f, params, config.solver, dt, &stats);
        if (g) *g = step(*g, params, config.solver, dt, nullptr);
        if (k % sample_every == 0 || k == schedule.steps)
            cb(k, schedule.time(k), std::as_const(f), g ? &std::as_const(*g) : nullptr);
    }
}

/// Fits ln dist_w on the configured window; declines for equilibrium data.
inline void fit_rows(const ScenarioConfig& config, RunResult& res) {
    std::vector<double> t, d;
    double dmax = 0.0;
    for (const auto& r : res.rows) {
        t.push_back(r.t);
        d.push_back(r.dist_w);
        dmax = std::max(dmax, r.dist_w);
    }
    if (dmax <= kEquilibriumDistance) {
        res.fit_note = "degenerate: initial data is the global equilibrium (max dist_w " + format_double(dmax) + ")";
        return;
    }
    try {
        res.fit = fit_decay_rate(t, d, config.fit_lo(), config.fit_hi());
    } catch (const DomainError& e) {
        res.fit_note = std::string("fit declined: ") + e.what();
    }
}

inline RunResult run_scenario(const ScenarioConfig& config, const RunOptions& opt = {}) {
    const ScenarioSetup setup = prepare_scenario(config);
    RunResult res;
    DiagnosticsBuilder diag(setup.params, setup.f_inf, setup.delta);
    const long every = config.sample_every();
    const long steps = step_count(config.solver);
    long next_report = steps / 10;

    std::optional<PhaseField> final_field;
    evolve_lockstep(config, setup.params, setup.f0, setup.g0, every, res.stats,
                    [&](long k, double t, const PhaseField& f, const PhaseField* g) {
                        res.rows.push_back(diag(t, f, res.stats.floor_events, g));
                        if (k == steps) final_field = f;
                        if (k >= next_report && k > 0) {
                            char line[96];
                            std::snprintf(line, sizeof line, "t = %-8.4g dist_w = %.6e", t, res.rows.back().dist_w);
                            detail::log_progress(opt, line);
                            next_report += std::max(1L, steps / 10);
                        }
                    });

    // run-level invariants
    const double mass0 = res.rows.front().mass;
    double drift = 0.0;
    for (const auto& r : res.rows) drift = std::max(drift, std::abs(r.mass - mass0));
    if (drift > kMassDriftTol * mass0)
        res.failures.push_back("mass conservation: drift " + format_double(drift / mass0) + " relative > 1e-10");
    for (std::size_t n = 1; n < res.rows.size(); ++n) {
        if (entropy_rise(res.rows[n - 1].h_rel, res.rows[n].h_rel, mass0) > kEntropyStepTol) {
            res.failures.push_back("relative entropy increased at t = " + format_double(res.rows[n].t));
            break;
        }
    }

    fit_rows(config, res);

    nlohmann::json j;
    j["lambda"] = res.fit ? nlohmann::json(res.fit->lambda) : nlohmann::json(nullptr);
    j["c"] = res.fit ? nlohmann::json(res.fit->c) : nlohmann::json(nullptr);
    j["r_squared"] = res.fit ? nlohmann::json(res.fit->r_squared) : nlohmann::json(nullptr);
    j["window"] = {config.fit_lo(), config.fit_hi()};
    j["degenerate"] = !res.fit.has_value();
    if (!res.fit_note.empty()) j["note"] = res.fit_note;
    j["C3"] = setup.eq.c3;
    j["C4"] = setup.eq.c4;
    j["C6"] = setup.c6();
    j["C7"] = setup.c7();
    j["delta"] = setup.delta;
    j["coupling_bound"] = setup.coupling;
    j["beta_inf_discrete"] = setup.params.beta_inf;
    j["mass"] = mass0;
    j["floor_events"] = res.stats.floor_events;
    j["failures"] = res.failures;
    j["config"] = config_to_json(config);
    res.fit_json = j;

    if (!opt.out_dir.empty()) {
        namespace fs = std::filesystem;
        fs::create_directories(opt.out_dir);
        const fs::path dir(opt.out_dir);
        write_diagnostics_csv((dir / "diagnostics.csv").string(), res.rows);
        std::ofstream((dir / "fit.json").string()) << j.dump(2) << "\n";
        if (final_field) write_snapshot((dir / "final.snapshot").string(), *final_field, config.solver.t_end);
        if (config.output.emit_plots) {
            PlotSeries decay{"Distance to equilibrium", "t", {}, {{"dist_w", {}}, {"E", {}}}};
            PlotSeries ent{"Relative entropy and dissipation", "t", {}, {{"H_rel", {}}, {"D", {}}}};
            for (const auto& r : res.rows) {
                decay.x.push_back(r.t);
                decay.curves[0].y.push_back(r.dist_w);
                decay.curves[1].y.push_back(r.e);
                ent.x.push_back(r.t);
                ent.curves[0].y.push_back(r.h_rel);
                ent.curves[1].y.push_back(r.dissipation);
            }
            emit_plot(decay, PlotKind::Semilog, (dir / "decay.svg").string());
            emit_plot(ent, PlotKind::Linear, (dir / "entropy.svg").string());
        }
    }
    res.exit_code = res.failures.empty() ? kExitOk : kExitInvariant;
    return res;
}

// ---------------------------------------------------------------------------
// Paired runs

struct ContractionReport {
    double l1_initial = 0.0;
    double max_ratio = 0.0;            ///< max_t l1(t) / l1(0); 0 when l1(0) = 0
    double max_allowance_excess = 0.0; ///< max_t [l1(t) - l1(0)(1 + 10 dt t)], <= 0 passes
    bool ordered = false;              ///< f0 <= g0 (or g0 <= f0) pointwise
    double ordered_excess = 0.0;       ///< max over grid and samples of (f - g)+ with f0 <= g0
    double ordered_tolerance = 0.0;    ///< 5 (dx + dp^2)
    long samples = 0;

    bool passed() const {
        return max_allowance_excess <= 0.0 && (!ordered || ordered_excess <= ordered_tolerance);
    }

    nlohmann::json to_json() const {
        return {{"l1_initial", l1_initial},         {"max_ratio", max_ratio},
                {"max_allowance_excess", max_allowance_excess},
                {"ordered", ordered},               {"ordered_excess", ordered_excess},
                {"ordered_tolerance", ordered_tolerance},
                {"samples", samples},               {"passed", passed()}};
    }
};

inline ContractionReport run_contraction_pair(const ScenarioConfig& config, const RunOptions& opt = {}) {
    if (!config.companion) throw ConfigError("contract: the config declares no companion initial condition");
    ScenarioSetup setup = prepare_scenario(config);
    ContractionReport rep;
    const GridSpec& grid = config.grid;
    rep.ordered_tolerance = 5.0 * (grid.dx() + grid.dp() * grid.dp());
    rep.l1_initial = l1_distance(setup.f0, *setup.g0);

    bool f_below = true, g_below = true;
    for (std::size_t n = 0; n < grid.size(); ++n) {
        const double a = setup.f0.values()[n], b = setup.g0->values()[n];
        f_below = f_below && a <= b;
        g_below = g_below && b <= a;
    }
    rep.ordered = f_below || g_below;
    PhaseField lower = f_below ? setup.f0 : *setup.g0;
    PhaseField upper = f_below ? *setup.g0 : setup.f0;

    const double dt = config.solver.dt;
    SolverStats stats;
    evolve_lockstep(config, setup.params, std::move(lower), std::move(upper), 1, stats,
                    [&](long, double t, const PhaseField& f, const PhaseField* g) {
                        ++rep.samples;
                        const double l1 = l1_distance(f, *g);
                        const double ratio = rep.l1_initial > 0.0 ? l1 / rep.l1_initial : 0.0;
                        rep.max_ratio = std::max(rep.max_ratio, ratio);
                        const double excess = l1 - rep.l1_initial * (1.0 + 10.0 * dt * t);
                        rep.max_allowance_excess =
                            rep.samples == 1 ? excess : std::max(rep.max_allowance_excess, excess);
                        if (rep.ordered) {
                            for (std::size_t n = 0; n < grid.size(); ++n)
                                rep.ordered_excess = std::max(rep.ordered_excess, f.values()[n] - g->values()[n]);
                        }
                    });
    detail::log_progress(opt, "contract: max l1 ratio " + format_double(rep.max_ratio));
    if (!opt.out_dir.empty()) {
        std::filesystem::create_directories(opt.out_dir);
        std::ofstream((std::filesystem::path(opt.out_dir) / "contract.json").string())
            << rep.to_json().dump(2) << "\n";
    }
    return rep;
}

// ---------------------------------------------------------------------------
// delta sweep

struct DeltaSweepRow {
    double delta = 0.0;
    double c6 = 0.0;
    double c7 = 0.0;
    bool equivalence_holds = false;  ///< C6 d^2 <= E <= C7 d^2 on every sample (C6 > 0 required)
    bool monotone_after_transient = false;
    double lambda_e = NAN;           ///< rate of sqrt(E) on the fit window
    double r_squared = NAN;
};

/// One run; E_delta = H_rel + delta * coupling is re-assembled per delta.
inline std::vector<DeltaSweepRow> sweep_delta(const ScenarioConfig& config, std::vector<double> deltas,
                                              const RunOptions& opt = {}) {
    ScenarioConfig quiet_cfg = config;
    RunOptions inner = opt;
    inner.out_dir.clear();
    const RunResult run = run_scenario(quiet_cfg, inner);
    const ScenarioSetup setup = prepare_scenario(config);
    if (deltas.empty())
        for (double f : {0.25, 0.5, 1.0, 2.0, 4.0}) deltas.push_back(f * setup.delta);

    std::vector<DeltaSweepRow> table;
    const double t_end = config.solver.t_end;
    for (double delta : deltas) {
        DeltaSweepRow row;
        row.delta = delta;
        row.c6 = setup.eq.c3 - delta * setup.coupling;
        row.c7 = setup.eq.c4 + delta * setup.coupling;
        std::vector<double> t, root;
        bool equiv = row.c6 > 0.0, mono = true, positive = true;
        double e0 = 0.0, prev = 0.0;
        for (std::size_t n = 0; n < run.rows.size(); ++n) {
            const auto& r = run.rows[n];
            const double e = r.h_rel + delta * r.coupling;
            const double d2 = r.dist_w * r.dist_w;
            if (n == 0) e0 = e;
            const double slack = 1e-12 * std::max(std::abs(e0), 1e-300);
            if (e < row.c6 * d2 - slack || e > row.c7 * d2 + slack) equiv = false;
            if (n > 0 && r.t >= 0.05 * t_end && e > prev + 1e-7 * std::abs(e0)) mono = false;
            prev = e;
            t.push_back(r.t);
            positive = positive && e > 0.0;
            root.push_back(e > 0.0 ? std::sqrt(e) : 0.0);
        }
        row.equivalence_holds = equiv;
        row.monotone_after_transient = mono;
        if (positive) {
            try {
                const auto fit = fit_decay_rate(t, root, config.fit_lo(), config.fit_hi());
                row.lambda_e = fit.lambda;
                row.r_squared = fit.r_squared;
            } catch (const DomainError&) {
            }
        }
        table.push_back(row);
    }
    if (!opt.out_dir.empty()) {
        std::filesystem::create_directories(opt.out_dir);
        std::ofstream out((std::filesystem::path(opt.out_dir) / "sweep_delta.csv").string(), std::ios::binary);
        out << "delta,C6,C7,equivalence,monotone,lambda_E,r_squared\n";
        for (const auto& r : table)
            out << format_double(r.delta) << "," << format_double(r.c6) << "," << format_double(r.c7) << ","
                << (r.equivalence_holds ? 1 : 0) << "," << (r.monotone_after_transient ? 1 : 0) << ","
                << format_double(r.lambda_e) << "," << format_double(r.r_squared) << "\n";
    }
    return table;
}

} // namespace qkfp
