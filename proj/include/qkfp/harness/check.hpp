#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <utility>
#include <string>
#include <vector>

#include <boost/math/special_functions/zeta.hpp>
#include <nlohmann/json.hpp>

#include "qkfp/equilibria.hpp"
#include "qkfp/functionals.hpp"
#include "qkfp/grid.hpp"
#include "qkfp/harness/config.hpp"
#include "qkfp/harness/rng.hpp"
#include "qkfp/harness/scenario.hpp"
#include "qkfp/macroscopics.hpp"
#include "qkfp/solver.hpp"

namespace qkfp {

struct CheckEntry {
    std::string name;
    std::string module;
    bool passed = false;
    double value = 0.0;      ///< measured quantity
    double threshold = 0.0;  ///< what it is compared against
    std::string detail;
};

struct CheckReport {
    std::vector<CheckEntry> entries;

    bool passed() const {
        return std::all_of(entries.begin(), entries.end(), [](const CheckEntry& e) { return e.passed; });
    }
    const CheckEntry* find(const std::string& name) const {
        for (const auto& e : entries)
            if (e.name == name) return &e;
        return nullptr;
    }
    std::vector<std::string> failed() const {
        std::vector<std::string> out;
        for (const auto& e : entries)
            if (!e.passed) out.push_back(e.name);
        return out;
    }
    nlohmann::json to_json() const {
        nlohmann::json list = nlohmann::json::array();
        for (const auto& e : entries) {
            nlohmann::json j = {{"name", e.name}, {"module", e.module}, {"passed", e.passed}};
            j["value"] = std::isfinite(e.value) ? nlohmann::json(e.value) : nlohmann::json(format_double(e.value));
            j["threshold"] =
                std::isfinite(e.threshold) ? nlohmann::json(e.threshold) : nlohmann::json(format_double(e.threshold));
            if (!e.detail.empty()) j["detail"] = e.detail;
            list.push_back(j);
        }
        return {{"passed", passed()}, {"failed", failed()}, {"checks", list}};
    }
};

struct CheckOptions {
    std::uint64_t seed = 1;
    PoissonSolver poisson = poisson_solve;  ///< replaceable for fault injection
    std::optional<Snapshot> snapshot;       ///< extra checks on a stored field
    bool refinement_study = true;           ///< dissipation-identity order (three extra short runs)
    int random_fields = 20;
    int random_pairs = 100;
    int rr_fields = 200;
    RunOptions run;
};

// ---------------------------------------------------------------------------
// Seeded random fields

/// f(x, p) = profile(beta(x, p)) with beta uniform in [beta_minus, beta_plus]
/// per cell, drawn in row-major order.
inline PhaseField random_admissible_field(const GridSpec& grid, const ModelParams& params, Lcg64& rng) {
    PhaseField f(grid);
    for (int i = 0; i < grid.nx(); ++i)
        for (int j = 0; j < grid.np(); ++j)
            f(i, j) = profile_from_maxwellian(rng.uniform(params.beta_minus, params.beta_plus), params.kappa,
                                              grid.maxwellian(j));
    return f;
}

/// Same values as f, shuffled along x independently for each momentum cell,
/// so the partner has the same mass. The classical relative entropy is only
/// nonnegative (and sandwiched) between fields of equal mass.
inline PhaseField shuffled_partner(const PhaseField& f, Lcg64& rng) {
    PhaseField g = f;
    const int nx = f.nx();
    for (int j = 0; j < f.grid().np(); ++j)
        for (int i = nx - 1; i > 0; --i) {
            const int k = static_cast<int>(rng.uniform() * (i + 1));
            std::swap(g(i, j), g(k, j));
        }
    return g;
}

/// Pair for the sandwich: independent fields, or an equal-mass shuffle when kappa = 0.
inline std::pair<PhaseField, PhaseField> random_sandwich_pair(const GridSpec& grid, const ModelParams& params,
                                                              Lcg64& rng) {
    PhaseField a = random_admissible_field(grid, params, rng);
    PhaseField b = params.kappa == 0 ? shuffled_partner(a, rng) : random_admissible_field(grid, params, rng);
    return {std::move(a), std::move(b)};
}

/// Local equilibrium with beta(x) uniform in [beta_minus, beta_plus] per x-cell.
inline std::vector<double> random_beta_field(const GridSpec& grid, const ModelParams& params, Lcg64& rng) {
    std::vector<double> beta(static_cast<std::size_t>(grid.nx()));
    for (double& b : beta) b = rng.uniform(params.beta_minus, params.beta_plus);
    return beta;
}

/// Values uniform in [-1, 1] times M(p): signed, for norm axioms.
inline PhaseField random_signed_field(const GridSpec& grid, Lcg64& rng) {
    PhaseField f(grid);
    for (int i = 0; i < grid.nx(); ++i)
        for (int j = 0; j < grid.np(); ++j) f(i, j) = rng.uniform(-1.0, 1.0) * grid.maxwellian(j);
    return f;
}

// ---------------------------------------------------------------------------
// Dissipation identity

/// |(H(t*+dt) - H(t*)) / dt + (D(t*) + D(t*+dt)) / 2| after evolving to t*.
inline double dissipation_identity_error(const InitialCondition& ic, const ModelParams& params,
                                         const GridSpec& grid, SolverConfig solver, double t_star) {
    solver.t_end = t_star;
    const PhaseField f = evolve(initial_field(ic, grid, params), params, solver);
    const PhaseField g = step(f, params, solver);
    const double rate = (entropy(g, params) - entropy(f, params)) / solver.dt;
    return std::abs(rate + 0.5 * (dissipation(f, params) + dissipation(g, params)));
}

struct RefinementStudy {
    std::vector<double> errors;
    std::vector<double> orders;  ///< log2 of successive error ratios
    double min_order() const {
        return orders.empty() ? NAN : *std::min_element(orders.begin(), orders.end());
    }
};

/// Three levels, each halving dt and dp (and dx unless homogeneous).
inline RefinementStudy dissipation_identity_study(const InitialCondition& ic, const ModelParams& params,
                                                  const GridSpec& coarse, const SolverConfig& solver,
                                                  double t_star, bool refine_x = true) {
    RefinementStudy s;
    GridSpec grid = coarse;
    SolverConfig sc = solver;
    for (int level = 0; level < 3; ++level) {
        s.errors.push_back(dissipation_identity_error(ic, params, grid, sc, t_star));
        grid = GridSpec(refine_x ? 2 * grid.nx() : grid.nx(), 2 * grid.np(), grid.p_max());
        sc.dt *= 0.5;
    }
    for (std::size_t k = 1; k < s.errors.size(); ++k) s.orders.push_back(std::log2(s.errors[k - 1] / s.errors[k]));
    return s;
}

// ---------------------------------------------------------------------------

namespace detail {

class CheckRecorder {
public:
    explicit CheckRecorder(CheckReport& r) : report_(r) {}

    void add(std::string name, std::string module, bool passed, double value, double threshold,
             std::string detail = {}) {
        report_.entries.push_back({std::move(name), std::move(module), passed, value, threshold, std::move(detail)});
    }

    /// value <= threshold
    void at_most(std::string name, std::string module, double value, double threshold, std::string detail = {}) {
        add(std::move(name), std::move(module), value <= threshold, value, threshold, std::move(detail));
    }

    /// Records a failure instead of propagating an exception out of one check.
    template <class Fn>
    void guarded(const std::string& name, const std::string& module, Fn&& fn) {
        try {
            fn();
        } catch (const std::exception& e) {
            add(name, module, false, NAN, NAN, std::string("exception: ") + e.what());
        }
    }

private:
    CheckReport& report_;
};

inline double rel_diff(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

inline void check_equilibria(CheckRecorder& rec, const ScenarioConfig& cfg) {
    const GridSpec& grid = cfg.grid;
    const ModelParams& mp = cfg.model;
    const auto quad = grid.momentum_quadrature();

    rec.guarded("mass_of_beta_increasing", "equilibria", [&] {
        double worst = INFINITY;
        for (int kappa : {-1, 0, 1}) {
            const double hi = kappa == 1 ? boson_beta_limit(1) * (1.0 - 1e-3) : 4.0;
            const double lo = 0.05;
            double prev = mass_of_beta(lo, kappa, 1, quad);
            for (int k = 1; k < 100; ++k) {
                const double m = mass_of_beta(lo + (hi - lo) * k / 99.0, kappa, 1, quad);
                worst = std::min(worst, m - prev);
                prev = m;
            }
        }
        rec.add("mass_of_beta_increasing", "equilibria", worst > 0.0, worst, 0.0,
                "smallest increment over 100-point beta scans for kappa = -1, 0, 1");
    });

    rec.guarded("profile_increasing_in_beta", "equilibria", [&] {
        double worst = INFINITY;
        for (int j = 0; j < grid.np(); ++j) {
            const double m = grid.maxwellian(j);
            double prev = profile_from_maxwellian(mp.beta_minus, mp.kappa, m);
            for (int k = 1; k <= 20; ++k) {
                const double b = mp.beta_minus + (mp.beta_plus - mp.beta_minus) * k / 20.0;
                const double v = profile_from_maxwellian(b, mp.kappa, m);
                worst = std::min(worst, (v - prev) / std::max(v, 1e-300));
                prev = v;
            }
        }
        rec.add("profile_increasing_in_beta", "equilibria", worst > 0.0, worst, 0.0,
                "smallest relative increment on [beta_minus, beta_plus] at every grid p");
    });

    rec.guarded("profile_range", "equilibria", [&] {
        bool ok = true;
        double fermi_max = 0.0;
        for (double b = 0.1; b <= 20.0; b += 0.1)
            for (int j = 0; j < grid.np(); ++j) {
                const double v = profile_from_maxwellian(b, -1, grid.maxwellian(j));
                fermi_max = std::max(fermi_max, v);
                ok = ok && v >= 0.0 && v < 1.0;
            }
        const double limit = boson_beta_limit(1);
        for (double frac : {0.1, 0.5, 0.9, 0.999})
            for (int j = 0; j < grid.np(); ++j) {
                const double v = profile_from_maxwellian(frac * limit, 1, grid.maxwellian(j));
                ok = ok && std::isfinite(v) && v >= 0.0;
            }
        rec.add("profile_range", "equilibria", ok, fermi_max, 1.0,
                "fermion profiles in [0, 1), boson profiles finite and nonnegative below the beta limit");
    });

    rec.guarded("collision_flux_of_profile_vanishes", "equilibria", [&] {
        double worst = 0.0;
        for (double b : {mp.beta_minus, mp.beta_inf, mp.beta_plus})
            for (int j = 0; j < grid.np(); ++j) {
                const double p = grid.p_center(j), m = grid.maxwellian(j);
                const double a = 1.0 - mp.kappa * b * m;
                const double f = b * m / a;
                const double df = -p * b * m / (a * a);  // d/dp of beta M / (1 - k beta M)
                const double drift = p * (f + mp.kappa * f * f);
                const double scale = std::max({std::abs(df), std::abs(drift), 1e-300});
                worst = std::max(worst, std::abs(df + drift) / scale);
            }
        rec.at_most("collision_flux_of_profile_vanishes", "equilibria", worst, 1e-12);
    });

    rec.guarded("beta_mass_round_trip", "equilibria", [&] {
        double worst = 0.0;
        for (int k = 0; k <= 10; ++k) {
            const double b = mp.beta_minus + (mp.beta_plus - mp.beta_minus) * k / 10.0;
            worst = std::max(worst, rel_diff(beta_of_mass(mass_of_beta(b, mp.kappa, 1, quad), mp.kappa, 1, quad), b));
        }
        rec.at_most("beta_mass_round_trip", "equilibria", worst, 1e-10);
    });

    rec.guarded("critical_mass", "equilibria", [&] {
        const double expected = std::pow(kTwoPi, 1.5) * boost::math::zeta(1.5);
        const double err = rel_diff(critical_mass(3), expected);
        const bool low = std::isinf(critical_mass(1)) && std::isinf(critical_mass(2));
        rec.add("critical_mass", "equilibria", err <= 1e-8 && low, err, 1e-8,
                "d = 3 against (2 pi)^{3/2} zeta(3/2); d = 1, 2 must be infinite");
    });
}

inline void check_grid(CheckRecorder& rec, const ScenarioConfig& cfg, Lcg64& rng, int samples) {
    const GridSpec& grid = cfg.grid;
    rec.guarded("distance_norm_axioms", "grid", [&] {
        using Dist = double (*)(const PhaseField&, const PhaseField&);
        const Dist dists[] = {weighted_l2_distance, l1_distance, l2_distance};
        double worst = 0.0;
        bool ok = true;
        for (int n = 0; n < samples; ++n) {
            const PhaseField f = random_signed_field(grid, rng);
            const PhaseField g = random_signed_field(grid, rng);
            const PhaseField h = random_signed_field(grid, rng);
            const double a = rng.uniform(-3.0, 3.0);
            for (Dist d : dists) {
                const double fg = d(f, g);
                ok = ok && fg > 0.0 && d(f, f) == 0.0;
                worst = std::max(worst, rel_diff(d(a * f, a * g), std::abs(a) * fg));
                const double excess = fg - (d(f, h) + d(h, g));
                worst = std::max(worst, excess / fg);
            }
        }
        rec.add("distance_norm_axioms", "grid", ok && worst <= 1e-12, worst, 1e-12,
                "positivity, identity, homogeneity and triangle inequality on random fields");
    });

    rec.guarded("refinement_consistency", "grid", [&] {
        auto sampled = [](const GridSpec& g) { return integrate_phase(sample_field(g, [](double, double p) {
                                                   return maxwellian(p);
                                               })); };
        const GridSpec fine(grid.nx(), 2 * grid.np(), grid.p_max());
        const double diff = std::abs(sampled(fine) - sampled(grid));
        rec.at_most("refinement_consistency", "grid", diff, 1e-6, "integral of sampled M under np doubling");
    });
}

inline void check_macroscopics(CheckRecorder& rec, const ScenarioConfig& cfg, Lcg64& rng, const CheckOptions& opt,
                               const std::vector<std::vector<double>>& run_densities,
                               const std::vector<double>& rho_inf) {
    const GridSpec& grid = cfg.grid;
    const ModelParams& mp = cfg.model;

    rec.guarded("projection_idempotence", "macroscopics", [&] {
        double worst = 0.0;
        for (int n = 0; n < opt.random_fields; ++n) {
            const auto pf = project(random_admissible_field(grid, mp, rng), mp);
            worst = std::max(worst, weighted_l2_distance(project(pf.field, mp).field, pf.field));
        }
        rec.at_most("projection_idempotence", "macroscopics", worst, 1e-10);
    });

    rec.guarded("density_split", "macroscopics", [&] {
        double worst = 0.0;
        for (int n = 0; n < opt.random_fields; ++n) {
            const PhaseField f = random_admissible_field(grid, mp, rng);
            const auto rho = density(f);
            const auto split = density(f - project(f, mp).field);
            for (std::size_t i = 0; i < rho.size(); ++i) worst = std::max(worst, std::abs(split[i]) / rho[i]);
        }
        rec.at_most("density_split", "macroscopics", worst, 1e-12, "max |density(f - Pi f)| / density(f)");
    });

    rec.guarded("moment_identities", "macroscopics", [&] {
        double worst = 0.0;
        for (int n = 0; n < opt.random_fields; ++n)
            worst = std::max(worst,
                             moment_checks(project(random_admissible_field(grid, mp, rng), mp).field, mp).max_residual());
        rec.at_most("moment_identities", "macroscopics", worst, 1e-8);
    });

    rec.guarded("projection_density_sandwich", "macroscopics", [&] {
        const auto bounds = projection_density_constants(mp, grid);
        const PhaseField f_inf = global_equilibrium(grid, mp.kappa, mp.beta_inf);
        const auto rho_ref = density(f_inf);
        double lo = INFINITY, hi = 0.0;
        long violations = 0;
        for (int n = 0; n < opt.rr_fields; ++n) {
            const auto beta = random_beta_field(grid, mp, rng);
            const auto pf = project(local_equilibrium(grid, mp.kappa, beta), mp);
            const auto rho = density(pf.field);
            for (int i = 0; i < grid.nx(); ++i) {
                if (std::abs(pf.beta[i] - mp.beta_inf) < 1e-6 * mp.beta_inf) continue;
                const double dr = rho[i] - rho_ref[i];
                for (int j = 0; j < grid.np(); ++j) {
                    const double diff = pf.field(i, j) - f_inf(i, j);
                    if (diff == 0.0) continue;
                    const double m = grid.maxwellian(j);
                    const double ratio = dr * dr * m * m / (diff * diff);
                    lo = std::min(lo, ratio);
                    hi = std::max(hi, ratio);
                    if (ratio < bounds.min * (1.0 - 1e-6) || ratio > bounds.max * (1.0 + 1e-6)) ++violations;
                }
            }
        }
        rec.add("projection_density_sandwich", "macroscopics", violations == 0 && bounds.min > 0.0,
                static_cast<double>(violations), 0.0,
                "ratio range [" + format_double(lo) + ", " + format_double(hi) + "] within scanned [" +
                    format_double(bounds.min) + ", " + format_double(bounds.max) + "]");
    });

    rec.guarded("projection_beta_within_bounds", "macroscopics", [&] {
        double worst = 0.0;
        for (int n = 0; n < opt.random_fields; ++n) {
            const auto pf = project(random_admissible_field(grid, mp, rng), mp);
            for (double b : pf.beta)
                worst = std::max({worst, (mp.beta_minus - b) / mp.beta_minus, (b - mp.beta_plus) / mp.beta_plus});
        }
        rec.at_most("projection_beta_within_bounds", "macroscopics", worst, 1e-12,
                    "relative excursion of beta(x) outside [beta_minus, beta_plus]");
    });

    rec.guarded("poisson_single_mode", "macroscopics", [&] {
        const int n = grid.nx();
        double worst = 0.0;
        for (int k = 1; k < n / 2; k = 2 * k + 1) {
            std::vector<double> rhs(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i) rhs[i] = std::cos(kTwoPi * k * grid.x_center(i));
            const auto sol = opt.poisson(rhs);
            const double w = kTwoPi * k;
            for (int i = 0; i < n; ++i) {
                const double x = grid.x_center(i);
                worst = std::max(worst, std::abs(sol.phi[i] - std::cos(w * x) / (w * w)));
                worst = std::max(worst, std::abs(sol.grad_phi[i] + std::sin(w * x) / w));
            }
        }
        rec.at_most("poisson_single_mode", "macroscopics", worst, 1e-12, "phi = cos(2 pi k x) / (2 pi k)^2");
    });

    rec.guarded("poisson_residual", "macroscopics", [&] {
        double worst = 0.0;
        for (const auto& rho : run_densities) {
            std::vector<double> rhs(rho);
            for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] -= rho_inf[i];
            const auto sol = opt.poisson(rhs);
            worst = std::max(worst, poisson_residual(sol.phi, rhs));
        }
        rec.at_most("poisson_residual", "macroscopics", worst, 1e-8,
                    "spectral residual of -phi'' = rho - rho_inf relative to ||rho - rho_inf|| on run densities");
    });
}

} // namespace detail

/// Runs every module invariant on the configured scenario plus seeded random
/// fields. Exceptions inside a check mark that check failed; config and
/// solver faults in the main run propagate.
inline CheckReport check_suite(const ScenarioConfig& cfg, const CheckOptions& opt = {}) {
    CheckReport report;
    detail::CheckRecorder rec(report);
    Lcg64 rng(opt.seed);
    const GridSpec& grid = cfg.grid;
    const ModelParams& mp = cfg.model;

    detail::check_equilibria(rec, cfg);
    detail::check_grid(rec, cfg, rng, opt.random_fields);

    // scenario trajectory: per-step entropy plus sampled diagnostics
    const ScenarioSetup setup = prepare_scenario(cfg);
    DiagnosticsBuilder diag(setup.params, setup.f_inf, setup.delta);
    std::vector<DiagnosticsRow> rows;
    std::vector<std::vector<double>> densities;
    const long every = cfg.sample_every();
    const StepSchedule schedule(cfg.solver);
    SolverStats stats;
    PhaseField f = setup.f0;
    const double run_mass = integrate_phase(f);
    double h_prev = relative_entropy(f, setup.f_inf, setup.params);
    const double h0 = h_prev;
    double worst_rise = -INFINITY, pi_integral = 0.0;
    std::vector<double> warm;
    rows.push_back(diag(0.0, f, 0));
    densities.push_back(density(f));
    for (long k = 1; k <= schedule.steps; ++k) {
        const double dt = schedule.step_size(k);
        auto pf = project(f, setup.params, warm);
        warm = std::move(pf.beta);
        const double gap = weighted_l2_distance(f, pf.field);
        f = step(f, setup.params, cfg.solver, dt, &stats);
        const double h = relative_entropy(f, setup.f_inf, setup.params);
        worst_rise = std::max(worst_rise, entropy_rise(h_prev, h, run_mass));
        pi_integral += gap * gap * dt;
        h_prev = h;
        if (k % every == 0 || k == schedule.steps) {
            rows.push_back(diag(schedule.time(k), f, stats.floor_events));
            densities.push_back(density(f));
        }
    }

    detail::check_macroscopics(rec, cfg, rng, opt, densities, density(setup.f_inf));

    // solver
    {
        const double mass0 = rows.front().mass;
        double drift = 0.0;
        for (const auto& r : rows) drift = std::max(drift, std::abs(r.mass - mass0));
        rec.at_most("mass_conservation", "solver", drift / mass0, 1e-10, "max |mass(t) - mass(0)| / mass(0)");

        double bound = 0.0;
        for (const auto& r : rows) bound = std::max(bound, r.bound_violation);
        rec.at_most("envelope_preserved", "solver", bound, 5.0 * (grid.dx() + grid.dp() * grid.dp()),
                    "max excess over the [beta_minus, beta_plus] profiles");

        rec.guarded("well_balanced_collision", "solver", [&] {
            const auto beta = random_beta_field(grid, mp, rng);
            const PhaseField eq = local_equilibrium(grid, mp.kappa, beta);
            const PhaseField out = collision_step(eq, mp, cfg.solver.dt);
            double worst = 0.0;
            for (std::size_t n = 0; n < grid.size(); ++n)
                worst = std::max(worst, std::abs(out.values()[n] - eq.values()[n]) / eq.values()[n]);
            rec.at_most("well_balanced_collision", "solver", worst, 1e-12,
                        "collision step on a local equilibrium, max relative change");
        });
    }

    // functionals
    {
        rec.at_most("relative_entropy_nonincreasing", "functionals", worst_rise, 1e-8,
                    "largest per-step rise of H_rel relative to |H_rel| (rises below 64 ulp x mass ignored)");
        const double decrement = h0 - h_prev;
        if (pi_integral > 1e-12)
            rec.add("relative_entropy_strict_decrease", "functionals", decrement > 0.0, decrement, 0.0,
                    "integral of ||f - Pi f||^2 dt = " + format_double(pi_integral));
        else
            rec.add("relative_entropy_strict_decrease", "functionals", true, decrement, 0.0,
                    "not applicable: f stays at a local equilibrium");

        double d_min = INFINITY, tri = -INFINITY, eq_worst = -INFINITY, e_rise = -INFINITY;
        const double e0 = rows.front().e;
        const double c6 = setup.c6(), c7 = setup.c7();
        for (std::size_t n = 0; n < rows.size(); ++n) {
            const auto& r = rows[n];
            d_min = std::min(d_min, r.dissipation);
            const double d2 = r.dist_w * r.dist_w;
            tri = std::max(tri, 0.5 * d2 - (r.dist_pi * r.dist_pi + r.dist_macro * r.dist_macro));
            if (d2 > 0.0) eq_worst = std::max({eq_worst, (c6 * d2 - r.e) / d2, (r.e - c7 * d2) / d2});
            if (n > 0 && r.t >= 0.05 * cfg.solver.t_end) e_rise = std::max(e_rise, r.e - rows[n - 1].e);
        }
        rec.add("dissipation_nonnegative", "functionals", d_min >= 0.0, d_min, 0.0);
        rec.at_most("triangle_decomposition", "functionals", tri, 1e-14,
                    "max of 1/2 ||f - f_inf||^2 - ||f - Pi f||^2 - ||Pi f - f_inf||^2");
        if (eq_worst == -INFINITY) eq_worst = 0.0;
        rec.add("modified_entropy_equivalence", "functionals", c6 > 0.0 && eq_worst <= 1e-12, eq_worst, 1e-12,
                "C6 = " + format_double(c6) + ", C7 = " + format_double(c7) + ", delta = " +
                    format_double(setup.delta));
        if (e_rise == -INFINITY) e_rise = 0.0;
        rec.at_most("modified_entropy_monotone", "functionals", e_rise, 1e-7 * std::abs(e0),
                    "largest rise of E between samples after the first 5% of the run");

        rec.guarded("relative_entropy_sandwich", "functionals", [&] {
            const auto c = equivalence_constants(mp, grid);
            long violations = 0;
            for (int n = 0; n < opt.random_pairs; ++n) {
                const auto [a, b] = random_sandwich_pair(grid, mp, rng);
                const double h = relative_entropy(a, b, mp);
                const double d2 = std::pow(weighted_l2_distance(a, b), 2);
                if (h < c.c3 * d2 * (1.0 - 1e-12) || h > c.c4 * d2 * (1.0 + 1e-12)) ++violations;
            }
            rec.add("relative_entropy_sandwich", "functionals", violations == 0, static_cast<double>(violations), 0.0,
                    "C3 = " + format_double(c.c3) + ", C4 = " + format_double(c.c4));
        });

        if (opt.refinement_study) {
            rec.guarded("dissipation_identity_order", "functionals", [&] {
                GridSpec coarse(grid.nx() / 2, grid.np() / 2, grid.p_max());
                SolverConfig sc = cfg.solver;
                sc.dt *= 2.0;
                const double t_star = std::min(0.5, 0.5 * cfg.solver.t_end);
                const auto study = dissipation_identity_study(cfg.initial, mp, coarse, sc, t_star,
                                                              !cfg.solver.homogeneous);
                std::string detail = "errors";
                for (double e : study.errors) detail += " " + format_double(e);
                // already at the fixed point: nothing to converge
                if (study.errors.front() < 1e-13) {
                    rec.add("dissipation_identity_order", "functionals", true, study.errors.front(), 1.0,
                            "not applicable: " + detail);
                    return;
                }
                rec.add("dissipation_identity_order", "functionals", study.min_order() >= 1.0, study.min_order(), 1.0,
                        detail);
            });
        }
    }

    // classical reduction
    if (mp.kappa == 0) {
        rec.guarded("classical_relative_entropy", "functionals", [&] {
            double worst = 0.0;
            for (int n = 0; n < 5; ++n) {
                const PhaseField a = random_admissible_field(grid, mp, rng);
                const PhaseField b = random_admissible_field(grid, mp, rng);
                double kl = 0.0;
                for (std::size_t k = 0; k < grid.size(); ++k) {
                    const double u = a.values()[k], v = b.values()[k];
                    kl += u * std::log(u / v);
                }
                kl *= grid.cell_volume();
                worst = std::max(worst, detail::rel_diff(relative_entropy(a, b, mp), kl));
            }
            rec.at_most("classical_relative_entropy", "functionals", worst, 1e-10,
                        "H[f|g] against int f ln(f/g) - f + g");
        });
        rec.guarded("classical_equivalence_constants", "functionals", [&] {
            const auto c = equivalence_constants(mp, grid);
            const double err =
                std::max(detail::rel_diff(c.c3, 0.5 / mp.beta_plus), detail::rel_diff(c.c4, 0.5 / mp.beta_minus));
            rec.at_most("classical_equivalence_constants", "functionals", err, 1e-12,
                        "C3 = 1/(2 beta_plus), C4 = 1/(2 beta_minus)");
        });
        rec.guarded("classical_projection", "macroscopics", [&] {
            const PhaseField a = random_admissible_field(grid, mp, rng);
            const auto pf = project(a, mp);
            const auto rho = density(a);
            double mass_m = 0.0;
            for (double m : grid.maxwellian_samples()) mass_m += m;
            mass_m *= grid.dp();
            double worst = 0.0;
            for (int i = 0; i < grid.nx(); ++i) worst = std::max(worst, detail::rel_diff(pf.beta[i], rho[i] / mass_m));
            rec.at_most("classical_projection", "macroscopics", worst, 1e-13, "beta(x) = rho(x) / int M dp");
        });
    }

    if (opt.snapshot) {
        const PhaseField& s = opt.snapshot->field;
        rec.add("snapshot_finite", "grid", s.all_finite(), s.all_finite() ? 0.0 : 1.0, 0.0);
        rec.add("snapshot_nonnegative", "grid", s.min_value() >= 0.0, s.min_value(), 0.0);
        rec.at_most("snapshot_within_envelope", "solver", envelope_excess(s, mp),
                    5.0 * (s.grid().dx() + s.grid().dp() * s.grid().dp()));
        rec.guarded("snapshot_moment_identities", "macroscopics", [&] {
            const auto pf = project(s, mp);
            rec.at_most("snapshot_moment_identities", "macroscopics", moment_checks(pf.field, mp).max_residual(), 1e-8);
            rec.at_most("snapshot_projection_idempotence", "macroscopics",
                        weighted_l2_distance(project(pf.field, mp).field, pf.field), 1e-10);
        });
    }

    return report;
}

} // namespace qkfp
