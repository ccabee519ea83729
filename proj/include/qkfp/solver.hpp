#pragma once

// Time stepping for
//     d_t f + p d_x (f + k f^2) = d_p ( d_p f + p (f + k f^2) )
// on T^1 x [-p_max, p_max] by Strang splitting of a conservative transport
// step and a well-balanced collision step.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <utility>
#include <vector>

#include "qkfp/equilibria.hpp"
#include "qkfp/errors.hpp"
#include "qkfp/grid.hpp"

namespace qkfp {

struct SolverConfig {
    double dt = 5e-4;
    double t_end = 10.0;
    double cfl_transport = 0.9;
    double cfl_collision = 0.45;
    /// 1: local Lax-Friedrichs; 2: minmod MUSCL with SSP-RK2.
    int transport_order = 1;
    bool clamp_bounds = false;
    /// Collision only (spatially homogeneous equation).
    bool homogeneous = false;

    void validate() const {
        if (!(dt > 0.0)) throw DomainError("solver: dt must be positive");
        if (!(t_end >= 0.0)) throw DomainError("solver: t_end must be >= 0");
        if (!(cfl_transport > 0.0 && cfl_transport <= 1.0))
            throw DomainError("solver: cfl_transport must lie in (0, 1]");
        if (!(cfl_collision > 0.0 && cfl_collision <= 1.0))
            throw DomainError("solver: cfl_collision must lie in (0, 1]");
        if (transport_order != 1 && transport_order != 2)
            throw DomainError("solver: transport_order must be 1 or 2");
    }
};

/// Event counters accumulated across steps.
struct SolverStats {
    long floor_events = 0;
    long collision_substeps = 0;
    long transport_subcycled_rows = 0;
    long steps = 0;
};

inline constexpr double kPositivityFloor = 1e-300;

namespace detail {

inline constexpr double kHalfLogTwoPi = 0.91893853320467274178; // ln(2 pi) / 2

/// Interface mobility: logarithmic mean of g = f(1 + k f) at two neighbours.
inline double log_mean(double a, double b, double log_a, double log_b) {
    const double diff = b - a;
    if (std::abs(diff) <= 1e-8 * std::max(a, b)) return 0.5 * (a + b);
    return diff / (log_b - log_a);
}

[[noreturn]] inline void report_non_finite(const char* stage, int i, int j, double value) {
    std::ostringstream msg;
    msg << stage << ": non-finite value " << value << " at cell (x=" << i << ", p=" << j << ")";
    throw SolverFault(msg.str());
}

} // namespace detail

/// One explicit Euler step of the collision operator on every x-column.
/// Interface fluxes are u_{j+1/2} (s_{j+1} - s_j) / dp with
/// s = ln(f / ((1 + k f) M)), so any constant-beta profile is a fixed point.
inline PhaseField collision_step(const PhaseField& f, const ModelParams& params, double dt_sub,
                                 SolverStats* stats = nullptr) {
    const GridSpec& grid = f.grid();
    const int np = grid.np();
    const double dp = grid.dp();
    const double kappa = params.kappa;
    const double ratio = dt_sub / dp;

    PhaseField out(grid);
    std::vector<double> s(static_cast<std::size_t>(np));
    std::vector<double> g(static_cast<std::size_t>(np));
    std::vector<double> log_g(static_cast<std::size_t>(np));
    std::vector<double> flux(static_cast<std::size_t>(np) + 1, 0.0);

    for (int i = 0; i < grid.nx(); ++i) {
        auto col = f.row(i);
        for (int j = 0; j < np; ++j) {
            double v = col[j];
            if (!std::isfinite(v)) detail::report_non_finite("collision", i, j, v);
            if (v < kPositivityFloor) {
                v = kPositivityFloor;
                if (stats) ++stats->floor_events;
            }
            double one_plus = 1.0 + kappa * v;
            if (one_plus < kPositivityFloor) {
                one_plus = kPositivityFloor;
                if (stats) ++stats->floor_events;
            }
            const double p = grid.p_center(j);
            const double log_f = std::log(v);
            const double log_1k = std::log(one_plus);
            s[j] = log_f - log_1k + 0.5 * p * p + detail::kHalfLogTwoPi;
            g[j] = v * one_plus;
            log_g[j] = log_f + log_1k;
        }
        for (int j = 0; j + 1 < np; ++j) {
            const double u = detail::log_mean(g[j], g[j + 1], log_g[j], log_g[j + 1]);
            flux[j + 1] = u * (s[j + 1] - s[j]) / dp;
        }
        auto dst = out.row(i);
        for (int j = 0; j < np; ++j) dst[j] = col[j] + ratio * (flux[j + 1] - flux[j]);
    }
    return out;
}

/// Largest stable collision sub-step: cfl * dp^2 / (1 + 2|k| max f).
inline double collision_substep_limit(const PhaseField& f, const ModelParams& params, double cfl) {
    const double fmax = std::max(0.0, f.max_value());
    return cfl * f.grid().dp() * f.grid().dp() / (1.0 + 2.0 * std::abs(params.kappa) * fmax);
}

/// Collision over dt, sub-cycled to respect the parabolic CFL bound.
inline PhaseField collide(PhaseField f, const ModelParams& params, double dt, double cfl,
                          SolverStats* stats = nullptr) {
    const double limit = collision_substep_limit(f, params, cfl);
    const long n = std::max(1L, static_cast<long>(std::ceil(dt / limit * (1.0 - 1e-12))));
    const double dt_sub = dt / static_cast<double>(n);
    for (long k = 0; k < n; ++k) f = collision_step(f, params, dt_sub, stats);
    if (stats) stats->collision_substeps += n;
    return f;
}

namespace detail {

inline double minmod(double a, double b) {
    if (a * b <= 0.0) return 0.0;
    return std::abs(a) < std::abs(b) ? a : b;
}

/// Periodic LLF residual -(F_{i+1/2} - F_{i-1/2}) / dx for one momentum row.
/// `padded` holds the row with two ghost cells on each side.
inline void transport_residual(std::span<double> padded, double p, double kappa, double dx, int order,
                               std::span<double> rhs, std::vector<double>& flux) {
    const int n = static_cast<int>(rhs.size());
    double* u = padded.data() + 2;
    u[-2] = u[n - 2];
    u[-1] = u[n - 1];
    u[n] = u[0];
    u[n + 1] = u[1];
    flux.resize(static_cast<std::size_t>(n) + 1);
    const double ap = std::abs(p);
    for (int i = -1; i < n; ++i) {
        // Interface i+1/2.
        double left = u[i];
        double right = u[i + 1];
        if (order == 2) {
            left += 0.5 * minmod(u[i] - u[i - 1], u[i + 1] - u[i]);
            right -= 0.5 * minmod(u[i + 1] - u[i], u[i + 2] - u[i + 1]);
        }
        const double alpha = ap * std::max(std::abs(1.0 + 2.0 * kappa * left), std::abs(1.0 + 2.0 * kappa * right));
        const double q_sum = p * (left + kappa * left * left + right + kappa * right * right);
        flux[static_cast<std::size_t>(i + 1)] = 0.5 * q_sum - 0.5 * alpha * (right - left);
    }
    const double inv_dx = 1.0 / dx;
    for (int i = 0; i < n; ++i) rhs[i] = -(flux[i + 1] - flux[i]) * inv_dx;
}

} // namespace detail

/// Advances every momentum row of d_t f + d_x p(f + k f^2) = 0 by dt_sub,
/// sub-cycling rows whose CFL number would exceed cfl.
inline PhaseField transport_step(const PhaseField& f, const ModelParams& params, double dt_sub,
                                 int order = 1, double cfl = 0.9, SolverStats* stats = nullptr) {
    const GridSpec& grid = f.grid();
    const int nx = grid.nx();
    const double dx = grid.dx();
    const double kappa = params.kappa;
    const double cfl_limit = order == 2 ? 0.5 * cfl : cfl;

    PhaseField out(grid);
    std::vector<double> u(static_cast<std::size_t>(nx) + 4);
    std::vector<double> stage(static_cast<std::size_t>(nx) + 4);
    std::vector<double> rhs(static_cast<std::size_t>(nx));
    std::vector<double> flux;
    std::span<double> interior(u.data() + 2, static_cast<std::size_t>(nx));
    std::span<double> stage_interior(stage.data() + 2, static_cast<std::size_t>(nx));

    for (int j = 0; j < grid.np(); ++j) {
        const double p = grid.p_center(j);
        double umax = 0.0;
        for (int i = 0; i < nx; ++i) {
            interior[i] = f(i, j);
            umax = std::max(umax, std::abs(1.0 + 2.0 * kappa * interior[i]));
        }
        const double speed = std::abs(p) * umax;
        long n = 1;
        if (speed * dt_sub / dx > cfl_limit) {
            n = static_cast<long>(std::ceil(speed * dt_sub / (dx * cfl_limit)));
            if (stats) ++stats->transport_subcycled_rows;
        }
        const double h = dt_sub / static_cast<double>(n);
        for (long k = 0; k < n; ++k) {
            if (order == 1) {
                detail::transport_residual(u, p, kappa, dx, 1, rhs, flux);
                for (int i = 0; i < nx; ++i) interior[i] += h * rhs[i];
            } else {
                detail::transport_residual(u, p, kappa, dx, 2, rhs, flux);
                for (int i = 0; i < nx; ++i) stage_interior[i] = interior[i] + h * rhs[i];
                detail::transport_residual(stage, p, kappa, dx, 2, rhs, flux);
                for (int i = 0; i < nx; ++i)
                    interior[i] = 0.5 * interior[i] + 0.5 * (stage_interior[i] + h * rhs[i]);
            }
        }
        for (int i = 0; i < nx; ++i) {
            if (!std::isfinite(interior[i])) detail::report_non_finite("transport", i, j, interior[i]);
            out(i, j) = interior[i];
        }
    }
    return out;
}

/// Pointwise clamp into [profile(beta_minus), profile(beta_plus)].
inline void clamp_to_envelope(PhaseField& f, const ModelParams& params) {
    const GridSpec& grid = f.grid();
    for (int j = 0; j < grid.np(); ++j) {
        const double m = grid.maxwellian(j);
        const double lo = profile_from_maxwellian(params.beta_minus, params.kappa, m);
        const double hi = profile_from_maxwellian(params.beta_plus, params.kappa, m);
        for (int i = 0; i < grid.nx(); ++i) f(i, j) = std::clamp(f(i, j), lo, hi);
    }
}

/// One Strang step transport(dt/2) o collision(dt) o transport(dt/2), or a
/// pure collision step of length dt in homogeneous mode.
inline PhaseField step(const PhaseField& f, const ModelParams& params, const SolverConfig& config,
                       double dt, SolverStats* stats = nullptr) {
    PhaseField out = f;
    if (config.homogeneous) {
        out = collide(std::move(out), params, dt, config.cfl_collision, stats);
    } else {
        out = transport_step(out, params, 0.5 * dt, config.transport_order, config.cfl_transport, stats);
        out = collide(std::move(out), params, dt, config.cfl_collision, stats);
        out = transport_step(out, params, 0.5 * dt, config.transport_order, config.cfl_transport, stats);
    }
    if (config.clamp_bounds) clamp_to_envelope(out, params);
    if (stats) ++stats->steps;
    return out;
}

inline PhaseField step(const PhaseField& f, const ModelParams& params, const SolverConfig& config,
                       SolverStats* stats = nullptr) {
    return step(f, params, config, config.dt, stats);
}

/// Number of steps for [0, t_end]; the last one is shortened if dt does not divide t_end.
inline long step_count(const SolverConfig& config) {
    const double ratio = config.t_end / config.dt;
    const long rounded = std::lround(ratio);
    if (std::abs(ratio - static_cast<double>(rounded)) <= 1e-9 * std::max(1.0, ratio)) return rounded;
    return static_cast<long>(std::ceil(ratio));
}

/// Step sizes and times for [0, t_end]. When dt divides t_end every step is
/// exactly dt, so runs compose step for step.
struct StepSchedule {
    long steps = 0;
    double dt = 0.0;
    double t_end = 0.0;
    bool divides = true;

    explicit StepSchedule(const SolverConfig& config)
        : steps(step_count(config)), dt(config.dt), t_end(config.t_end),
          divides(std::abs(static_cast<double>(steps) * config.dt - config.t_end) <= 1e-9 * config.dt) {}

    double step_size(long k) const {
        return (k == steps && !divides) ? t_end - static_cast<double>(steps - 1) * dt : dt;
    }
    double time(long k) const { return k == steps ? t_end : static_cast<double>(k) * dt; }
};

/// Steps from f0 to t_end. The observer receives (t, field) at t = 0, after
/// every `sample_every` steps, and at t_end (each time at most once).
template <class Observer>
PhaseField evolve(const PhaseField& f0, const ModelParams& params, const SolverConfig& config,
                  Observer&& observer, long sample_every = 1, SolverStats* stats = nullptr) {
    config.validate();
    if (sample_every < 1) sample_every = 1;
    const StepSchedule schedule(config);
    PhaseField f = f0;
    observer(0.0, std::as_const(f));
    for (long k = 1; k <= schedule.steps; ++k) {
        f = step(f, params, config, schedule.step_size(k), stats);
        if (k % sample_every == 0 || k == schedule.steps) observer(schedule.time(k), std::as_const(f));
    }
    return f;
}

inline PhaseField evolve(const PhaseField& f0, const ModelParams& params, const SolverConfig& config,
                         SolverStats* stats = nullptr) {
    return evolve(f0, params, config, [](double, const PhaseField&) {}, step_count(config) + 1, stats);
}

} // namespace qkfp
