#pragma once

// Scalar functionals along solutions: entropy, relative entropy, entropy
// dissipation, the modified entropy E = H[f|f_inf] + delta int phi' j dx,
// the constants that make them equivalent to the weighted L2 distance,
// and the exponential decay-rate fit.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "qkfp/equilibria.hpp"
#include "qkfp/errors.hpp"
#include "qkfp/grid.hpp"
#include "qkfp/macroscopics.hpp"
#include "qkfp/scan.hpp"

namespace qkfp {

inline constexpr double kLogClip = 1e-300;
/// Fermion samples may exceed 1 by this much before entropy evaluation refuses them.
inline constexpr double kFermiSlack = 1e-10;

namespace detail {

/// x ln x with 0 ln 0 = 0 and the argument of ln clipped at kLogClip.
inline double xlogx(double x) { return x > 0.0 ? x * std::log(std::max(x, kLogClip)) : 0.0; }

inline void check_admissible(double v, int kappa, const char* who) {
    if (!std::isfinite(v)) throw DomainError(std::string(who) + ": non-finite sample");
    if (kappa == -1 && v > 1.0 + kFermiSlack)
        throw DomainError(std::string(who) + ": fermion sample exceeds 1");
}

} // namespace detail

/// H[f] = int int |p|^2/2 f + f ln f - k (1 + k f) ln(1 + k f) dp dx
inline double entropy(const PhaseField& f, const ModelParams& params) {
    const GridSpec& grid = f.grid();
    const double kappa = params.kappa;
    double total = 0.0;
    for (int i = 0; i < grid.nx(); ++i) {
        auto r = f.row(i);
        double row_sum = 0.0;
        for (int j = 0; j < grid.np(); ++j) {
            const double v = r[j];
            detail::check_admissible(v, params.kappa, "entropy");
            const double p = grid.p_center(j);
            double h = 0.5 * p * p * v + detail::xlogx(v);
            if (kappa != 0.0) h -= kappa * detail::xlogx(1.0 + kappa * v);
            row_sum += h;
        }
        total += row_sum;
    }
    return total * grid.cell_volume();
}

/// H[f|g] = int int f ln(f/g) - k (1 + k f) ln((1 + k f)/(1 + k g)) dp dx
inline double relative_entropy(const PhaseField& f, const PhaseField& g, const ModelParams& params) {
    f.require_same_grid(g);
    const GridSpec& grid = f.grid();
    const double kappa = params.kappa;
    double total = 0.0;
    for (int i = 0; i < grid.nx(); ++i) {
        auto a = f.row(i);
        auto b = g.row(i);
        double row_sum = 0.0;
        for (int j = 0; j < grid.np(); ++j) {
            const double fv = a[j];
            const double gv = b[j];
            detail::check_admissible(fv, params.kappa, "relative_entropy");
            detail::check_admissible(gv, params.kappa, "relative_entropy");
            if (fv < 0.0 || gv < 0.0) throw DomainError("relative_entropy: negative sample");
            double h = 0.0;
            if (fv > 0.0) {
                if (!(gv > 0.0)) throw DomainError("relative_entropy: g vanishes where f > 0");
                h = fv * std::log1p((fv - gv) / gv);
            }
            if (kappa != 0.0) {
                const double one_f = std::max(1.0 + kappa * fv, 0.0);
                const double one_g = std::max(1.0 + kappa * gv, kLogClip);
                if (one_f > 0.0) h -= kappa * one_f * std::log1p(kappa * (fv - gv) / one_g);
            }
            row_sum += h;
        }
        total += row_sum;
    }
    return total * grid.cell_volume();
}

/// D[f] = int int (f + k f^2) |d_p s|^2 dp dx with s = ln(f / (M (1 + k f))),
/// d_p by centered differences (one-sided at +-p_max).
inline double dissipation(const PhaseField& f, const ModelParams& params) {
    const GridSpec& grid = f.grid();
    const int np = grid.np();
    const double kappa = params.kappa;
    const double dp = grid.dp();
    std::vector<double> s(static_cast<std::size_t>(np)), g(static_cast<std::size_t>(np));
    double total = 0.0;
    for (int i = 0; i < grid.nx(); ++i) {
        auto r = f.row(i);
        for (int j = 0; j < np; ++j) {
            const double v = std::max(r[j], kLogClip);
            const double one = std::max(1.0 + kappa * v, kLogClip);
            const double p = grid.p_center(j);
            s[j] = std::log(v) - std::log(one) + 0.5 * p * p;
            g[j] = v * one;
        }
        double row_sum = 0.0;
        for (int j = 0; j < np; ++j) {
            double ds;
            if (j == 0)
                ds = (s[1] - s[0]) / dp;
            else if (j == np - 1)
                ds = (s[np - 1] - s[np - 2]) / dp;
            else
                ds = (s[j + 1] - s[j - 1]) / (2.0 * dp);
            row_sum += g[j] * ds * ds;
        }
        total += row_sum;
    }
    return total * grid.cell_volume();
}

struct EquivalenceConstants {
    double c3 = 0.0;  ///< lower: C3 ||f - g||^2 <= H[f|g]
    double c4 = 0.0;  ///< upper: H[f|g] <= C4 ||f - g||^2
};

/// Scans 2 xi (1 + k xi) / M = 2 beta / (1 - k beta M)^2 over beta in
/// [beta_minus, beta_plus] and every grid momentum; C3 = 1/max, C4 = 1/min.
inline EquivalenceConstants equivalence_constants(const ModelParams& params, const GridSpec& grid) {
    const double k = params.kappa;
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    for (double m : grid.maxwellian_samples()) {
        auto ratio = [&](double beta) {
            const double a = 1.0 - k * beta * m;
            return 2.0 * beta / (a * a);
        };
        const auto r = scan_extrema(ratio, params.beta_minus, params.beta_plus);
        lo = std::min(lo, r.min);
        hi = std::max(hi, r.max);
    }
    return {1.0 / hi, 1.0 / lo};
}

/// C with |int phi' j dx| <= C ||f - f_inf||^2 on this grid: the Poincare
/// bound ||phi'|| <= ||rho - rho_inf|| / (2 pi) combined with the discrete
/// Cauchy-Schwarz bounds ||rho - rho_inf||^2 <= (sum M dp) ||f - f_inf||^2
/// and ||j||^2 <= (sum p^2 M dp) ||f - f_inf||^2.
inline double coupling_bound(const GridSpec& grid) {
    double m0 = 0.0, m2 = 0.0;
    for (int j = 0; j < grid.np(); ++j) {
        const double p = grid.p_center(j);
        m0 += grid.maxwellian(j);
        m2 += p * p * grid.maxwellian(j);
    }
    return std::sqrt(m0 * grid.dp() * m2 * grid.dp()) / kTwoPi;
}

/// delta = C3 / (2 C_coupling), so that C6 = C3 - delta C_coupling = C3 / 2.
inline double delta_heuristic(const ModelParams& params, const GridSpec& grid) {
    return 0.5 * equivalence_constants(params, grid).c3 / coupling_bound(grid);
}

struct ModifiedEntropy {
    double value = 0.0;            ///< E
    double relative_entropy = 0.0; ///< H[f|f_inf]
    double coupling = 0.0;         ///< int phi' j dx (without delta)
    double removed_mean = 0.0;     ///< mean of rho - rho_inf removed before the Poisson solve
};

using PoissonSolver = std::function<PoissonSolution(std::span<const double>)>;

inline ModifiedEntropy modified_entropy(const PhaseField& f, const PhaseField& f_inf, const ModelParams& params,
                                        double delta, const PoissonSolver& poisson = poisson_solve) {
    ModifiedEntropy e;
    e.relative_entropy = relative_entropy(f, f_inf, params);
    auto rho = density(f);
    const auto rho_inf = density(f_inf);
    for (std::size_t i = 0; i < rho.size(); ++i) rho[i] -= rho_inf[i];
    const auto sol = poisson(rho);
    const auto j = macro_flux(f);
    double sum = 0.0;
    for (std::size_t i = 0; i < j.size(); ++i) sum += sol.grad_phi[i] * j[i];
    e.coupling = sum * f.grid().dx();
    e.removed_mean = sol.removed_mean;
    e.value = e.relative_entropy + delta * e.coupling;
    return e;
}

// ---------------------------------------------------------------------------
// Exponential decay fit

struct DecayFit {
    double lambda = 0.0;
    double c = 1.0;
    double r_squared = 0.0;
    double t_lo = 0.0;
    double t_hi = 0.0;
};

/// Least-squares line through (t, ln d) on [t_lo, t_hi]: slope -lambda,
/// c = exp(intercept) / d(0) with d(0) the first sample of the series.
inline DecayFit fit_decay_rate(std::span<const double> t, std::span<const double> dist, double t_lo,
                               double t_hi) {
    if (t.size() != dist.size()) throw DomainError("fit_decay_rate: series length mismatch");
    if (t.size() < 10) throw DomainError("fit_decay_rate: need at least 10 samples");
    std::vector<double> xs, ys;
    for (std::size_t k = 0; k < t.size(); ++k) {
        if (t[k] < t_lo || t[k] > t_hi) continue;
        if (!(dist[k] > 0.0)) throw DomainError("fit_decay_rate: non-positive distance in fit window");
        xs.push_back(t[k]);
        ys.push_back(std::log(dist[k]));
    }
    if (xs.size() < 2) throw DomainError("fit_decay_rate: fewer than two samples in the window");
    if (!(dist[0] > 0.0)) throw DomainError("fit_decay_rate: initial distance must be positive");

    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) mx += xs[k], my += ys[k];
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        sxx += (xs[k] - mx) * (xs[k] - mx);
        sxy += (xs[k] - mx) * (ys[k] - my);
        syy += (ys[k] - my) * (ys[k] - my);
    }
    const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
    const double intercept = my - slope * mx;
    double ss_res = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const double r = ys[k] - (intercept + slope * xs[k]);
        ss_res += r * r;
    }
    DecayFit fit;
    fit.lambda = -slope;
    fit.c = std::exp(intercept) / dist[0];
    fit.r_squared = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 1.0;
    fit.t_lo = xs.front();
    fit.t_hi = xs.back();
    return fit;
}

/// Default window: drop the first `drop_fraction` of the samples.
inline DecayFit fit_decay_rate(std::span<const double> t, std::span<const double> dist,
                               double drop_fraction = 0.2) {
    if (t.empty()) throw DomainError("fit_decay_rate: empty series");
    const std::size_t first = static_cast<std::size_t>(std::floor(drop_fraction * static_cast<double>(t.size())));
    if (first >= t.size()) throw DomainError("fit_decay_rate: window is empty");
    return fit_decay_rate(t, dist, t[first], t.back());
}

// ---------------------------------------------------------------------------
// Diagnostics rows

struct DiagnosticsRow {
    double t = 0.0;
    double mass = 0.0;
    double h_abs = 0.0;
    double h_rel = 0.0;
    double h_rel_pi = 0.0;
    double dissipation = 0.0;
    double e = 0.0;
    double coupling = 0.0;
    double dist_w = 0.0;
    double dist_pi = 0.0;
    double dist_macro = 0.0;
    std::optional<double> l1_pair;
    long floor_events = 0;
    double bound_violation = 0.0;
};

/// Largest excess of f over the [profile(beta_minus), profile(beta_plus)] envelope.
inline double envelope_excess(const PhaseField& f, const ModelParams& params) {
    const GridSpec& grid = f.grid();
    double worst = 0.0;
    for (int j = 0; j < grid.np(); ++j) {
        const double m = grid.maxwellian(j);
        const double lo = profile_from_maxwellian(params.beta_minus, params.kappa, m);
        const double hi = profile_from_maxwellian(params.beta_plus, params.kappa, m);
        for (int i = 0; i < grid.nx(); ++i) {
            const double v = f(i, j);
            worst = std::max({worst, v - hi, lo - v});
        }
    }
    return worst;
}

/// Computes diagnostics rows against a fixed global equilibrium; keeps the
/// previous projection betas as a warm start.
class DiagnosticsBuilder {
public:
    DiagnosticsBuilder(ModelParams params, PhaseField f_inf, double delta)
        : params_(std::move(params)), f_inf_(std::move(f_inf)), delta_(delta) {}

    DiagnosticsRow operator()(double t, const PhaseField& f, long floor_events = 0,
                              const PhaseField* companion = nullptr) {
        DiagnosticsRow row;
        row.t = t;
        row.mass = integrate_phase(f);
        row.h_abs = entropy(f, params_);
        const auto proj = project(f, params_, warm_);
        warm_ = proj.beta;
        const auto me = modified_entropy(f, f_inf_, params_, delta_);
        row.h_rel = me.relative_entropy;
        row.e = me.value;
        row.coupling = me.coupling;
        row.h_rel_pi = relative_entropy(f, proj.field, params_);
        row.dissipation = dissipation(f, params_);
        row.dist_w = weighted_l2_distance(f, f_inf_);
        row.dist_pi = weighted_l2_distance(f, proj.field);
        row.dist_macro = weighted_l2_distance(proj.field, f_inf_);
        if (companion) row.l1_pair = l1_distance(f, *companion);
        row.floor_events = floor_events;
        row.bound_violation = envelope_excess(f, params_);
        return row;
    }

    const PhaseField& equilibrium() const { return f_inf_; }
    double delta() const { return delta_; }

private:
    ModelParams params_;
    PhaseField f_inf_;
    double delta_;
    std::vector<double> warm_;
};

} // namespace qkfp
