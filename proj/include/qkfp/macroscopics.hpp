#pragma once

// Macroscopic moments, the nonlinear projection onto local equilibria, its
// moment identities, and the spectral Poisson solve on the unit torus.

#include <cmath>
#include <complex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "qkfp/equilibria.hpp"
#include "qkfp/errors.hpp"
#include "qkfp/grid.hpp"
#include "qkfp/scan.hpp"

namespace qkfp {

/// rho(x) = int f dp
inline std::vector<double> density(const PhaseField& f) {
    std::vector<double> rho(static_cast<std::size_t>(f.nx()));
    const double dp = f.grid().dp();
    for (int i = 0; i < f.nx(); ++i) {
        double sum = 0.0;
        for (double v : f.row(i)) sum += v;
        rho[i] = sum * dp;
    }
    return rho;
}

/// j(x) = int p f dp
inline std::vector<double> macro_flux(const PhaseField& f) {
    const GridSpec& grid = f.grid();
    std::vector<double> j(static_cast<std::size_t>(f.nx()));
    for (int i = 0; i < f.nx(); ++i) {
        auto r = f.row(i);
        double sum = 0.0;
        for (int k = 0; k < grid.np(); ++k) sum += grid.p_center(k) * r[k];
        j[i] = sum * grid.dp();
    }
    return j;
}

namespace detail {

/// Grid mass of the profile with parameter beta, summed like density().
inline double column_mass(double beta, int kappa, const GridSpec& grid) {
    double sum = 0.0;
    for (double m : grid.maxwellian_samples()) sum += profile_from_maxwellian(beta, kappa, m);
    return sum * grid.dp();
}

inline std::optional<double> bisect_beta(double rho, int kappa, const GridSpec& grid, double lo, double hi) {
    auto residual = [&](double b) { return column_mass(b, kappa, grid) - rho; };
    if (residual(lo) > 0.0 || residual(hi) < 0.0) return std::nullopt;
    std::uintmax_t iterations = kBetaMaxIterations;
    const auto [a, b] = boost::math::tools::bisect(
        residual, lo, hi, boost::math::tools::eps_tolerance<double>(52), iterations);
    return 0.5 * (a + b);
}

} // namespace detail

struct Projection {
    PhaseField field;          ///< Pi f
    std::vector<double> beta;  ///< beta(x) of the local equilibrium
};

/// Pi f: per x-cell, the profile beta(x)M/(1 - kappa beta(x)M) with the same
/// grid density as f. `warm_start` (previous betas) narrows the bisection
/// bracket to +-10% around the old value, falling back to the full bracket.
inline Projection project(const PhaseField& f, const ModelParams& params,
                          std::span<const double> warm_start = {}) {
    const GridSpec& grid = f.grid();
    const int kappa = params.kappa;
    const auto rho = density(f);
    const auto quad = grid.momentum_quadrature();

    Projection out{PhaseField(grid), std::vector<double>(static_cast<std::size_t>(grid.nx()))};
    for (int i = 0; i < grid.nx(); ++i) {
        if (!(rho[i] > 0.0))
            throw DomainError("project: non-positive density at x-cell " + std::to_string(i));
        std::optional<double> beta;
        if (kappa == 0) {
            beta = rho[i] / detail::column_mass(1.0, 0, grid);
        } else if (static_cast<int>(warm_start.size()) == grid.nx() && warm_start[i] > 0.0) {
            double hi = 1.1 * warm_start[i];
            if (kappa == 1) hi = std::min(hi, boson_beta_limit(1) * (1.0 - 1e-9));
            beta = detail::bisect_beta(rho[i], kappa, grid, 0.9 * warm_start[i], hi);
        }
        if (!beta) {
            try {
                beta = beta_of_mass(rho[i], kappa, 1, quad);
            } catch (const NoEquilibriumError& e) {
                throw NoEquilibriumError("project: supercritical column density at x-cell " +
                                         std::to_string(i) + ": " + e.what());
            }
        }
        out.beta[i] = *beta;
        auto dst = out.field.row(i);
        for (int j = 0; j < grid.np(); ++j)
            dst[j] = profile_from_maxwellian(*beta, kappa, grid.maxwellian(j));
    }
    return out;
}

struct MomentReport {
    double first_moment = 0.0;       ///< max_x |int p Pi f dp|
    double flux_moment = 0.0;        ///< max_x |int p (Pi f + k Pi f^2) dp|
    double second_moment = 0.0;      ///< max_x |int p^2 (Pi f + k Pi f^2) dp - rho|

    double max_residual() const { return std::max({first_moment, flux_moment, second_moment}); }
};

/// Residuals of the three moment identities satisfied by any local equilibrium.
inline MomentReport moment_checks(const PhaseField& projected, const ModelParams& params) {
    const GridSpec& grid = projected.grid();
    const double kappa = params.kappa;
    const double dp = grid.dp();
    MomentReport report;
    for (int i = 0; i < grid.nx(); ++i) {
        auto r = projected.row(i);
        double m0 = 0.0, m1 = 0.0, q1 = 0.0, q2 = 0.0;
        for (int j = 0; j < grid.np(); ++j) {
            const double p = grid.p_center(j);
            const double v = r[j];
            const double g = v + kappa * v * v;
            m0 += v;
            m1 += p * v;
            q1 += p * g;
            q2 += p * p * g;
        }
        report.first_moment = std::max(report.first_moment, std::abs(m1 * dp));
        report.flux_moment = std::max(report.flux_moment, std::abs(q1 * dp));
        report.second_moment = std::max(report.second_moment, std::abs(q2 * dp - m0 * dp));
    }
    return report;
}

// ---------------------------------------------------------------------------
// Poisson equation -phi'' = rhs on the unit torus, zero-mean gauge.

struct PoissonSolution {
    std::vector<double> phi;
    std::vector<double> grad_phi;
    double removed_mean = 0.0;  ///< mean subtracted from the input
};

namespace detail {

/// Signed wavenumber of DFT index m on n points (Nyquist reported as +n/2).
inline int wavenumber(int m, int n) { return m <= n / 2 ? m : m - n; }

} // namespace detail

inline PoissonSolution poisson_solve(std::span<const double> rhs) {
    const int n = static_cast<int>(rhs.size());
    PoissonSolution sol;
    if (n == 0) return sol;

    double mean = 0.0;
    for (double v : rhs) mean += v;
    mean /= n;
    std::vector<double> centered(rhs.begin(), rhs.end());
    for (double& v : centered) v -= mean;
    sol.removed_mean = mean;

    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> spectrum;
    fft.fwd(spectrum, centered);

    std::vector<std::complex<double>> phi_hat(static_cast<std::size_t>(n));
    std::vector<std::complex<double>> grad_hat(static_cast<std::size_t>(n));
    for (int m = 0; m < n; ++m) {
        const int k = detail::wavenumber(m, n);
        if (k == 0) continue;
        const double w = kTwoPi * k;
        phi_hat[m] = spectrum[m] / (w * w);
        // The Nyquist mode has no odd part on the grid; its derivative is dropped.
        if (2 * std::abs(k) != n) grad_hat[m] = std::complex<double>(0.0, w) * phi_hat[m];
    }
    std::vector<std::complex<double>> tmp;
    fft.inv(tmp, phi_hat);
    sol.phi.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) sol.phi[i] = tmp[i].real();
    fft.inv(tmp, grad_hat);
    sol.grad_phi.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) sol.grad_phi[i] = tmp[i].real();
    return sol;
}

inline double l2_norm_torus(std::span<const double> v) {
    double sum = 0.0;
    for (double a : v) sum += a * a;
    return std::sqrt(sum / static_cast<double>(v.size()));
}

/// ||-phi'' - (rhs - mean)|| / ||rhs - mean||, where phi'' is the second
/// derivative of the trigonometric interpolant of phi evaluated by direct
/// DFT sums (independent of the FFT path used by the solver).
inline double poisson_residual(std::span<const double> phi, std::span<const double> rhs) {
    const int n = static_cast<int>(phi.size());
    double mean = 0.0;
    for (double v : rhs) mean += v;
    mean /= n;

    std::vector<double> cos_c(static_cast<std::size_t>(n / 2 + 1)), sin_c(cos_c.size());
    for (int k = 0; k <= n / 2; ++k) {
        double c = 0.0, s = 0.0;
        for (int i = 0; i < n; ++i) {
            const double a = kTwoPi * k * i / n;
            c += phi[i] * std::cos(a);
            s += phi[i] * std::sin(a);
        }
        cos_c[k] = c;
        sin_c[k] = s;
    }
    std::vector<double> residual(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        double lap = 0.0;
        for (int k = 1; k <= n / 2; ++k) {
            const double weight = (2 * k == n) ? 1.0 : 2.0;
            const double a = kTwoPi * k * i / n;
            const double mode = (cos_c[k] * std::cos(a) + sin_c[k] * std::sin(a)) * weight / n;
            lap -= (kTwoPi * k) * (kTwoPi * k) * mode;
        }
        residual[i] = -lap - (rhs[i] - mean);
    }
    std::vector<double> centered(rhs.begin(), rhs.end());
    for (double& v : centered) v -= mean;
    const double scale = l2_norm_torus(centered);
    const double res = l2_norm_torus(residual);
    return scale > 0.0 ? res / scale : res;
}

/// Residual of the centered second difference, relative to ||rhs - mean||.
/// Carries the O(dx^2) consistency error of the difference stencil.
inline double poisson_difference_residual(std::span<const double> phi, std::span<const double> rhs) {
    const int n = static_cast<int>(phi.size());
    const double dx = 1.0 / n;
    double mean = 0.0;
    for (double v : rhs) mean += v;
    mean /= n;
    std::vector<double> residual(static_cast<std::size_t>(n)), centered(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double lap = (phi[(i + 1) % n] - 2.0 * phi[i] + phi[(i - 1 + n) % n]) / (dx * dx);
        centered[i] = rhs[i] - mean;
        residual[i] = -lap - centered[i];
    }
    const double scale = l2_norm_torus(centered);
    return scale > 0.0 ? l2_norm_torus(residual) / scale : l2_norm_torus(residual);
}

struct MacroState {
    std::vector<double> rho;
    std::vector<double> flux;
    std::vector<double> beta;
    std::vector<double> phi;
    std::vector<double> grad_phi;
};

inline MacroState macro_state(const PhaseField& f, const ModelParams& params, double rho_inf,
                              std::span<const double> warm_start = {}) {
    MacroState m;
    m.rho = density(f);
    m.flux = macro_flux(f);
    m.beta = project(f, params, warm_start).beta;
    std::vector<double> rhs(m.rho);
    for (double& v : rhs) v -= rho_inf;
    auto sol = poisson_solve(rhs);
    m.phi = std::move(sol.phi);
    m.grad_phi = std::move(sol.grad_phi);
    return m;
}

/// Bounds [C1, C2] with C1 (Pi f - f_inf)^2 / M^2 <= (rho - rho_inf)^2 <= C2 (Pi f - f_inf)^2 / M^2
/// for every beta(x) in [beta_minus, beta_plus], scanned over beta and the grid momenta.
/// The ratio equals I(beta)^2 (1 - k beta M)^2 (1 - k beta_inf M)^2 with
/// I(beta) = int M / ((1 - k beta M)(1 - k beta_inf M)) dp.
inline ScanRange projection_density_constants(const ModelParams& params, const GridSpec& grid) {
    const double k = params.kappa;
    const double b_inf = params.beta_inf;
    auto integral = [&](double beta) {
        double sum = 0.0;
        for (double m : grid.maxwellian_samples()) sum += m / ((1.0 - k * beta * m) * (1.0 - k * b_inf * m));
        return sum * grid.dp();
    };
    ScanRange total{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (double m : grid.maxwellian_samples()) {
        auto ratio = [&](double beta) {
            const double i = integral(beta);
            const double a = (1.0 - k * beta * m) * (1.0 - k * b_inf * m);
            return i * i * a * a;
        };
        const auto r = scan_extrema(ratio, params.beta_minus, params.beta_plus);
        total.min = std::min(total.min, r.min);
        total.max = std::max(total.max, r.max);
    }
    return total;
}

} // namespace qkfp
