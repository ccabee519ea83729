#pragma once

// Maxwellian, Fermi-Dirac / Bose-Einstein equilibrium profiles, the
// beta <-> mass bijection, and the bosonic critical mass.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <variant>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>

#include "qkfp/errors.hpp"

namespace qkfp {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Statistics selector: -1 fermions, 0 classical, +1 bosons.
enum class Statistics : int { Fermi = -1, Classical = 0, Bose = +1 };

inline int kappa_of(Statistics s) { return static_cast<int>(s); }

inline Statistics statistics_from_kappa(int kappa) {
    if (kappa < -1 || kappa > 1)
        throw DomainError("kappa must be -1, 0 or +1 (got " + std::to_string(kappa) + ")");
    return static_cast<Statistics>(kappa);
}

/// (2*pi)^{d/2}: bosonic profiles are only defined for beta strictly below this.
inline double boson_beta_limit(int dim) { return std::pow(kTwoPi, 0.5 * dim); }

struct ModelParams {
    int kappa = -1;
    double beta_inf = 1.0;
    double beta_minus = 0.5;
    double beta_plus = 2.0;
    /// Weight of the flux/potential coupling in E; unset means "use the heuristic".
    std::optional<double> delta;
    int dim = 1;

    void validate() const {
        statistics_from_kappa(kappa);
        if (dim < 1) throw DomainError("dim must be >= 1");
        if (!(beta_minus > 0.0)) throw DomainError("beta_minus must be positive");
        if (!(beta_minus <= beta_inf && beta_inf <= beta_plus))
            throw DomainError("require 0 < beta_minus <= beta_inf <= beta_plus");
        if (kappa == 1 && !(beta_plus < boson_beta_limit(dim)))
            throw DomainError("bosons require beta_plus < (2*pi)^{d/2} = " +
                              std::to_string(boson_beta_limit(dim)));
        if (delta && !(*delta > 0.0)) throw DomainError("delta must be positive");
    }
};

inline double maxwellian_r2(double r2, int dim) {
    return std::pow(kTwoPi, -0.5 * dim) * std::exp(-0.5 * r2);
}

inline double maxwellian(double p) { return maxwellian_r2(p * p, 1); }

inline double maxwellian(std::span<const double> p) {
    double r2 = 0.0;
    for (double pi : p) r2 += pi * pi;
    return maxwellian_r2(r2, static_cast<int>(p.size()));
}

inline void check_beta(double beta, int kappa, int dim) {
    statistics_from_kappa(kappa);
    if (!(beta > 0.0) || !std::isfinite(beta))
        throw DomainError("beta must be positive and finite");
    if (kappa == 1 && !(beta < boson_beta_limit(dim)))
        throw DomainError("boson beta " + std::to_string(beta) + " is not below (2*pi)^{d/2}");
}

/// beta*M / (1 - kappa*beta*M), given the Maxwellian value directly.
inline double profile_from_maxwellian(double beta, int kappa, double m) {
    const double bm = beta * m;
    return bm / (1.0 - kappa * bm);
}

inline double equilibrium_profile_r2(double beta, int kappa, double r2, int dim) {
    check_beta(beta, kappa, dim);
    return profile_from_maxwellian(beta, kappa, maxwellian_r2(r2, dim));
}

inline double equilibrium_profile(double beta, int kappa, double p) {
    return equilibrium_profile_r2(beta, kappa, p * p, 1);
}

inline double equilibrium_profile(double beta, int kappa, std::span<const double> p) {
    double r2 = 0.0;
    for (double pi : p) r2 += pi * pi;
    return equilibrium_profile_r2(beta, kappa, r2, static_cast<int>(p.size()));
}

// ---------------------------------------------------------------------------
// Momentum quadratures

/// Midpoint rule on np uniform cells of [-p_max, p_max] (one dimension).
struct TruncatedMomentumGrid {
    int np = 128;
    double p_max = 8.0;

    double dp() const { return 2.0 * p_max / np; }
    double center(int j) const { return -p_max + (j + 0.5) * dp(); }
};

/// Exact integral over all of R^d, by radial Gauss-Kronrod quadrature.
struct WholeSpace {};

using MomentumQuadrature = std::variant<TruncatedMomentumGrid, WholeSpace>;

namespace detail {

inline double unit_sphere_area(int dim) {
    return 2.0 * std::pow(std::numbers::pi, 0.5 * dim) / std::tgamma(0.5 * dim);
}

/// S_{d-1} * int_0^inf r^{d-1} g(r^2) dr
template <class G>
double radial_integral(G&& g, int dim) {
    using boost::math::quadrature::gauss_kronrod;
    auto integrand = [&](double r) { return std::pow(r, dim - 1) * g(r * r); };
    const double value = gauss_kronrod<double, 61>::integrate(
        integrand, 0.0, std::numeric_limits<double>::infinity(), 20, 1e-14);
    return unit_sphere_area(dim) * value;
}

} // namespace detail

/// Integral of a radially symmetric integrand g(|p|^2) under the chosen quadrature.
template <class G>
double integrate_momentum(G&& g, int dim, const MomentumQuadrature& quad) {
    if (const auto* grid = std::get_if<TruncatedMomentumGrid>(&quad)) {
        if (dim != 1) throw DomainError("truncated momentum grid quadrature is one-dimensional");
        const double dp = grid->dp();
        double sum = 0.0;
        for (int j = 0; j < grid->np; ++j) {
            const double p = grid->center(j);
            sum += g(p * p);
        }
        return sum * dp;
    }
    return detail::radial_integral(std::forward<G>(g), dim);
}

inline double mass_of_beta(double beta, int kappa, int dim, const MomentumQuadrature& quad) {
    check_beta(beta, kappa, dim);
    return integrate_momentum(
        [&](double r2) { return profile_from_maxwellian(beta, kappa, maxwellian_r2(r2, dim)); },
        dim, quad);
}

/// Largest mass a smooth Bose-Einstein equilibrium can carry per unit torus
/// volume: +inf for d <= 2, finite for d >= 3.
inline double critical_mass(int dim) {
    if (dim < 1) throw DomainError("critical_mass: dim must be >= 1");
    if (dim <= 2) return std::numeric_limits<double>::infinity();
    return detail::radial_integral([](double r2) { return 1.0 / std::expm1(0.5 * r2); }, dim);
}

inline constexpr double kBetaLowerBracket = 1e-12;
inline constexpr int kBetaMaxIterations = 200;

/// Inverse of mass_of_beta by bisection; monotonicity makes the bracket safe.
inline double beta_of_mass(double mass, int kappa, int dim, const MomentumQuadrature& quad) {
    statistics_from_kappa(kappa);
    if (!(mass > 0.0) || !std::isfinite(mass)) throw DomainError("mass must be positive and finite");

    if (kappa == 0) return mass / mass_of_beta(1.0, 0, dim, quad);

    auto residual = [&](double beta) { return mass_of_beta(beta, kappa, dim, quad) - mass; };

    double lo = kBetaLowerBracket;
    double hi = 0.0;
    if (kappa == 1) {
        const bool whole_space = std::holds_alternative<WholeSpace>(quad);
        if (whole_space && dim >= 3 && !(mass < critical_mass(dim)))
            throw NoEquilibriumError("no equilibrium exists: bosonic mass " + std::to_string(mass) +
                                     " is not below the critical mass " +
                                     std::to_string(critical_mass(dim)));
        hi = boson_beta_limit(dim) * (1.0 - 1e-9);
        if (residual(hi) < 0.0)
            throw NoEquilibriumError("no equilibrium exists: bosonic mass " + std::to_string(mass) +
                                     " exceeds the largest mass representable on this quadrature");
    } else {
        // mass_of_beta(beta) <= beta, so the root is >= mass; grow the upper end.
        lo = std::max(lo, mass);
        hi = 2.0 * std::max(mass, 1.0);
        while (residual(hi) < 0.0) {
            lo = hi;
            hi *= 2.0;
            if (hi > 1e300)
                throw NoEquilibriumError("no Fermi-Dirac profile carries mass " + std::to_string(mass) +
                                         " on this quadrature");
        }
    }
    if (residual(lo) >= 0.0) return lo;

    std::uintmax_t iterations = kBetaMaxIterations;
    const auto [a, b] = boost::math::tools::bisect(
        residual, lo, hi, boost::math::tools::eps_tolerance<double>(52), iterations);
    return 0.5 * (a + b);
}

} // namespace qkfp
