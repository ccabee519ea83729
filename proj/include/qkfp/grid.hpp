#pragma once

// Phase-space discretization of T^1 x [-p_max, p_max]: cell-centered
// samples, midpoint quadrature, the three norms, and the snapshot format.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "qkfp/equilibria.hpp"
#include "qkfp/errors.hpp"

namespace qkfp {

class GridSpec {
public:
    GridSpec() : GridSpec(64, 128, 8.0) {}

    GridSpec(int nx, int np, double p_max) : nx_(nx), np_(np), p_max_(p_max) {
        if (nx < 4) throw DomainError("grid: nx must be >= 4");
        if (np < 8) throw DomainError("grid: np must be >= 8");
        if (!(p_max > 0.0)) throw DomainError("grid: p_max must be positive");
        maxwellian_.resize(static_cast<std::size_t>(np));
        for (int j = 0; j < np; ++j) maxwellian_[j] = qkfp::maxwellian(p_center(j));
    }

    int nx() const { return nx_; }
    int np() const { return np_; }
    double p_max() const { return p_max_; }
    double dx() const { return 1.0 / nx_; }
    double dp() const { return 2.0 * p_max_ / np_; }
    double cell_volume() const { return dx() * dp(); }
    std::size_t size() const { return static_cast<std::size_t>(nx_) * np_; }

    double x_center(int i) const { return (i + 0.5) * dx(); }
    /// p = 0 is an interface, never a center, for even np.
    double p_center(int j) const { return -p_max_ + (j + 0.5) * dp(); }

    /// M(p_j), cached.
    double maxwellian(int j) const { return maxwellian_[static_cast<std::size_t>(j)]; }
    std::span<const double> maxwellian_samples() const { return maxwellian_; }

    std::vector<double> x_centers() const {
        std::vector<double> xs(static_cast<std::size_t>(nx_));
        for (int i = 0; i < nx_; ++i) xs[i] = x_center(i);
        return xs;
    }
    std::vector<double> p_centers() const {
        std::vector<double> ps(static_cast<std::size_t>(np_));
        for (int j = 0; j < np_; ++j) ps[j] = p_center(j);
        return ps;
    }

    TruncatedMomentumGrid momentum_quadrature() const { return {np_, p_max_}; }

    /// Same grid with both cell counts doubled.
    GridSpec refined() const { return {2 * nx_, 2 * np_, p_max_}; }

    friend bool operator==(const GridSpec& a, const GridSpec& b) {
        return a.nx_ == b.nx_ && a.np_ == b.np_ && a.p_max_ == b.p_max_;
    }

private:
    int nx_;
    int np_;
    double p_max_;
    std::vector<double> maxwellian_;
};

/// Cell-centered samples f(x_i, p_j), row-major (one row per x-cell).
class PhaseField {
public:
    PhaseField() = default;
    explicit PhaseField(GridSpec grid, double fill = 0.0)
        : grid_(std::move(grid)), values_(grid_.size(), fill) {}

    const GridSpec& grid() const { return grid_; }
    int nx() const { return grid_.nx(); }
    int np() const { return grid_.np(); }

    double& operator()(int i, int j) { return values_[index(i, j)]; }
    double operator()(int i, int j) const { return values_[index(i, j)]; }

    std::span<double> row(int i) {
        return {values_.data() + static_cast<std::size_t>(i) * grid_.np(),
                static_cast<std::size_t>(grid_.np())};
    }
    std::span<const double> row(int i) const {
        return {values_.data() + static_cast<std::size_t>(i) * grid_.np(),
                static_cast<std::size_t>(grid_.np())};
    }

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }

    bool all_finite() const {
        for (double v : values_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    double max_value() const {
        double m = -std::numeric_limits<double>::infinity();
        for (double v : values_) m = std::max(m, v);
        return m;
    }
    double min_value() const {
        double m = std::numeric_limits<double>::infinity();
        for (double v : values_) m = std::min(m, v);
        return m;
    }

    PhaseField& operator+=(const PhaseField& other) {
        require_same_grid(other);
        for (std::size_t k = 0; k < values_.size(); ++k) values_[k] += other.values_[k];
        return *this;
    }
    PhaseField& operator-=(const PhaseField& other) {
        require_same_grid(other);
        for (std::size_t k = 0; k < values_.size(); ++k) values_[k] -= other.values_[k];
        return *this;
    }
    PhaseField& operator*=(double a) {
        for (double& v : values_) v *= a;
        return *this;
    }
    friend PhaseField operator+(PhaseField a, const PhaseField& b) { return a += b; }
    friend PhaseField operator-(PhaseField a, const PhaseField& b) { return a -= b; }
    friend PhaseField operator*(double s, PhaseField a) { return a *= s; }

    void require_same_grid(const PhaseField& other) const {
        if (!(grid_ == other.grid_)) throw GridMismatch("phase fields live on different grids");
    }

    friend bool operator==(const PhaseField& a, const PhaseField& b) {
        return a.grid_ == b.grid_ && a.values_ == b.values_;
    }

private:
    std::size_t index(int i, int j) const {
        return static_cast<std::size_t>(i) * grid_.np() + static_cast<std::size_t>(j);
    }

    GridSpec grid_;
    std::vector<double> values_;
};

/// Samples fn(x, p) at every cell center.
inline PhaseField sample_field(const GridSpec& grid, const std::function<double(double, double)>& fn) {
    PhaseField f(grid);
    for (int i = 0; i < grid.nx(); ++i) {
        const double x = grid.x_center(i);
        for (int j = 0; j < grid.np(); ++j) f(i, j) = fn(x, grid.p_center(j));
    }
    return f;
}

/// Local equilibrium beta(x_i) M / (1 - kappa beta(x_i) M).
inline PhaseField local_equilibrium(const GridSpec& grid, int kappa, std::span<const double> beta) {
    if (static_cast<int>(beta.size()) != grid.nx()) throw GridMismatch("beta field size != nx");
    PhaseField f(grid);
    for (int i = 0; i < grid.nx(); ++i) {
        check_beta(beta[i], kappa, 1);
        for (int j = 0; j < grid.np(); ++j)
            f(i, j) = profile_from_maxwellian(beta[i], kappa, grid.maxwellian(j));
    }
    return f;
}

/// Global equilibrium profile replicated over every x-cell.
inline PhaseField global_equilibrium(const GridSpec& grid, int kappa, double beta) {
    std::vector<double> b(static_cast<std::size_t>(grid.nx()), beta);
    return local_equilibrium(grid, kappa, b);
}

// Reductions sum rows in fixed order so results are bitwise reproducible.

inline double integrate_phase(const PhaseField& f) {
    double total = 0.0;
    for (int i = 0; i < f.nx(); ++i) {
        double row_sum = 0.0;
        for (double v : f.row(i)) row_sum += v;
        total += row_sum;
    }
    return total * f.grid().cell_volume();
}

inline double weighted_l2_norm(const PhaseField& f) {
    const GridSpec& g = f.grid();
    double total = 0.0;
    for (int i = 0; i < f.nx(); ++i) {
        auto r = f.row(i);
        double row_sum = 0.0;
        for (int j = 0; j < g.np(); ++j) row_sum += r[j] * r[j] / g.maxwellian(j);
        total += row_sum;
    }
    return std::sqrt(total * g.cell_volume());
}

/// sqrt( sum (f-g)^2 / M dx dp )
inline double weighted_l2_distance(const PhaseField& f, const PhaseField& g) {
    f.require_same_grid(g);
    const GridSpec& grid = f.grid();
    double total = 0.0;
    for (int i = 0; i < f.nx(); ++i) {
        auto a = f.row(i);
        auto b = g.row(i);
        double row_sum = 0.0;
        for (int j = 0; j < grid.np(); ++j) {
            const double d = a[j] - b[j];
            row_sum += d * d / grid.maxwellian(j);
        }
        total += row_sum;
    }
    return std::sqrt(total * grid.cell_volume());
}

inline double l1_distance(const PhaseField& f, const PhaseField& g) {
    f.require_same_grid(g);
    double total = 0.0;
    for (int i = 0; i < f.nx(); ++i) {
        auto a = f.row(i);
        auto b = g.row(i);
        double row_sum = 0.0;
        for (int j = 0; j < f.np(); ++j) row_sum += std::abs(a[j] - b[j]);
        total += row_sum;
    }
    return total * f.grid().cell_volume();
}

inline double l2_distance(const PhaseField& f, const PhaseField& g) {
    f.require_same_grid(g);
    double total = 0.0;
    for (int i = 0; i < f.nx(); ++i) {
        auto a = f.row(i);
        auto b = g.row(i);
        double row_sum = 0.0;
        for (int j = 0; j < f.np(); ++j) row_sum += (a[j] - b[j]) * (a[j] - b[j]);
        total += row_sum;
    }
    return std::sqrt(total * f.grid().cell_volume());
}

// ---------------------------------------------------------------------------
// Snapshot files: header line "nx np p_max t", then nx CSV rows of np values.

struct Snapshot {
    PhaseField field;
    double t = 0.0;
};

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_snapshot(const std::string& path, const PhaseField& f, double t) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write snapshot " + path);
    out << f.nx() << ' ' << f.np() << ' ' << format_double(f.grid().p_max()) << ' ' << format_double(t)
        << '\n';
    for (int i = 0; i < f.nx(); ++i) {
        auto r = f.row(i);
        for (int j = 0; j < f.np(); ++j) {
            if (j) out << ',';
            out << format_double(r[j]);
        }
        out << '\n';
    }
    if (!out) throw std::runtime_error("error while writing snapshot " + path);
}

inline Snapshot read_snapshot(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open snapshot " + path);
    std::string header;
    std::getline(in, header);
    std::istringstream hs(header);
    int nx = 0, np = 0;
    double p_max = 0.0, t = 0.0;
    if (!(hs >> nx >> np >> p_max >> t))
        throw std::runtime_error(path + ": malformed header, expected \"nx np p_max t\"");
    Snapshot snap{PhaseField(GridSpec(nx, np, p_max)), t};
    std::string line;
    for (int i = 0; i < nx; ++i) {
        if (!std::getline(in, line))
            throw std::runtime_error(path + ": expected " + std::to_string(nx) + " rows");
        std::istringstream ls(line);
        std::string cell;
        int j = 0;
        while (std::getline(ls, cell, ',')) {
            if (j >= np) throw std::runtime_error(path + ": too many columns in row " + std::to_string(i));
            // strtod, not stod: subnormal values must round-trip
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (cell.empty() || end != cell.c_str() + cell.size())
                throw std::runtime_error(path + ": bad number in row " + std::to_string(i));
            snap.field(i, j) = v;
            ++j;
        }
        if (j != np) throw std::runtime_error(path + ": row " + std::to_string(i) + " has wrong length");
    }
    return snap;
}

} // namespace qkfp
