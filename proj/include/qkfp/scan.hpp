#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <utility>

#include <boost/math/tools/minima.hpp>

namespace qkfp {

struct ScanRange {
    double min = 0.0;
    double max = 0.0;
};

/// Min and max of a smooth scalar function on [lo, hi]: a uniform scan of
/// `points` nodes (endpoints included), then Brent refinement of each interior
/// extremum within its neighbouring scan cells.
inline ScanRange scan_extrema(const std::function<double(double)>& fn, double lo, double hi,
                              int points = 200) {
    if (points < 2 || hi <= lo) {
        const double v = fn(lo);
        return {v, v};
    }
    const double h = (hi - lo) / (points - 1);
    auto node = [&](int k) { return k == points - 1 ? hi : lo + k * h; };

    int arg_min = 0, arg_max = 0;
    double vmin = fn(lo), vmax = vmin;
    for (int k = 1; k < points; ++k) {
        const double v = fn(node(k));
        if (v < vmin) vmin = v, arg_min = k;
        if (v > vmax) vmax = v, arg_max = k;
    }

    using boost::math::tools::brent_find_minima;
    constexpr int bits = 50;
    if (arg_min > 0 && arg_min < points - 1) {
        std::uintmax_t iters = 200;
        const auto r = brent_find_minima(fn, node(arg_min - 1), node(arg_min + 1), bits, iters);
        vmin = std::min(vmin, r.second);
    }
    if (arg_max > 0 && arg_max < points - 1) {
        std::uintmax_t iters = 200;
        auto neg = [&](double b) { return -fn(b); };
        const auto r = brent_find_minima(neg, node(arg_max - 1), node(arg_max + 1), bits, iters);
        vmax = std::max(vmax, -r.second);
    }
    return {vmin, vmax};
}

} // namespace qkfp
