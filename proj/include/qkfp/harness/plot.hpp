#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "qkfp/errors.hpp"

namespace qkfp {

enum class PlotKind { Semilog, Linear };

struct PlotCurve {
    std::string name;
    std::vector<double> y;
};

struct PlotSeries {
    std::string title;
    std::string x_label = "t";
    std::vector<double> x;
    std::vector<PlotCurve> curves;
};

inline constexpr double kSemilogFloor = 1e-16;

namespace detail {

inline std::string svg_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string svg_int(double v) { return std::to_string(static_cast<long>(v)); }

inline std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

inline std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

} // namespace detail

/// Renders the series as a self-contained SVG document. Semilog plots floor
/// non-positive or tiny values at 1e-16 and say so in an annotation.
inline std::string render_svg(const PlotSeries& series, PlotKind kind) {
    if (series.x.empty() || series.curves.empty()) throw DomainError("emit_plot: empty series");
    for (const auto& c : series.curves)
        if (c.y.size() != series.x.size()) throw DomainError("emit_plot: curve '" + c.name + "' length mismatch");

    constexpr double W = 720, H = 440, L = 80, R = 170, T = 40, B = 60;
    const double pw = W - L - R, ph = H - T - B;
    const bool log_y = kind == PlotKind::Semilog;

    bool floored = false;
    auto transform_y = [&](double v) {
        if (!log_y) return v;
        if (!(v >= kSemilogFloor)) {
            floored = true;
            v = kSemilogFloor;
        }
        return std::log10(v);
    };

    std::vector<std::vector<double>> ys;
    double ymin = INFINITY, ymax = -INFINITY;
    for (const auto& c : series.curves) {
        std::vector<double> t;
        for (double v : c.y) {
            const double u = std::isfinite(v) || log_y ? transform_y(v) : 0.0;
            t.push_back(u);
            ymin = std::min(ymin, u);
            ymax = std::max(ymax, u);
        }
        ys.push_back(std::move(t));
    }
    double xmin = *std::min_element(series.x.begin(), series.x.end());
    double xmax = *std::max_element(series.x.begin(), series.x.end());
    if (xmax <= xmin) xmax = xmin + 1.0;
    if (ymax <= ymin) {
        ymax += 0.5;
        ymin -= 0.5;
    }
    if (log_y) {
        ymin = std::floor(ymin);
        ymax = std::ceil(ymax);
    }

    auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * pw; };
    auto py = [&](double y) { return T + (1.0 - (y - ymin) / (ymax - ymin)) * ph; };

    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
    std::string s;
    s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::svg_int(W) + "\" height=\"" + detail::svg_int(H) +
         "\" viewBox=\"0 0 " + detail::svg_int(W) + " " + detail::svg_int(H) + "\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!series.title.empty())
        s += "<text x=\"" + detail::svg_num(L + pw / 2) + "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
             "font-size=\"15\">" + detail::xml_escape(series.title) + "</text>\n";
    s += "<rect x=\"" + detail::svg_num(L) + "\" y=\"" + detail::svg_num(T) + "\" width=\"" + detail::svg_num(pw) +
         "\" height=\"" + detail::svg_num(ph) + "\" fill=\"none\" stroke=\"black\"/>\n";

    // ticks
    const int nxt = 5;
    for (int k = 0; k <= nxt; ++k) {
        const double xv = xmin + (xmax - xmin) * k / nxt;
        const double X = px(xv);
        s += "<line x1=\"" + detail::svg_num(X) + "\" y1=\"" + detail::svg_num(T + ph) + "\" x2=\"" + detail::svg_num(X) +
             "\" y2=\"" + detail::svg_num(T + ph + 5) + "\" stroke=\"black\"/>\n";
        s += "<text x=\"" + detail::svg_num(X) + "\" y=\"" + detail::svg_num(T + ph + 20) +
             "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + detail::tick_label(xv) +
             "</text>\n";
    }
    std::vector<double> yticks;
    if (log_y) {
        const int span = static_cast<int>(ymax - ymin);
        const int stride = std::max(1, span / 8);
        for (int e = static_cast<int>(ymin); e <= static_cast<int>(ymax); e += stride) yticks.push_back(e);
    } else {
        for (int k = 0; k <= 5; ++k) yticks.push_back(ymin + (ymax - ymin) * k / 5);
    }
    for (double yv : yticks) {
        const double Y = py(yv);
        const std::string label = log_y ? "1e" + std::to_string(static_cast<int>(yv)) : detail::tick_label(yv);
        s += "<line x1=\"" + detail::svg_num(L - 5) + "\" y1=\"" + detail::svg_num(Y) + "\" x2=\"" + detail::svg_num(L) +
             "\" y2=\"" + detail::svg_num(Y) + "\" stroke=\"black\"/>\n";
        s += "<text x=\"" + detail::svg_num(L - 8) + "\" y=\"" + detail::svg_num(Y + 4) +
             "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + label + "</text>\n";
    }

    // axis labels
    s += "<text x=\"" + detail::svg_num(L + pw / 2) + "\" y=\"" + detail::svg_num(H - 15) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" +
         detail::xml_escape(series.x_label) + "</text>\n";
    std::string ylabel;
    for (std::size_t k = 0; k < series.curves.size(); ++k) ylabel += (k ? ", " : "") + series.curves[k].name;
    if (log_y) ylabel += " (log scale)";
    s += "<text x=\"18\" y=\"" + detail::svg_num(T + ph / 2) + "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"13\" transform=\"rotate(-90 18 " + detail::svg_num(T + ph / 2) + ")\">" +
         detail::xml_escape(ylabel) + "</text>\n";

    for (std::size_t k = 0; k < series.curves.size(); ++k) {
        const char* color = colors[k % 6];
        s += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t n = 0; n < series.x.size(); ++n) {
            if (n) s += ' ';
            s += detail::svg_num(px(series.x[n])) + "," + detail::svg_num(py(ys[k][n]));
        }
        s += "\"/>\n";
        const double ly = T + 15 + 20.0 * k;
        s += "<line x1=\"" + detail::svg_num(L + pw + 12) + "\" y1=\"" + detail::svg_num(ly) + "\" x2=\"" +
             detail::svg_num(L + pw + 36) + "\" y2=\"" + detail::svg_num(ly) + "\" stroke=\"" + color +
             "\" stroke-width=\"2\"/>\n";
        s += "<text x=\"" + detail::svg_num(L + pw + 42) + "\" y=\"" + detail::svg_num(ly + 4) +
             "\" font-family=\"sans-serif\" font-size=\"12\">" + detail::xml_escape(series.curves[k].name) +
             "</text>\n";
    }
    if (floored)
        s += "<text x=\"" + detail::svg_num(L + 6) + "\" y=\"" + detail::svg_num(T + ph - 6) +
             "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#555\">values below 1e-16 floored at 1e-16</text>\n";
    s += "</svg>\n";
    return s;
}

inline void emit_plot(const PlotSeries& series, PlotKind kind, const std::string& path) {
    const std::string svg = render_svg(series, kind);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("emit_plot: cannot write '" + path + "'");
    out << svg;
    if (!out) throw std::runtime_error("emit_plot: write failed for '" + path + "'");
}

} // namespace qkfp
