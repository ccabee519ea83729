#pragma once

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "qkfp/equilibria.hpp"
#include "qkfp/errors.hpp"
#include "qkfp/functionals.hpp"
#include "qkfp/grid.hpp"
#include "qkfp/solver.hpp"

namespace qkfp {

/// beta(x) = offset + amplitude * cos(2 pi k x)   (or sin)
struct BetaProfile {
    enum class Shape { Constant, Cos, Sin };
    double offset = 1.0;
    double amplitude = 0.0;
    int mode = 1;
    Shape shape = Shape::Constant;

    double operator()(double x) const {
        switch (shape) {
        case Shape::Cos: return offset + amplitude * std::cos(kTwoPi * mode * x);
        case Shape::Sin: return offset + amplitude * std::sin(kTwoPi * mode * x);
        default: return offset;
        }
    }

    std::string to_string() const {
        if (shape == Shape::Constant) return format_double(offset);
        const char* fn = shape == Shape::Cos ? "cos" : "sin";
        return format_double(offset) + (amplitude < 0 ? " - " : " + ") + format_double(std::abs(amplitude)) +
               "*" + fn + "(2*pi*" + std::to_string(mode) + "*x)";
    }
};

/// Accepts `c`, `c +- c*cos(2*pi*k*x)`, `c +- c*sin(2*pi*k*x)`; `k*` may be
/// omitted (k = 1) and `*` around pi is optional.
inline BetaProfile parse_beta_profile(const std::string& text) {
    static const std::string num = R"(([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?))";
    static const std::regex re("^\\s*" + num +
                               R"(\s*(?:([+-])\s*)" + num +
                               R"(\s*\*?\s*(cos|sin)\s*\(\s*2\s*\*?\s*pi\s*(?:\*?\s*(\d+)\s*)?\*?\s*x\s*\)\s*)?$)");
    std::smatch m;
    if (!std::regex_match(text, m, re))
        throw ConfigError("cannot parse beta profile '" + text +
                          "' (expected c, c + a*cos(2*pi*k*x) or c + a*sin(2*pi*k*x))");
    BetaProfile b;
    b.offset = std::stod(m[1]);
    if (m[2].matched) {
        b.amplitude = std::stod(m[3]) * (m[2] == "-" ? -1.0 : 1.0);
        b.shape = m[4] == "cos" ? BetaProfile::Shape::Cos : BetaProfile::Shape::Sin;
        b.mode = m[5].matched ? std::stoi(m[5]) : 1;
    }
    return b;
}

struct LocalEquilibriumInit {
    BetaProfile beta;
};

/// beta(x, p) = beta_inf (1 + amplitude sin(2 pi x_mode x + p_mode p)). With x_mode = 0 the
/// perturbation is odd in p, so it carries no mass and excites the slowest momentum mode.
struct PinchedPerturbationInit {
    double amplitude = 0.1;
    int x_mode = 1;
    double p_mode = 1.0;
};

using InitialCondition = std::variant<LocalEquilibriumInit, PinchedPerturbationInit>;

struct OutputConfig {
    std::string directory = "out";
    double sample_interval = 0.05;
    bool emit_plots = true;
};

struct FitWindow {
    std::optional<double> t_lo;  ///< default 0.2 t_end
    std::optional<double> t_hi;  ///< default t_end
};

struct ScenarioConfig {
    ModelParams model;
    GridSpec grid;
    SolverConfig solver;
    InitialCondition initial = LocalEquilibriumInit{};
    std::optional<InitialCondition> companion;
    OutputConfig output;
    FitWindow fit;

    double fit_lo() const { return fit.t_lo.value_or(0.2 * solver.t_end); }
    double fit_hi() const { return fit.t_hi.value_or(solver.t_end); }

    long sample_every() const {
        return std::max(1L, std::lround(output.sample_interval / solver.dt));
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct RawEntry {
    std::string value;
    int line = 0;
};

class KeyReader {
public:
    KeyReader(std::map<std::string, RawEntry> entries, std::string source)
        : entries_(std::move(entries)), source_(std::move(source)) {}

    bool has(const std::string& key) const { return entries_.count(key) > 0; }

    std::string context(const std::string& key) const {
        const auto it = entries_.find(key);
        const std::string where = it == entries_.end() ? "" : ":" + std::to_string(it->second.line);
        return source_ + where + ": key '" + key + "'";
    }

    std::optional<std::string> text(const std::string& key) const {
        const auto it = entries_.find(key);
        if (it == entries_.end()) return std::nullopt;
        return it->second.value;
    }

    std::optional<double> number(const std::string& key) const {
        const auto s = text(key);
        if (!s) return std::nullopt;
        char* end = nullptr;
        const double v = std::strtod(s->c_str(), &end);
        if (s->empty() || end != s->c_str() + s->size() || !std::isfinite(v))
            throw ConfigError(context(key) + ": expected a finite number, got '" + *s + "'");
        return v;
    }

    std::optional<long> integer(const std::string& key) const {
        const auto s = text(key);
        if (!s) return std::nullopt;
        char* end = nullptr;
        const long v = std::strtol(s->c_str(), &end, 10);
        if (s->empty() || end != s->c_str() + s->size())
            throw ConfigError(context(key) + ": expected an integer, got '" + *s + "'");
        return v;
    }

    std::optional<bool> boolean(const std::string& key) const {
        const auto s = text(key);
        if (!s) return std::nullopt;
        if (*s == "true" || *s == "1" || *s == "yes") return true;
        if (*s == "false" || *s == "0" || *s == "no") return false;
        throw ConfigError(context(key) + ": expected true/false, got '" + *s + "'");
    }

    template <class T>
    T required(const std::optional<T>& v, const std::string& key) const {
        if (!v) throw ConfigError(source_ + ": missing required key '" + key + "'");
        return *v;
    }

private:
    std::map<std::string, RawEntry> entries_;
    std::string source_;
};

inline const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "model.kappa", "model.beta_inf", "model.beta_minus", "model.beta_plus", "model.delta", "model.dim",
        "grid.nx", "grid.np", "grid.p_max",
        "solver.dt", "solver.t_end", "solver.cfl_transport", "solver.cfl_collision", "solver.transport_order",
        "solver.clamp_bounds", "solver.homogeneous",
        "initial.type", "initial.beta_profile", "initial.amplitude", "initial.x_mode", "initial.p_mode",
        "companion.type", "companion.beta_profile", "companion.amplitude", "companion.x_mode",
        "companion.p_mode",
        "output.directory", "output.sample_interval", "output.emit_plots",
        "fit.t_lo", "fit.t_hi",
    };
    return keys;
}

inline InitialCondition read_initial(const KeyReader& r, const std::string& section, double beta_inf) {
    const std::string type = r.text(section + ".type").value_or("local_equilibrium");
    const auto has_any = [&](std::initializer_list<const char*> names) {
        for (const char* n : names)
            if (r.has(section + "." + n)) return section + "." + n;
        return std::string();
    };
    if (type == "local_equilibrium") {
        if (auto k = has_any({"amplitude", "x_mode", "p_mode"}); !k.empty())
            throw ConfigError(r.context(k) + ": not valid for type local_equilibrium");
        LocalEquilibriumInit init;
        init.beta.offset = beta_inf;
        if (const auto s = r.text(section + ".beta_profile")) {
            try {
                init.beta = parse_beta_profile(*s);
            } catch (const ConfigError& e) {
                throw ConfigError(r.context(section + ".beta_profile") + ": " + e.what());
            }
        }
        return init;
    }
    if (type == "pinched_perturbation") {
        if (r.has(section + ".beta_profile"))
            throw ConfigError(r.context(section + ".beta_profile") + ": not valid for type pinched_perturbation");
        PinchedPerturbationInit init;
        init.amplitude = r.number(section + ".amplitude").value_or(init.amplitude);
        init.x_mode = static_cast<int>(r.integer(section + ".x_mode").value_or(init.x_mode));
        init.p_mode = r.number(section + ".p_mode").value_or(init.p_mode);
        return init;
    }
    throw ConfigError(r.context(section + ".type") + ": unknown initial condition type '" + type +
                      "' (expected local_equilibrium or pinched_perturbation)");
}

} // namespace detail

/// Evaluates an initial condition on the grid.
/// beta(x, p) of an initial condition.
inline double initial_beta(const InitialCondition& ic, double x, double p, double beta_inf) {
    return std::visit(
        [&](const auto& init) -> double {
            using T = std::decay_t<decltype(init)>;
            if constexpr (std::is_same_v<T, LocalEquilibriumInit>)
                return init.beta(x);
            else
                return beta_inf * (1.0 + init.amplitude * std::sin(kTwoPi * init.x_mode * x + init.p_mode * p));
        },
        ic);
}

inline PhaseField initial_field(const InitialCondition& ic, const GridSpec& grid, const ModelParams& params) {
    if (const auto* le = std::get_if<LocalEquilibriumInit>(&ic)) {
        std::vector<double> beta(static_cast<std::size_t>(grid.nx()));
        for (int i = 0; i < grid.nx(); ++i) beta[i] = le->beta(grid.x_center(i));
        return local_equilibrium(grid, params.kappa, beta);
    }
    return sample_field(grid, [&](double x, double p) {
        return equilibrium_profile(initial_beta(ic, x, p, params.beta_inf), params.kappa, p);
    });
}

/// Throws ConfigError naming the first x-cell where beta(x, p) leaves
/// [beta_minus, beta_plus].
inline void require_beta_in_range(const InitialCondition& ic, const GridSpec& grid, const ModelParams& params,
                                  const std::string& what) {
    for (int i = 0; i < grid.nx(); ++i)
        for (int j = 0; j < grid.np(); ++j) {
            const double b = initial_beta(ic, grid.x_center(i), grid.p_center(j), params.beta_inf);
            if (!(b >= params.beta_minus && b <= params.beta_plus)) {
                std::ostringstream os;
                os << what << " leaves the [beta_minus, beta_plus] envelope at x-cell " << i
                   << " (x = " << grid.x_center(i) << ", p = " << grid.p_center(j) << ": beta " << format_double(b)
                   << " outside [" << format_double(params.beta_minus) << ", " << format_double(params.beta_plus)
                   << "])";
                throw ConfigError(os.str());
            }
        }
}

/// Throws ConfigError naming the first x-cell where f leaves the envelope
/// [profile(beta_minus), profile(beta_plus)] (relative slack 1e-12).
inline void require_within_envelope(const PhaseField& f, const ModelParams& params, const std::string& what) {
    const GridSpec& grid = f.grid();
    for (int i = 0; i < grid.nx(); ++i) {
        for (int j = 0; j < grid.np(); ++j) {
            const double m = grid.maxwellian(j);
            const double lo = profile_from_maxwellian(params.beta_minus, params.kappa, m);
            const double hi = profile_from_maxwellian(params.beta_plus, params.kappa, m);
            const double v = f(i, j);
            if (!(v >= lo * (1.0 - 1e-12) && v <= hi * (1.0 + 1e-12))) {
                std::ostringstream os;
                os << what << " leaves the [beta_minus, beta_plus] envelope at x-cell " << i
                   << " (x = " << grid.x_center(i) << ", p = " << grid.p_center(j) << ": value "
                   << format_double(v) << " outside [" << format_double(lo) << ", " << format_double(hi) << "])";
                throw ConfigError(os.str());
            }
        }
    }
}

/// Parses the flat `section.key = value` format. `#` starts a comment.
inline ScenarioConfig parse_config(const std::string& text, const std::string& source = "<config>") {
    std::map<std::string, detail::RawEntry> entries;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = source + ":" + std::to_string(lineno);
        if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value', got '" + line + "'");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError(where + ": empty key");
        if (!detail::known_keys().count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
        if (value.empty()) throw ConfigError(where + ": key '" + key + "' has an empty value");
        if (const auto it = entries.find(key); it != entries.end())
            throw ConfigError(where + ": duplicate key '" + key + "' (first set on line " +
                              std::to_string(it->second.line) + ")");
        entries.emplace(key, detail::RawEntry{value, lineno});
    }

    const detail::KeyReader r(std::move(entries), source);
    ScenarioConfig c;
    try {
        c.model.kappa = static_cast<int>(r.required(r.integer("model.kappa"), "model.kappa"));
        c.model.beta_inf = r.required(r.number("model.beta_inf"), "model.beta_inf");
        c.model.beta_minus = r.required(r.number("model.beta_minus"), "model.beta_minus");
        c.model.beta_plus = r.required(r.number("model.beta_plus"), "model.beta_plus");
        c.model.delta = r.number("model.delta");
        c.model.dim = static_cast<int>(r.integer("model.dim").value_or(1));
        if (c.model.dim != 1)
            throw ConfigError(r.context("model.dim") + ": phase-space simulation supports dim = 1 only");
        c.model.validate();

        c.grid = GridSpec(static_cast<int>(r.integer("grid.nx").value_or(64)),
                          static_cast<int>(r.integer("grid.np").value_or(128)),
                          r.number("grid.p_max").value_or(8.0));

        c.solver.dt = r.number("solver.dt").value_or(c.solver.dt);
        c.solver.t_end = r.number("solver.t_end").value_or(c.solver.t_end);
        c.solver.cfl_transport = r.number("solver.cfl_transport").value_or(c.solver.cfl_transport);
        c.solver.cfl_collision = r.number("solver.cfl_collision").value_or(c.solver.cfl_collision);
        c.solver.transport_order =
            static_cast<int>(r.integer("solver.transport_order").value_or(c.solver.transport_order));
        c.solver.clamp_bounds = r.boolean("solver.clamp_bounds").value_or(false);
        c.solver.homogeneous = r.boolean("solver.homogeneous").value_or(false);
        c.solver.validate();

        c.initial = detail::read_initial(r, "initial", c.model.beta_inf);
        if (r.has("companion.type") || r.has("companion.beta_profile") || r.has("companion.amplitude") ||
            r.has("companion.x_mode") || r.has("companion.p_mode"))
            c.companion = detail::read_initial(r, "companion", c.model.beta_inf);

        c.output.directory = r.text("output.directory").value_or(c.output.directory);
        c.output.sample_interval = r.number("output.sample_interval").value_or(c.output.sample_interval);
        if (!(c.output.sample_interval > 0.0))
            throw ConfigError(r.context("output.sample_interval") + ": must be positive");
        c.output.emit_plots = r.boolean("output.emit_plots").value_or(true);

        c.fit.t_lo = r.number("fit.t_lo");
        c.fit.t_hi = r.number("fit.t_hi");
        if (!(c.fit_lo() < c.fit_hi())) throw ConfigError(source + ": fit window requires fit.t_lo < fit.t_hi");
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(source + ": " + e.what());
    }

    require_beta_in_range(c.initial, c.grid, c.model, "initial condition");
    if (c.companion) require_beta_in_range(*c.companion, c.grid, c.model, "companion condition");
    try {
        require_within_envelope(initial_field(c.initial, c.grid, c.model), c.model, "initial condition");
        if (c.companion)
            require_within_envelope(initial_field(*c.companion, c.grid, c.model), c.model, "companion condition");
    } catch (const DomainError& e) {
        throw ConfigError(source + ": " + e.what());
    }
    return c;
}

inline ScenarioConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path);
}

inline nlohmann::json initial_to_json(const InitialCondition& ic) {
    return std::visit(
        [](const auto& init) -> nlohmann::json {
            using T = std::decay_t<decltype(init)>;
            if constexpr (std::is_same_v<T, LocalEquilibriumInit>)
                return {{"type", "local_equilibrium"}, {"beta_profile", init.beta.to_string()}};
            else
                return {{"type", "pinched_perturbation"},
                        {"amplitude", init.amplitude},
                        {"x_mode", init.x_mode},
                        {"p_mode", init.p_mode}};
        },
        ic);
}

/// Fully resolved config (defaults applied) as JSON.
inline nlohmann::json config_to_json(const ScenarioConfig& c) {
    nlohmann::json j;
    j["model"] = {{"kappa", c.model.kappa},
                  {"beta_inf", c.model.beta_inf},
                  {"beta_minus", c.model.beta_minus},
                  {"beta_plus", c.model.beta_plus},
                  {"dim", c.model.dim}};
    j["model"]["delta"] = c.model.delta ? nlohmann::json(*c.model.delta) : nlohmann::json(nullptr);
    j["grid"] = {{"nx", c.grid.nx()}, {"np", c.grid.np()}, {"p_max", c.grid.p_max()}};
    j["solver"] = {{"dt", c.solver.dt},
                   {"t_end", c.solver.t_end},
                   {"cfl_transport", c.solver.cfl_transport},
                   {"cfl_collision", c.solver.cfl_collision},
                   {"transport_order", c.solver.transport_order},
                   {"clamp_bounds", c.solver.clamp_bounds},
                   {"homogeneous", c.solver.homogeneous}};
    j["initial"] = initial_to_json(c.initial);
    j["companion"] = c.companion ? initial_to_json(*c.companion) : nlohmann::json(nullptr);
    j["output"] = {{"directory", c.output.directory},
                   {"sample_interval", c.output.sample_interval},
                   {"emit_plots", c.output.emit_plots}};
    j["fit"] = {{"t_lo", c.fit_lo()}, {"t_hi", c.fit_hi()}};
    return j;
}

} // namespace qkfp
