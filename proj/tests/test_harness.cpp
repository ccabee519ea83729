#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "qkfp/harness/check.hpp"
#include "qkfp/harness/config.hpp"
#include "qkfp/harness/plot.hpp"
#include "qkfp/harness/rng.hpp"
#include "qkfp/harness/scenario.hpp"

using namespace qkfp;
namespace fs = std::filesystem;

namespace {

const std::string kMinimal =
    "model.kappa = -1\nmodel.beta_inf = 1.0\nmodel.beta_minus = 0.5\nmodel.beta_plus = 2.0\n";

const std::string kQuick = kMinimal +
                           "grid.nx = 16\ngrid.np = 32\nsolver.dt = 2e-3\nsolver.t_end = 1\n"
                           "initial.beta_profile = 1.0 + 0.2*cos(2*pi*x)\noutput.sample_interval = 0.02\n";

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("qkfp_harness_" + name);
    fs::remove_all(dir);
    return dir;
}

std::string error_of(const std::string& text) {
    try {
        parse_config(text, "test.cfg");
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, sep)) out.push_back(cell);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

} // namespace

// ---------------------------------------------------------------------------
// RNG

TEST(Lcg64, MatchesReferenceSequence) {
    // 64-bit wrapping arithmetic evaluated in Python
    Lcg64 a(1);
    EXPECT_EQ(a.next(), 7806831264735756412ULL);
    EXPECT_EQ(a.next(), 9396908728118811419ULL);
    EXPECT_EQ(a.next(), 11960119808228829710ULL);
    Lcg64 b(42);
    EXPECT_EQ(b.uniform(), 0.5682303266439076);
    EXPECT_EQ(b.uniform(), 0.2254634289477513);
}

TEST(Lcg64, UniformStaysInUnitInterval) {
    Lcg64 r(99);
    for (int k = 0; k < 10000; ++k) {
        const double u = r.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
    }
}

// ---------------------------------------------------------------------------
// Config

TEST(Config, MinimalConfigGetsDefaults) {
    const auto c = parse_config(kMinimal);
    EXPECT_EQ(c.grid.nx(), 64);
    EXPECT_EQ(c.grid.np(), 128);
    EXPECT_EQ(c.grid.p_max(), 8.0);
    EXPECT_EQ(c.solver.dt, 5e-4);
    EXPECT_EQ(c.solver.t_end, 10.0);
    EXPECT_EQ(c.model.dim, 1);
    EXPECT_FALSE(c.model.delta.has_value());
    EXPECT_FALSE(c.companion.has_value());
    EXPECT_EQ(c.fit_lo(), 2.0);
    EXPECT_EQ(c.fit_hi(), 10.0);
    ASSERT_TRUE(std::holds_alternative<LocalEquilibriumInit>(c.initial));
    EXPECT_EQ(std::get<LocalEquilibriumInit>(c.initial).beta(0.3), 1.0);
}

TEST(Config, BosonBetaPlusAboveLimitIsRejected) {
    ASSERT_LT(oracle::sqrt_two_pi(), 3.0);
    const std::string text = "model.kappa = 1\nmodel.beta_inf = 1.0\nmodel.beta_minus = 0.5\nmodel.beta_plus = 3.0\n";
    EXPECT_THROW(parse_config(text), ConfigError);
    EXPECT_NE(error_of(text).find("beta_plus"), std::string::npos);
}

TEST(Config, DuplicateKeyIsAnError) {
    const auto msg = error_of(kMinimal + "grid.nx = 32\ngrid.nx = 16\n");
    EXPECT_NE(msg.find("duplicate key 'grid.nx'"), std::string::npos) << msg;
    EXPECT_NE(msg.find("test.cfg:6"), std::string::npos) << msg;
}

TEST(Config, UnknownKeyReportsLine) {
    const auto msg = error_of(kMinimal + "\n# comment\ngrid.nz = 3\n");
    EXPECT_NE(msg.find("test.cfg:7"), std::string::npos) << msg;
    EXPECT_NE(msg.find("grid.nz"), std::string::npos) << msg;
}

TEST(Config, ParseErrorsCarryContext) {
    EXPECT_NE(error_of(kMinimal + "grid.nx 32\n").find("expected 'key = value'"), std::string::npos);
    EXPECT_NE(error_of(kMinimal + "grid.nx = 3x2\n").find("grid.nx"), std::string::npos);
    EXPECT_NE(error_of(kMinimal + "solver.dt = fast\n").find("finite number"), std::string::npos);
    EXPECT_NE(error_of("model.kappa = -1\n").find("missing required key"), std::string::npos);
    EXPECT_NE(error_of(kMinimal + "solver.homogeneous = maybe\n").find("true/false"), std::string::npos);
    EXPECT_NE(error_of(kMinimal + "model.dim = 3\n").find("dim = 1"), std::string::npos);
    EXPECT_NE(error_of(kMinimal + "initial.type = vortex\n").find("unknown initial condition type"),
              std::string::npos);
    EXPECT_NE(error_of(kMinimal + "grid.nx = 2\n").find("nx"), std::string::npos);
}

TEST(Config, CommentsAndWhitespaceAreIgnored) {
    const auto c = parse_config("  # header\n" + kMinimal + "grid.np   =   64   # inline\n\n");
    EXPECT_EQ(c.grid.np(), 64);
}

TEST(Config, EnvelopeViolationNamesTheCell) {
    const auto msg = error_of(kMinimal + "initial.beta_profile = 1.0 + 1.5*sin(2*pi*x)\n");
    EXPECT_NE(msg.find("x-cell"), std::string::npos) << msg;
    EXPECT_NE(msg.find("envelope"), std::string::npos) << msg;
    // 1 + 1.5 sin(2 pi x) first exceeds 2 at x = 0.1161; cell centre 7.5/64 is the first past it
    EXPECT_NE(msg.find("x-cell 7 "), std::string::npos) << msg;
}

TEST(Config, PinchedPerturbationAndCompanion) {
    const auto c = parse_config(kMinimal +
                                "initial.type = pinched_perturbation\ninitial.amplitude = 0.3\n"
                                "initial.x_mode = 2\ninitial.p_mode = 0.5\n"
                                "companion.beta_profile = 1.2 - 0.1*sin(2*pi*3*x)\n");
    const auto& ic = std::get<PinchedPerturbationInit>(c.initial);
    EXPECT_EQ(ic.amplitude, 0.3);
    EXPECT_EQ(ic.x_mode, 2);
    EXPECT_EQ(ic.p_mode, 0.5);
    ASSERT_TRUE(c.companion.has_value());
    const auto& comp = std::get<LocalEquilibriumInit>(*c.companion);
    EXPECT_NEAR(comp.beta(0.25 / 3), 1.1, 1e-15);
    EXPECT_NE(error_of(kMinimal + "initial.amplitude = 0.1\n").find("not valid"), std::string::npos);
}

TEST(BetaProfileGrammar, AcceptedForms) {
    EXPECT_EQ(parse_beta_profile("1.5").shape, BetaProfile::Shape::Constant);
    const auto a = parse_beta_profile("1.0 + 0.2*cos(2*pi*x)");
    EXPECT_EQ(a.mode, 1);
    EXPECT_NEAR(a(0.0), 1.2, 1e-15);
    const auto b = parse_beta_profile("1 - 0.25 * sin(2*pi*3*x)");
    EXPECT_EQ(b.mode, 3);
    EXPECT_NEAR(b(1.0 / 12), 0.75, 1e-15);
    const auto c = parse_beta_profile("2e-1+1e-2*cos(2pi 4 x)");
    EXPECT_EQ(c.mode, 4);
    EXPECT_NEAR(c(0.0), 0.21, 1e-15);
    // round trip through the printed form
    const auto d = parse_beta_profile(b.to_string());
    EXPECT_EQ(d.amplitude, b.amplitude);
    EXPECT_EQ(d.mode, b.mode);
}

TEST(BetaProfileGrammar, RejectedForms) {
    for (const char* bad : {"", "x", "1 + cos(2*pi*x)", "1 + 0.2*tan(2*pi*x)", "1 + 0.2*cos(pi*x)",
                            "1 + 0.2*cos(2*pi*1.5*x)", "1 * 0.2"})
        EXPECT_THROW(parse_beta_profile(bad), ConfigError) << bad;
}

TEST(Config, LoadFromFileAndSampleConfigsAreValid) {
    for (const char* name : {"fermion_baseline.cfg", "boson.cfg", "classical_homogeneous.cfg", "fermion_pair.cfg",
                             "quick.cfg"})
        EXPECT_NO_THROW(load_config(std::string(QKFP_CONFIG_DIR) + "/" + name)) << name;
    EXPECT_THROW(load_config("/nonexistent/qkfp.cfg"), ConfigError);
}

TEST(Config, EchoContainsResolvedValues) {
    const auto j = config_to_json(parse_config(kQuick));
    EXPECT_EQ(j["grid"]["nx"], 16);
    EXPECT_EQ(j["model"]["kappa"], -1);
    EXPECT_TRUE(j["model"]["delta"].is_null());
    EXPECT_EQ(j["initial"]["type"], "local_equilibrium");
}

// ---------------------------------------------------------------------------
// Plots

TEST(Plot, TwoPointSeriesHasOneSegment) {
    PlotSeries s{"", "t", {0.0, 1.0}, {{"dist_w", {1.0, 0.5}}}};
    const std::string svg = render_svg(s, PlotKind::Semilog);
    EXPECT_EQ(svg.rfind("<?xml", 0), 0u);
    EXPECT_NE(svg.find("</svg>"), std::string::npos);
    const auto pos = svg.find("<polyline");
    ASSERT_NE(pos, std::string::npos);
    const auto pts_begin = svg.find("points=\"", pos) + 8;
    const std::string pts = svg.substr(pts_begin, svg.find('"', pts_begin) - pts_begin);
    EXPECT_EQ(std::count(pts.begin(), pts.end(), ' '), 1);
    EXPECT_NE(svg.find(">dist_w<"), std::string::npos);
    EXPECT_NE(svg.find(">t<"), std::string::npos);
}

TEST(Plot, ZeroIsFlooredAndAnnotatedInSemilog) {
    PlotSeries s{"", "t", {0.0, 1.0, 2.0}, {{"E", {1.0, 1e-3, 0.0}}}};
    EXPECT_NE(render_svg(s, PlotKind::Semilog).find("floored at 1e-16"), std::string::npos);
    EXPECT_EQ(render_svg(s, PlotKind::Linear).find("floored"), std::string::npos);
}

TEST(Plot, DeterministicBytes) {
    PlotSeries s{"title", "t", {0.0, 0.5, 1.0}, {{"H_rel", {0.3, 0.2, 0.1}}, {"D", {0.0, 0.1, 0.05}}}};
    const fs::path dir = fresh_dir("plot");
    fs::create_directories(dir);
    emit_plot(s, PlotKind::Linear, (dir / "a.svg").string());
    emit_plot(s, PlotKind::Linear, (dir / "b.svg").string());
    EXPECT_EQ(read_file(dir / "a.svg"), read_file(dir / "b.svg"));
}

TEST(Plot, EmptySeriesAndBadPathThrow) {
    PlotSeries empty;
    EXPECT_THROW(render_svg(empty, PlotKind::Linear), DomainError);
    PlotSeries s{"", "t", {0.0, 1.0}, {{"y", {1.0, 2.0}}}};
    EXPECT_THROW(emit_plot(s, PlotKind::Linear, "/nonexistent_dir/x.svg"), std::runtime_error);
}

// ---------------------------------------------------------------------------
// Scenario runs

TEST(RunScenario, WritesArtifactsWithStableSchema) {
    const auto cfg = parse_config(kQuick);
    const fs::path dir = fresh_dir("run");
    RunOptions opt;
    opt.out_dir = dir.string();
    const auto res = run_scenario(cfg, opt);
    EXPECT_EQ(res.exit_code, kExitOk);
    for (const char* f : {"diagnostics.csv", "fit.json", "decay.svg", "entropy.svg", "final.snapshot"})
        EXPECT_TRUE(fs::exists(dir / f)) << f;

    std::ifstream csv(dir / "diagnostics.csv");
    std::string line;
    std::getline(csv, line);
    EXPECT_EQ(line, "t,mass,H_abs,H_rel,H_rel_pi,D,E,dist_w,dist_pi,dist_macro,l1_pair,floor_events,bound_violation");
    int rows = 0;
    while (std::getline(csv, line)) {
        ++rows;
        const auto cells = split(line, ',');
        ASSERT_EQ(cells.size(), 13u) << line;
        for (std::size_t k = 0; k < cells.size(); ++k) {
            if (k == 10) {
                EXPECT_TRUE(cells[k].empty());
                continue;
            }
            char* end = nullptr;
            const double v = std::strtod(cells[k].c_str(), &end);
            EXPECT_TRUE(std::isfinite(v) && *end == '\0') << cells[k];
        }
    }
    EXPECT_EQ(rows, 51);

    const auto j = nlohmann::json::parse(read_file(dir / "fit.json"));
    for (const char* key : {"lambda", "c", "r_squared", "window", "C3", "C4", "C6", "C7", "delta", "config"})
        EXPECT_TRUE(j.contains(key)) << key;
    EXPECT_GT(j["lambda"].get<double>(), 0.0);
    EXPECT_GT(j["r_squared"].get<double>(), 0.99);
    EXPECT_NEAR(j["C6"].get<double>(), 0.5 * j["C3"].get<double>(), 1e-15);
}

TEST(RunScenario, ByteIdenticalReruns) {
    const auto cfg = parse_config(kQuick);
    RunOptions a, b;
    a.out_dir = fresh_dir("det_a").string();
    b.out_dir = fresh_dir("det_b").string();
    run_scenario(cfg, a);
    run_scenario(cfg, b);
    EXPECT_EQ(read_file(fs::path(a.out_dir) / "diagnostics.csv"), read_file(fs::path(b.out_dir) / "diagnostics.csv"));
    EXPECT_EQ(read_file(fs::path(a.out_dir) / "decay.svg"), read_file(fs::path(b.out_dir) / "decay.svg"));
}

TEST(RunScenario, MassConservedOverRun) {
    const auto res = run_scenario(parse_config(kQuick));
    const double m0 = res.rows.front().mass;
    for (const auto& r : res.rows) EXPECT_LE(std::abs(r.mass - m0), 1e-10 * m0);
}

TEST(RunScenario, EquilibriumDataGivesDegenerateFit) {
    // beta_inf chosen as the discrete value so f0 = f_inf
    const auto res = run_scenario(parse_config(kMinimal +
                                               "grid.nx = 8\ngrid.np = 32\nsolver.dt = 1e-2\nsolver.t_end = 1\n"));
    EXPECT_EQ(res.exit_code, kExitOk) << (res.failures.empty() ? "" : res.failures.front());
    EXPECT_FALSE(res.fit.has_value());
    EXPECT_TRUE(res.fit_json["degenerate"].get<bool>());
    for (const auto& r : res.rows) EXPECT_LE(r.dist_w, 1e-11);
}

TEST(RunScenario, CompanionFillsL1Column) {
    const auto res = run_scenario(parse_config(kQuick + "companion.beta_profile = 1.1\n"));
    for (const auto& r : res.rows) ASSERT_TRUE(r.l1_pair.has_value());
    EXPECT_LE(res.rows.back().l1_pair.value(), res.rows.front().l1_pair.value());
}

TEST(Contraction, IdenticalPairReportsZero) {
    const auto rep = run_contraction_pair(
        parse_config(kQuick + "companion.beta_profile = 1.0 + 0.2*cos(2*pi*x)\n"));
    EXPECT_EQ(rep.l1_initial, 0.0);
    EXPECT_EQ(rep.max_ratio, 0.0);
    EXPECT_TRUE(rep.ordered);
    EXPECT_EQ(rep.ordered_excess, 0.0);
    EXPECT_TRUE(rep.passed());
}

TEST(Contraction, OrderedPairStaysOrdered) {
    const auto rep = run_contraction_pair(
        parse_config(kQuick + "companion.beta_profile = 1.4 + 0.2*sin(2*pi*x)\n"));
    EXPECT_TRUE(rep.ordered);
    EXPECT_LE(rep.ordered_excess, rep.ordered_tolerance);
    EXPECT_LE(rep.max_ratio, 1.0 + 1e-12);
    EXPECT_TRUE(rep.passed());
}

TEST(Contraction, RequiresCompanion) {
    EXPECT_THROW(run_contraction_pair(parse_config(kQuick)), ConfigError);
}

TEST(SweepDelta, HeuristicGridIsReported) {
    const auto table = sweep_delta(parse_config(kQuick), {});
    ASSERT_EQ(table.size(), 5u);
    EXPECT_LT(table[0].delta, table[4].delta);
    EXPECT_TRUE(table[2].equivalence_holds);
    EXPECT_GT(table[2].lambda_e, 0.0);
}

// ---------------------------------------------------------------------------
// Check suite

TEST(CheckSuite, QuickConfigPasses) {
    CheckOptions opt;
    opt.refinement_study = false;  // pre-asymptotic on 8x16 grids
    const auto report = check_suite(parse_config(kQuick), opt);
    for (const auto& e : report.entries) EXPECT_TRUE(e.passed) << e.name << ": " << e.value << " " << e.detail;
    EXPECT_EQ(report.find("classical_relative_entropy"), nullptr);
    const auto j = report.to_json();
    EXPECT_TRUE(j["passed"].get<bool>());
    EXPECT_GE(j["checks"].size(), 20u);
}

TEST(CheckSuite, SignFlippedPoissonSolverIsCaught) {
    CheckOptions opt;
    opt.refinement_study = false;
    opt.poisson = [](std::span<const double> rhs) {
        auto s = poisson_solve(rhs);
        for (double& v : s.phi) v = -v;
        for (double& v : s.grad_phi) v = -v;
        return s;
    };
    const auto report = check_suite(parse_config(kQuick), opt);
    EXPECT_FALSE(report.passed());
    ASSERT_NE(report.find("poisson_residual"), nullptr);
    EXPECT_FALSE(report.find("poisson_residual")->passed);
    const auto failed = report.to_json()["failed"];
    EXPECT_NE(std::find(failed.begin(), failed.end(), "poisson_residual"), failed.end());
}

TEST(CheckSuite, ClassicalConfigIncludesReductionChecks) {
    CheckOptions opt;
    opt.refinement_study = false;
    const auto cfg = parse_config(
        "model.kappa = 0\nmodel.beta_inf = 1\nmodel.beta_minus = 0.5\nmodel.beta_plus = 2\n"
        "grid.nx = 16\ngrid.np = 64\nsolver.dt = 2e-3\nsolver.t_end = 0.5\n"
        "initial.beta_profile = 1 + 0.3*sin(2*pi*x)\n");
    const auto report = check_suite(cfg, opt);
    for (const char* name : {"classical_relative_entropy", "classical_equivalence_constants", "classical_projection"}) {
        ASSERT_NE(report.find(name), nullptr) << name;
        EXPECT_TRUE(report.find(name)->passed) << name;
    }
    EXPECT_TRUE(report.passed());
}

TEST(CheckSuite, SnapshotChecks) {
    const auto cfg = parse_config(kQuick);
    const fs::path dir = fresh_dir("snap");
    RunOptions ro;
    ro.out_dir = dir.string();
    run_scenario(cfg, ro);
    CheckOptions opt;
    opt.refinement_study = false;
    opt.snapshot = read_snapshot((dir / "final.snapshot").string());
    const auto report = check_suite(cfg, opt);
    ASSERT_NE(report.find("snapshot_within_envelope"), nullptr);
    EXPECT_TRUE(report.passed());
}

// ---------------------------------------------------------------------------
// CLI exit codes

#ifdef QKFP_CLI_PATH
namespace {
int run_cli(const std::string& args) {
    const std::string cmd = std::string(QKFP_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}
} // namespace

TEST(Cli, ExitCodes) {
    const fs::path dir = fresh_dir("cli");
    fs::create_directories(dir);
    const std::string good = (dir / "good.cfg").string();
    const std::string bad = (dir / "bad.cfg").string();
    std::ofstream(good) << kQuick;
    std::ofstream(bad) << kMinimal << "grid.nx = 16\ngrid.nx = 32\n";
    EXPECT_EQ(run_cli("run --quiet --config " + good + " --out " + (dir / "out").string()), 0);
    EXPECT_TRUE(fs::exists(dir / "out" / "diagnostics.csv"));
    EXPECT_EQ(run_cli("run --config " + bad), 2);
    EXPECT_EQ(run_cli("check --config " + bad), 2);
    EXPECT_EQ(run_cli("frobnicate"), 2);
    EXPECT_EQ(run_cli("equilibrium --kappa 1 --quiet"), 0);
    EXPECT_EQ(run_cli("contract --quiet --config " + good), 2);  // no companion declared
}
#endif
