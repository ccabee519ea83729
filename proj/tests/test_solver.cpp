#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "qkfp/functionals.hpp"
#include "qkfp/harness/rng.hpp"
#include "qkfp/solver.hpp"

using namespace qkfp;

namespace {

ModelParams fermions() { return ModelParams{-1, 1.0, 0.5, 2.0, std::nullopt, 1}; }
ModelParams bosons() { return ModelParams{1, 1.0, 0.5, 2.0, std::nullopt, 1}; }

/// beta(x, p) = 1 + 0.2 cos(2 pi x) + 0.3 sin(p): in the envelope, not a local equilibrium.
PhaseField generic_field(const GridSpec& g, int kappa) {
    return sample_field(g, [&](double x, double p) {
        return equilibrium_profile(1.0 + 0.2 * std::cos(kTwoPi * x) + 0.3 * std::sin(p), kappa, p);
    });
}

double max_rel_change(const PhaseField& a, const PhaseField& b) {
    double worst = 0.0;
    for (std::size_t k = 0; k < a.grid().size(); ++k)
        worst = std::max(worst, std::abs(a.values()[k] - b.values()[k]) / std::abs(b.values()[k]));
    return worst;
}

} // namespace

TEST(SolverConfig, Validation) {
    SolverConfig c;
    EXPECT_NO_THROW(c.validate());
    c.dt = 0.0;
    EXPECT_THROW(c.validate(), DomainError);
    c = SolverConfig{};
    c.transport_order = 3;
    EXPECT_THROW(c.validate(), DomainError);
    c = SolverConfig{};
    c.cfl_transport = 1.5;
    EXPECT_THROW(c.validate(), DomainError);
}

TEST(StepSchedule, DividingAndNonDividingHorizons) {
    SolverConfig c;
    c.dt = 0.1;
    c.t_end = 1.0;
    const StepSchedule s(c);
    EXPECT_EQ(s.steps, 10);
    EXPECT_TRUE(s.divides);
    EXPECT_EQ(s.step_size(10), 0.1);
    EXPECT_EQ(s.time(10), 1.0);
    c.t_end = 1.05;
    const StepSchedule r(c);
    EXPECT_EQ(r.steps, 11);
    EXPECT_FALSE(r.divides);
    EXPECT_NEAR(r.step_size(11), 0.05, 1e-15);
    EXPECT_EQ(r.time(11), 1.05);
}

TEST(Collision, ConservesMassPerStep) {
    const GridSpec g(8, 64, 8.0);
    for (int kappa : {-1, 0, 1}) {
        const auto mp = kappa == 1 ? bosons() : ModelParams{kappa, 1.0, 0.5, 2.0, std::nullopt, 1};
        const PhaseField f = generic_field(g, kappa);
        const PhaseField out = collide(f, mp, 1e-2, 0.45);
        EXPECT_NEAR(integrate_phase(out), integrate_phase(f), 1e-13 * integrate_phase(f)) << "kappa " << kappa;
    }
}

TEST(Collision, WellBalancedOnLocalEquilibria) {
    const GridSpec g(8, 64, 8.0);
    Lcg64 rng(3);
    for (int kappa : {-1, 0, 1}) {
        std::vector<double> beta(8);
        for (double& b : beta) b = rng.uniform(0.5, 2.0);
        const PhaseField eq = local_equilibrium(g, kappa, beta);
        const ModelParams mp{kappa, 1.0, 0.5, 2.0, std::nullopt, 1};
        EXPECT_LT(max_rel_change(collision_step(eq, mp, 1e-3), eq), 1e-13) << "kappa " << kappa;
        EXPECT_LT(max_rel_change(collide(eq, mp, 0.1, 0.45), eq), 1e-12) << "kappa " << kappa;
    }
}

TEST(Collision, DrivesFieldTowardLocalEquilibrium) {
    const GridSpec g(4, 64, 8.0);
    const auto mp = fermions();
    PhaseField f = generic_field(g, -1);
    const double d0 = dissipation(f, mp);
    // D decays at least like exp(-2t) (unit spectral gap of the momentum operator)
    f = collide(f, mp, 5.0, 0.45);
    EXPECT_LT(dissipation(f, mp), 1e-3 * d0);
}

TEST(Collision, NonFiniteInputIsASolverFault) {
    const GridSpec g(4, 16, 8.0);
    PhaseField f = generic_field(g, -1);
    f(1, 3) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(collision_step(f, fermions(), 1e-3), SolverFault);
}

TEST(Collision, NonPositiveValuesAreFlooredAndCounted) {
    const GridSpec g(4, 16, 8.0);
    PhaseField f = generic_field(g, 0);
    f(0, 0) = 0.0;
    SolverStats stats;
    const PhaseField out = collision_step(f, ModelParams{0, 1.0, 0.5, 2.0, std::nullopt, 1}, 1e-4, &stats);
    EXPECT_GE(stats.floor_events, 1);
    EXPECT_TRUE(out.all_finite());
}

TEST(Transport, ConservesMassAndFixesSpatiallyConstantData) {
    const GridSpec g(16, 32, 8.0);
    for (int order : {1, 2}) {
        const auto mp = fermions();
        const PhaseField f = generic_field(g, -1);
        const PhaseField out = transport_step(f, mp, 0.05, order);
        EXPECT_NEAR(integrate_phase(out), integrate_phase(f), 1e-14) << "order " << order;
        const PhaseField eq = global_equilibrium(g, -1, 1.3);
        EXPECT_TRUE(transport_step(eq, mp, 0.05, order) == eq) << "order " << order;
    }
}

TEST(Transport, LargeStepsAreSubcycled) {
    const GridSpec g(16, 32, 8.0);
    SolverStats stats;
    const PhaseField out = transport_step(generic_field(g, -1), fermions(), 0.1, 1, 0.9, &stats);
    EXPECT_GT(stats.transport_subcycled_rows, 0);
    EXPECT_GE(out.min_value(), 0.0);
}

TEST(Transport, ClassicalRowTranslatesBySpeed) {
    // kappa = 0: each row is linear advection with speed p; a full period returns the data (up to LLF diffusion)
    const GridSpec g(64, 8, 1.0);
    const ModelParams mp{0, 1.0, 0.5, 2.0, std::nullopt, 1};
    const PhaseField f = sample_field(g, [](double x, double p) { return maxwellian(p) * (1.0 + 0.1 * std::cos(kTwoPi * x)); });
    // p_center(7) = 0.875; after t = 1/0.875 the profile is back in place
    const PhaseField out = transport_step(f, mp, 1.0 / 0.875, 2, 0.9);
    double err = 0.0;
    for (int i = 0; i < g.nx(); ++i) err = std::max(err, std::abs(out(i, 7) - f(i, 7)) / f(i, 7));
    EXPECT_LT(err, 0.02);
}

TEST(Step, ConservesMassOverManySteps) {
    const GridSpec g(16, 32, 8.0);
    for (const auto& mp : {fermions(), bosons()}) {
        SolverConfig c;
        c.dt = 2e-3;
        c.t_end = 0.5;
        const PhaseField f0 = generic_field(g, mp.kappa);
        const PhaseField f = evolve(f0, mp, c);
        EXPECT_NEAR(integrate_phase(f), integrate_phase(f0), 1e-13 * integrate_phase(f0));
    }
}

TEST(Step, HomogeneousModeSkipsTransport) {
    const GridSpec g(8, 32, 8.0);
    SolverConfig c;
    c.dt = 1e-2;
    c.homogeneous = true;
    const auto mp = fermions();
    const PhaseField f = generic_field(g, -1);
    // rows evolve independently: x-dependence of the density is kept
    const auto rho0 = density(f);
    const auto rho1 = density(step(f, mp, c));
    for (std::size_t i = 0; i < rho0.size(); ++i) EXPECT_NEAR(rho1[i], rho0[i], 1e-14);
}

TEST(Evolve, SemigroupIsBitwise) {
    const GridSpec g(8, 16, 8.0);
    const auto mp = fermions();
    SolverConfig a;
    a.dt = 1e-2;
    a.t_end = 0.2;
    SolverConfig b = a;
    b.t_end = 0.3;
    SolverConfig ab = a;
    ab.t_end = 0.5;
    const PhaseField f0 = generic_field(g, -1);
    EXPECT_TRUE(evolve(evolve(f0, mp, a), mp, b) == evolve(f0, mp, ab));
}

TEST(Evolve, ObserverSeesStartSamplesAndEnd) {
    const GridSpec g(8, 16, 8.0);
    SolverConfig c;
    c.dt = 0.1;
    c.t_end = 0.75;
    std::vector<double> times;
    evolve(generic_field(g, -1), fermions(), c, [&](double t, const PhaseField&) { times.push_back(t); }, 3);
    ASSERT_EQ(times.size(), 4u);
    EXPECT_EQ(times[0], 0.0);
    EXPECT_NEAR(times[1], 0.3, 1e-15);
    EXPECT_NEAR(times[2], 0.6, 1e-15);
    EXPECT_EQ(times[3], 0.75);
}

TEST(Bounds, PinchedDataStaysInsideEnvelope) {
    const GridSpec g(16, 32, 8.0);
    const auto mp = fermions();
    // touches beta_minus and beta_plus at some cells
    const PhaseField f0 = sample_field(g, [](double x, double p) {
        return equilibrium_profile(1.25 + 0.75 * std::cos(kTwoPi * x + p), -1, p);
    });
    SolverConfig c;
    c.dt = 2e-3;
    c.t_end = 1.0;
    double worst = 0.0;
    evolve(f0, mp, c, [&](double, const PhaseField& f) { worst = std::max(worst, envelope_excess(f, mp)); });
    EXPECT_LE(worst, 5.0 * (g.dx() + g.dp() * g.dp()));
    EXPECT_LE(worst, 1e-14);
}

TEST(Bounds, ClampKeepsFieldInside) {
    const GridSpec g(4, 16, 8.0);
    const auto mp = fermions();
    PhaseField f = global_equilibrium(g, -1, 1.0);
    f(0, 8) = 0.99;
    f(1, 8) = 0.0;
    clamp_to_envelope(f, mp);
    EXPECT_EQ(envelope_excess(f, mp), 0.0);
}

TEST(Contraction, GenericPairL1DoesNotGrow) {
    const GridSpec g(16, 32, 8.0);
    const auto mp = fermions();
    PhaseField f = generic_field(g, -1);
    PhaseField h = sample_field(g, [](double x, double p) {
        return equilibrium_profile(1.2 + 0.3 * std::sin(kTwoPi * 2 * x) * std::cos(p), -1, p);
    });
    SolverConfig c;
    c.dt = 2e-3;
    const double l0 = l1_distance(f, h);
    for (int k = 1; k <= 250; ++k) {
        f = step(f, mp, c);
        h = step(h, mp, c);
        ASSERT_LE(l1_distance(f, h), l0 * (1.0 + 10.0 * c.dt * k * c.dt)) << "step " << k;
    }
}
