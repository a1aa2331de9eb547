#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "selkov/integrator.hpp"
#include "selkov/measure_lab.hpp"

using namespace selkov;

namespace {

const TruncationConfig kSingle{0, Boundary::Periodic};

SystemSpec demo_system() {
    SystemSpec s;
    s.params = ModelParams{1.0, 1.0, 2.5, 1.0, 1.0, 1.0, 1, {}, false};
    s.forcing.f1 = SiteField{{FieldTerm{1.0, {EnvelopeKind::Exp, 1.0, 0.0}, {}}}};
    s.forcing.f2 = s.forcing.f1;
    s.trunc = kSingle;
    return s;
}

// Single site, one mode with constant kappa and q(x, y) = delta * x * g(y).
SystemSpec jump_system(JumpFactor factor) {
    SystemSpec s = demo_system();
    NoiseMode m;
    m.kappa = constant_field(0.7);
    m.delta = constant_field(0.4);
    m.q = JumpKernel{StateKernel{{}, {0.0, 1.0, 0.0}}, factor};
    s.forcing.modes = {m};
    s.levy.poisson_intensity = 2.0;
    s.levy.truncate_small = true;
    s.params.lambda = {0.0, 0.3, 0.0, 0.2};
    return s;
}

// E[1/(1+y^2)] under N(0,1) conditioned on |y| < 1, by Simpson's rule.
double truncated_lorentzian_mean() {
    const int n = 20000;
    double num = 0.0, den = 0.0;
    for (int k = 0; k <= n; ++k) {
        const double y = -1.0 + 2.0 * k / n;
        const double w = (k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
        const double phi = std::exp(-0.5 * y * y);
        num += w * phi / (1.0 + y * y);
        den += w * phi;
    }
    return num / den;
}

}  // namespace

TEST(EmStep, DeterministicHandValue) {
    LatticeState x(1);
    x.u = {2.0};
    const StepNoise none{{}, {}};
    const auto y = em_step(x, 0.0, 0.001, demo_system(), none);
    EXPECT_NEAR(y.u[0], 1.988, 1e-15);
    EXPECT_NEAR(y.v[0], 0.009, 1e-15);
}

TEST(EmStep, ZeroStateZeroForcingUnchanged) {
    SystemSpec s;
    s.trunc = {3, Boundary::ZeroDirichlet};
    s.params.lambda = NoiseIntensity::diagonal(0.5);
    NoiseMode m;
    m.h = constant_field(0.0);
    m.delta = constant_field(1.0);
    s.forcing.modes = {m};
    const auto x = LatticeState::zeros(s.trunc);
    EXPECT_EQ(em_step(x, 0.3, 0.01, s, StepNoise{{0.0}, JumpBatch(1)}), x);
}

TEST(EmStep, RejectsBadInput) {
    LatticeState x(1);
    EXPECT_THROW(em_step(x, 0.0, 0.0, demo_system(), {}), ContractViolation);
    x.u = {NAN};
    EXPECT_THROW(em_step(x, 0.0, 0.001, demo_system(), {}), ContractViolation);
}

TEST(EmStep, CompensatorDiscrepancyOneJump) {
    const double dt = 0.01, y = 0.5, u0 = 1.5, v0 = -1.0;
    LatticeState x(1);
    x.u = {u0};
    x.v = {v0};
    const StepNoise noise{{0.0}, JumpBatch{{y}}};
    for (auto [factor, g, Eg] : {std::tuple{JumpFactor::One, 1.0, 1.0},
                                 std::tuple{JumpFactor::Lorentzian, 1.0 / 1.25, truncated_lorentzian_mean()}}) {
        auto lit = jump_system(factor);
        lit.variant = SchemeVariant::Section7Literal;
        auto comp = lit;
        comp.variant = SchemeVariant::CompensatedForm;
        const auto a = em_step(x, 0.0, dt, lit, noise);
        const auto b = em_step(x, 0.0, dt, comp, noise);
        const double kappa = 0.7, delta = 0.4, rate = 2.0 * dt;
        // literal: (kappa + delta x g) y; compensated: (kappa + delta x g) - rate (kappa + delta x E[g])
        auto diff = [&](double lam, double s) {
            const double lit_term = (kappa + delta * s * g) * y;
            const double comp_term = (kappa + delta * s * g) - rate * (kappa + delta * s * Eg);
            return lam * (lit_term - comp_term);
        };
        EXPECT_NEAR(a.u[0] - b.u[0], diff(0.3, u0), 1e-9);
        EXPECT_NEAR(a.v[0] - b.v[0], diff(0.2, v0), 1e-9);
    }
}

TEST(EmStep, NoJumpsCompensatorOnly) {
    auto s = jump_system(JumpFactor::One);
    LatticeState x(1);
    x.u = {1.0};
    const StepNoise none{{0.0}, JumpBatch(1)};
    auto lit = s;
    lit.variant = SchemeVariant::Section7Literal;
    const auto a = em_step(x, 0.0, 0.01, lit, none);
    const auto b = em_step(x, 0.0, 0.01, s, none);
    EXPECT_NEAR(a.u[0] - b.u[0], 0.3 * 0.02 * (0.7 + 0.4 * 1.0), 1e-14);
}

TEST(EmStep, BlowUpReported) {
    LatticeState x(1);
    x.u = {1e120};
    x.v = {1e120};
    EXPECT_THROW(em_step(x, 0.0, 0.001, demo_system(), {}), BlowUp);
}

TEST(TimeGridTest, DivisibilityAndIndex) {
    const auto g = TimeGrid::make(0.0, 10.0, 0.001);
    EXPECT_EQ(g.n_steps, 10000);
    EXPECT_EQ(g.time(g.n_steps), 10.0);
    EXPECT_EQ(g.index_of(0.0105), 10);
    EXPECT_THROW(TimeGrid::make(0.0, 1.0, 0.3), ContractViolation);
    EXPECT_THROW(g.index_of(11.0), ContractViolation);
}

TEST(IntegratePath, ZeroStaysZero) {
    SystemSpec s;
    s.trunc = {4, Boundary::ZeroDirichlet};
    const auto grid = TimeGrid::make(0.0, 1.0, 0.01);
    const auto rec = integrate_path(LatticeState::zeros(s.trunc), grid, s, 1, {0.0, 0.5, 1.0});
    ASSERT_EQ(rec.states.size(), 3u);
    for (const auto& x : rec.states) EXPECT_EQ(x, LatticeState::zeros(s.trunc));
    EXPECT_FALSE(rec.blew_up);
}

TEST(IntegratePath, DtHalvingEndpointShift) {
    LatticeState x(1);
    x.u = {2.0};
    const auto s = demo_system();
    const auto a = integrate_path(x, TimeGrid::make(0.0, 10.0, 0.001), s, 0, {10.0});
    const auto b = integrate_path(x, TimeGrid::make(0.0, 10.0, 0.0005), s, 0, {10.0});
    ASSERT_FALSE(a.blew_up);
    const double shift = std::max(std::abs(a.states[0].u[0] - b.states[0].u[0]), std::abs(a.states[0].v[0] - b.states[0].v[0]));
    EXPECT_LT(shift, 1e-3);
    EXPECT_GT(shift, 0.0);
}

TEST(IntegratePath, EnergyDecreasesUnforced) {
    SystemSpec s;
    s.params = ModelParams{0.5, 0.8, 2.0, 1.5, 1.0, 0.7, 1, {}, false};
    s.trunc = {3, Boundary::ZeroDirichlet};
    const double dt = 0.001;
    std::mt19937_64 gen(21);
    std::normal_distribution<double> n01;
    LatticeState x = LatticeState::zeros(s.trunc);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x.u[i] = n01(gen);
        x.v[i] = n01(gen);
    }
    const Vector zero(x.size(), 0.0);
    Stepper st(s);
    const StepNoise none{{}, {}};
    for (int n = 0; n < 2000; ++n) {
        const auto d = eval_drift(x, s.params, s.trunc, zero, zero);
        // E(x + dt d) - E(x) = dt dE/dt + dt^2 (b2 |du|^2 + b1 |dv|^2), with dE/dt <= 0.
        const double slack = dt * dt * (s.params.b2 * norm_sq(d.du) + s.params.b1 * norm_sq(d.dv));
        const double before = energy(x, s.params);
        st.step(x, n * dt, dt, none);
        ASSERT_LE(energy(x, s.params) - before, slack * (1 + 1e-9) + 1e-15) << "step " << n;
    }
}

TEST(Ensemble, PointMassNoNoise) {
    const auto s = demo_system();
    LatticeState x(1);
    x.u = {2.0};
    EnsembleConfig cfg;
    cfg.initial_law = PointMass{x};
    const auto grid = TimeGrid::make(0.0, 1.0, 0.001);
    const auto run = integrate_ensemble(cfg, grid, s, {1.0});
    const auto path = integrate_path(x, grid, s, 0, {1.0});
    ASSERT_EQ(run.measures[0].size(), 1u);
    EXPECT_EQ(run.measures[0].samples[0], path.states[0]);
}

TEST(Ensemble, OrnsteinUhlenbeckStationaryVariance) {
    SystemSpec s;
    s.params = ModelParams{1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1, {0.5, 0.0, 0.0, 0.0}, true};
    s.trunc = kSingle;
    NoiseMode m;
    m.h = constant_field(1.0);
    m.delta = constant_field(0.0);
    s.forcing.modes = {m};
    EnsembleConfig cfg;
    cfg.M = 10000;
    cfg.seed.master_seed = 5;
    cfg.initial_law = PointMass{LatticeState(1)};
    const auto run = integrate_ensemble(cfg, TimeGrid::make(0.0, 6.0, 0.005), s, {6.0});
    double s2 = 0.0;
    for (const auto& x : run.measures[0].samples) s2 += x.u[0] * x.u[0];
    const double oracle = 0.5 * 0.5 / (2.0 * 1.0);
    EXPECT_NEAR(s2 / cfg.M, oracle, 0.05 * oracle);
}

TEST(Ensemble, ThreadCountDoesNotChangeResult) {
    SystemSpec s = jump_system(JumpFactor::Lorentzian);
    s.forcing.modes[0].h = constant_field(0.5);
    s.params.lambda = NoiseIntensity::diagonal(0.4);
    s.trunc = {2, Boundary::ZeroDirichlet};
    EnsembleConfig cfg;
    cfg.M = 37;
    cfg.seed.master_seed = 3;
    cfg.initial_law = GaussianCloud{LatticeState::zeros(s.trunc), 1.0};
    const auto grid = TimeGrid::make(0.0, 0.5, 0.01);
    const auto a = integrate_ensemble(cfg, grid, s, {0.25, 0.5}, 1);
    const auto b = integrate_ensemble(cfg, grid, s, {0.25, 0.5}, 4);
    for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(a.measures[j].samples, b.measures[j].samples);
}

TEST(Ensemble, CommonNoiseIgnoresLambdaInKey) {
    EnsembleConfig cfg;
    cfg.seed.master_seed = 9;
    cfg.common_noise = true;
    EXPECT_EQ(ensemble_path_key(cfg, 4, NoiseIntensity::diagonal(0.1), 0.0),
              ensemble_path_key(cfg, 4, NoiseIntensity::diagonal(0.8), -3.0));
    cfg.common_noise = false;
    EXPECT_NE(ensemble_path_key(cfg, 4, NoiseIntensity::diagonal(0.1), 0.0),
              ensemble_path_key(cfg, 4, NoiseIntensity::diagonal(0.8), 0.0));
}

TEST(Pullback, ZeroHorizonIsIdentity) {
    SystemSpec s = demo_system();
    EnsembleConfig cfg;
    cfg.M = 5;
    cfg.initial_law = GaussianCloud{LatticeState(1), 2.0};
    const auto run = pullback_ensemble(1.0, 0.0, 0.01, cfg, s);
    ASSERT_EQ(run.measures[0].size(), 5u);
    for (std::size_t m = 0; m < 5; ++m)
        EXPECT_EQ(run.measures[0].samples[m], sample_initial(cfg.initial_law, ensemble_path_key(cfg, m, {}, 1.0)));
    EXPECT_THROW(pullback_ensemble(1.0, -1.0, 0.01, cfg, s), ContractViolation);
}

TEST(Pullback, StartsAtTauMinusHorizon) {
    SystemSpec s = demo_system();
    LatticeState x(1);
    x.u = {2.0};
    EnsembleConfig cfg;
    cfg.initial_law = PointMass{x};
    const auto run = pullback_ensemble(3.0, 1.0, 0.001, cfg, s);
    const auto path = integrate_path(x, TimeGrid::make(2.0, 3.0, 0.001), s, 0, {3.0});
    EXPECT_EQ(run.measures[0].samples[0], path.states[0]);
    EXPECT_EQ(run.measures[0].origin.tau, 3.0);
}
