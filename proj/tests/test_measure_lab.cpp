#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "selkov/measure_lab.hpp"

using namespace selkov;

namespace {

LatticeState point(std::initializer_list<double> u, std::initializer_list<double> v) { return {Vector(u), Vector(v)}; }

EmpiricalMeasure cloud(std::mt19937_64& gen, std::size_t n, std::size_t sites, double shift = 0.0, double sd = 1.0) {
    std::normal_distribution<double> n01;
    std::vector<LatticeState> xs;
    for (std::size_t j = 0; j < n; ++j) {
        LatticeState x(sites);
        for (std::size_t i = 0; i < sites; ++i) {
            x.u[i] = shift + sd * n01(gen);
            x.v[i] = sd * n01(gen);
        }
        xs.push_back(std::move(x));
    }
    return EmpiricalMeasure::uniform(std::move(xs));
}

double dbl(const EmpiricalMeasure& a, const EmpiricalMeasure& b, DistanceMethod m = DistanceMethod::LPOracle) {
    return dual_lipschitz_distance(a, b, m).value;
}

}  // namespace

TEST(SecondMoment, PointMassesAndCloud) {
    EXPECT_EQ(second_moment(EmpiricalMeasure::dirac(LatticeState(3))), 0.0);
    const auto mu = EmpiricalMeasure::uniform({point({2, 0}, {0, 0}), point({0, 0}, {4, 0})});
    EXPECT_DOUBLE_EQ(second_moment(mu), 10.0);

    std::mt19937_64 gen(1);
    const auto c = cloud(gen, 300, 7);
    long double oracle = 0.0L;
    for (const auto& x : c.samples)
        for (std::size_t i = 0; i < 7; ++i) oracle += (long double)x.u[i] * x.u[i] + (long double)x.v[i] * x.v[i];
    oracle /= 300.0L;
    EXPECT_NEAR(second_moment(c), static_cast<double>(oracle), 1e-12 * static_cast<double>(oracle));
}

TEST(SecondMoment, EnergyWeighted) {
    ModelParams m;
    m.b1 = 3.0;
    m.b2 = 0.5;
    const auto mu = EmpiricalMeasure::dirac(point({2}, {1}));
    EXPECT_DOUBLE_EQ(second_moment(mu, m), 0.5 * 4 + 3.0 * 1);
}

TEST(TailMass, UnitVectorAndSupport) {
    const TruncationConfig t{6, Boundary::ZeroDirichlet};
    LatticeState e5 = LatticeState::zeros(t);
    e5.u[5 + t.half_width] = 1.0;
    EXPECT_DOUBLE_EQ(tail_mass(EmpiricalMeasure::dirac(e5), 3, t).hard, 1.0);

    LatticeState inner = LatticeState::zeros(t);
    for (int i = -2; i <= 2; ++i) inner.v[i + t.half_width] = 1.0 + i;
    EXPECT_EQ(tail_mass(EmpiricalMeasure::dirac(inner), 3, t).hard, 0.0);
    EXPECT_THROW(tail_mass(EmpiricalMeasure::dirac(inner), 7, t), ContractViolation);
    EXPECT_THROW(tail_mass(EmpiricalMeasure::dirac(inner), 0, t), ContractViolation);
}

TEST(TailMass, SandwichAndMonotone) {
    const TruncationConfig t{16, Boundary::ZeroDirichlet};
    std::mt19937_64 gen(2);
    for (int rep = 0; rep < 20; ++rep) {
        const auto mu = cloud(gen, 20, t.sites());
        double prev = std::numeric_limits<double>::infinity();
        for (int n = 1; n <= 16; ++n) {
            const auto tm = tail_mass(mu, n, t);
            EXPECT_LE(tm.hard, prev);
            prev = tm.hard;
            EXPECT_LE(tm.weighted, tm.hard * (1 + 1e-12));
            if (2 * n <= 16) {
                EXPECT_GE(tm.weighted, tail_mass(mu, 2 * n, t).hard * (1 - 1e-12));
            }
        }
    }
}

TEST(Distance, IdenticalMeasuresZero) {
    std::mt19937_64 gen(3);
    const auto mu = cloud(gen, 30, 2);
    EXPECT_NEAR(dbl(mu, mu), 0.0, 1e-12);
    EXPECT_NEAR(dbl(mu, mu, DistanceMethod::TransportDual), 0.0, 1e-12);
}

TEST(Distance, DiracClosedFormAgreesWithSolvers) {
    for (double d : {0.1, 1.0, 2.0, 10.0}) {
        const auto a = EmpiricalMeasure::dirac(point({0, 0}, {0, 0}));
        const auto b = EmpiricalMeasure::dirac(point({d * 0.6, 0}, {0, d * 0.8}));
        const double oracle = 2.0 * d / (2.0 + d);
        EXPECT_NEAR(dbl(a, b, DistanceMethod::ClosedFormDiracs), oracle, 1e-12);
        EXPECT_NEAR(dbl(a, b), oracle, 1e-9);
        EXPECT_NEAR(dbl(a, b, DistanceMethod::TransportDual), oracle, 1e-9);
    }
    EXPECT_NEAR(dbl(EmpiricalMeasure::dirac(point({0}, {0})), EmpiricalMeasure::dirac(point({2}, {0}))), 1.0, 1e-9);
}

TEST(Distance, ClosedFormNeedsDiracs) {
    std::mt19937_64 gen(4);
    EXPECT_THROW(dbl(cloud(gen, 3, 1), cloud(gen, 1, 1), DistanceMethod::ClosedFormDiracs), ContractViolation);
}

TEST(Distance, BoundedByTwoAndW1) {
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> shift(0, 6);
    for (int rep = 0; rep < 25; ++rep) {
        const auto mu = cloud(gen, 12, 2);
        const auto nu = cloud(gen, 15, 2, shift(gen));
        const double lp = dbl(mu, nu), td = dbl(mu, nu, DistanceMethod::TransportDual);
        const double w1 = wasserstein1(mu, nu);
        EXPECT_LE(lp, std::min(2.0, w1) + 1e-9);
        EXPECT_NEAR(lp, td, 1e-7);
    }
}

TEST(Distance, MetricAxioms) {
    std::mt19937_64 gen(6);
    for (int rep = 0; rep < 10; ++rep) {
        const auto a = cloud(gen, 10, 1), b = cloud(gen, 10, 1, 0.5), c = cloud(gen, 10, 1, 1.5);
        const double ab = dbl(a, b), ba = dbl(b, a), bc = dbl(b, c), ac = dbl(a, c);
        EXPECT_NEAR(ab, ba, 1e-9);
        EXPECT_LE(ac, ab + bc + 1e-9);
        EXPECT_GT(ab, 0.0);
    }
}

TEST(Distance, RandomTestFunctionsIsLowerBound) {
    std::mt19937_64 gen(7);
    const auto mu = cloud(gen, 20, 1), nu = cloud(gen, 20, 1, 1.0);
    DistanceOptions opt;
    opt.seed = 3;
    const auto est = dual_lipschitz_distance(mu, nu, DistanceMethod::RandomTestFunctions, opt);
    EXPECT_LE(est.value, dbl(mu, nu) + 1e-9);
    EXPECT_GT(est.value, 0.0);
    EXPECT_GE(est.error_bound, 0.0);
}

TEST(Distance, LpRefusesOverBudget) {
    std::mt19937_64 gen(8);
    const auto mu = cloud(gen, 150, 1), nu = cloud(gen, 150, 1);
    EXPECT_THROW(dbl(mu, nu), AtomBudgetExceeded);
    EXPECT_NO_THROW(dbl(mu, nu, DistanceMethod::TransportDual));
}

TEST(Distance, DimensionMismatchRejected) {
    EXPECT_THROW(dbl(EmpiricalMeasure::dirac(LatticeState(1)), EmpiricalMeasure::dirac(LatticeState(2))), ContractViolation);
}

TEST(Wasserstein, OneDimensionalSortedOracle) {
    std::mt19937_64 gen(9);
    for (int rep = 0; rep < 10; ++rep) {
        const auto mu = cloud(gen, 40, 1), nu = cloud(gen, 40, 1, 0.7, 2.0);
        // put all mass on u by zeroing v; then W1 is the mean gap of order statistics
        std::vector<LatticeState> a = mu.samples, b = nu.samples;
        std::vector<double> x, y;
        for (auto& s : a) { s.v[0] = 0; x.push_back(s.u[0]); }
        for (auto& s : b) { s.v[0] = 0; y.push_back(s.u[0]); }
        std::sort(x.begin(), x.end());
        std::sort(y.begin(), y.end());
        double oracle = 0;
        for (std::size_t k = 0; k < x.size(); ++k) oracle += std::abs(x[k] - y[k]) / 40.0;
        EXPECT_NEAR(wasserstein1(EmpiricalMeasure::uniform(a), EmpiricalMeasure::uniform(b)), oracle, 1e-10);
    }
}

TEST(Wasserstein, TranslationShiftsByNorm) {
    std::mt19937_64 gen(10);
    const auto mu = cloud(gen, 50, 3);
    std::vector<LatticeState> moved = mu.samples;
    const double c = 1.7;
    for (auto& x : moved) {
        x.u[0] += c * 0.6;
        x.v[2] -= c * 0.8;
    }
    EXPECT_NEAR(wasserstein1(mu, EmpiricalMeasure::uniform(moved)), c, 1e-10);
    EXPECT_NEAR(wasserstein1(mu, mu), 0.0, 1e-14);
}

TEST(LpSimplex, SmallProblem) {
    lp::Problem p(2, 2);
    p.a(0, 0) = 1; p.a(0, 1) = 2; p.b[0] = 4;
    p.a(1, 0) = 3; p.a(1, 1) = 1; p.b[1] = 6;
    p.c = {1, 1};
    const auto s = lp::maximize(p);
    ASSERT_EQ(s.status, lp::Status::Optimal);
    EXPECT_NEAR(s.value, 2.8, 1e-12);
    EXPECT_NEAR(s.x[0], 1.6, 1e-12);
    EXPECT_NEAR(s.x[1], 1.2, 1e-12);
}

TEST(LpSimplex, Unbounded) {
    lp::Problem p(1, 2);
    p.a(0, 0) = 1; p.a(0, 1) = -1;
    p.b[0] = 1;
    p.c = {0, 1};
    EXPECT_EQ(lp::maximize(p).status, lp::Status::Unbounded);
}

TEST(TransportSimplex, HandInstance) {
    // supplies (0.5, 0.5), demands (0.25, 0.75); column 0 is filled from row 0 and row 0 ships 0.25 at cost 3.
    const auto r = transport::solve({0.5, 0.5}, {0.25, 0.75}, {0, 3, 1, 0});
    ASSERT_TRUE(r.optimal);
    EXPECT_NEAR(r.cost, 0.25 * 0 + 0.25 * 3, 1e-12);
}

TEST(Varpi, DirectSubstitution) {
    ModelParams m;
    m.a1 = 2;
    m.a2 = 3;
    EXPECT_DOUBLE_EQ(compute_varpi(m, 0.25, [](double) { return 1.0; }, {0.0}), 1.0);
    EXPECT_DOUBLE_EQ(compute_varpi(m, 0.0, [](double) { return 5.0; }, {0.0}), 1.5);
}

TEST(Varpi, TimeVaryingDeltaMatchesDenseGrid) {
    ModelParams m;
    m.a1 = m.a2 = 3;
    auto dsq = [](double t) { return 1.0 + std::sin(t) * std::sin(t); };
    const double coarse = compute_varpi(m, 0.25, dsq, linspace(0.0, 2 * std::numbers::pi, 1001));
    const double exact = 3 - 0.5 - 4 * 0.0625 * 2.0 * 2.0;
    EXPECT_NEAR(coarse, exact, 0.5 * 1e-5);
    EXPECT_GE(coarse, exact - 1e-12);
}

TEST(Varpi, FromForcingSpec) {
    ModelParams m;
    m.a1 = 2;
    m.a2 = 3;
    ForcingSpec f;
    f.alpha = 0.25;
    NoiseMode mode;
    mode.delta = constant_field(0.5);
    f.modes = {mode};
    const TruncationConfig t{1, Boundary::ZeroDirichlet};  // 3 sites, ||delta||^2 = 0.75
    EXPECT_DOUBLE_EQ(compute_varpi(m, f, t, {0.0, 1.0}), 2 - 0.5 - 4 * 0.0625 * 0.75 * 2);
}

TEST(RTau, ConstantIntegrand) {
    for (double c : {0.5, 3.0}) {
        const auto r = weighted_past_integral(1.0, 1.0, [c](double) { return c; }, 1e-3);
        EXPECT_NEAR(r.value, c, 1e-6 * c);
        EXPECT_LT(r.error_bound, 1e-6);
    }
}

TEST(RTau, ZeroForcingAndRefusals) {
    ForcingSpec f;
    const TruncationConfig t{2, Boundary::ZeroDirichlet};
    EXPECT_EQ(compute_R_tau(0.0, 1.0, f, t, 0.01).value, 0.0);
    EXPECT_THROW(compute_R_tau(0.0, 0.0, f, t, 0.01), HypothesisViolated);
    EXPECT_THROW(weighted_past_integral(0.0, 1.0, [](double s) { return std::exp(-2.0 * s); }, 0.01), NotTempered);
}

TEST(RTau, ExponentialForcingClosedForm) {
    // f = e^{-t}, h = cos 2t, kappa = sin 2t, delta = e^{-t^2}, single site, varpi = 5, tau = 0.
    ForcingSpec f;
    f.f1 = SiteField{{FieldTerm{1.0, {EnvelopeKind::Exp, 1.0, 0.0}, {}}}};
    f.f2 = f.f1;
    NoiseMode m;
    m.h = SiteField{{FieldTerm{1.0, {EnvelopeKind::Cos, 2.0, 0.0}, {}}}};
    m.kappa = SiteField{{FieldTerm{1.0, {EnvelopeKind::Sin, 2.0, 0.0}, {}}}};
    m.delta = SiteField{{FieldTerm{1.0, {EnvelopeKind::Gaussian, 1.0, 0.0}, {}}}};
    f.modes = {m};
    const TruncationConfig t{0, Boundary::Periodic};
    // int_0^inf e^{-5r} (2 e^{2r} + 1 + e^{-2 r^2}) dr
    const double gauss = std::exp(25.0 / 8.0) * std::sqrt(std::numbers::pi / 8.0) * std::erfc(5.0 / (2.0 * std::numbers::sqrt2));
    const double oracle = 2.0 / 3.0 + 1.0 / 5.0 + gauss;
    EXPECT_NEAR(compute_R_tau(0.0, 5.0, f, t, 1e-4).value, oracle, 1e-6 * oracle);
}

TEST(RTau, QuadraticInAmplitude) {
    ForcingSpec f;
    f.f1 = SiteField{{FieldTerm{1.0, {EnvelopeKind::Cos, 1.0, 0.0}, {ProfileKind::ExpDecay, 1.0, 0}}}};
    NoiseMode m;
    m.h = constant_field(0.3);
    m.delta = constant_field(0.2);
    f.modes = {m};
    auto g = f;
    const double s = 2.5;
    g.f1.terms[0].amplitude *= s;
    g.modes[0].h.terms[0].amplitude *= s;
    g.modes[0].delta.terms[0].amplitude *= s;
    const TruncationConfig t{3, Boundary::ZeroDirichlet};
    const double a = compute_R_tau(0.0, 1.0, f, t, 1e-3).value;
    const double b = compute_R_tau(0.0, 1.0, g, t, 1e-3).value;
    EXPECT_NEAR(b / a, s * s, 1e-10);
}

TEST(AbsorbingRadius, ZeroForcingAndViolation) {
    ModelParams m;
    m.a1 = m.a2 = 2;
    ForcingSpec f;
    const TruncationConfig t{1, Boundary::ZeroDirichlet};
    const auto rep = compute_absorbing_radius(0.0, m, f, t, 3.0, 0.01);
    EXPECT_TRUE(rep.hypothesis_ok);
    EXPECT_EQ(rep.L1_tau, 0.0);
    EXPECT_EQ(rep.K_radius, 0.0);
    m.a1 = 0.4;
    EXPECT_FALSE(compute_absorbing_radius(0.0, m, f, t, 3.0, 0.01).hypothesis_ok);
}
