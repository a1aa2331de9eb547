#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "selkov/lattice_model.hpp"

using namespace selkov;

namespace {

TruncationConfig zd(int N) { return {N, Boundary::ZeroDirichlet}; }
TruncationConfig per(int N) { return {N, Boundary::Periodic}; }

// Dense tridiagonal matrix of A, built row by row from its definition.
std::vector<std::vector<double>> dense_A(const TruncationConfig& t) {
    const std::size_t n = t.sites();
    std::vector<std::vector<double>> M(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        M[i][i] += 2.0;
        if (i > 0) M[i][i - 1] -= 1.0;
        else if (t.boundary == Boundary::Periodic) M[i][n - 1] -= 1.0;
        if (i + 1 < n) M[i][i + 1] -= 1.0;
        else if (t.boundary == Boundary::Periodic) M[i][0] -= 1.0;
    }
    return M;
}

Vector matvec(const std::vector<std::vector<double>>& M, const Vector& x) {
    Vector y(x.size(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = 0; j < x.size(); ++j) y[i] += M[i][j] * x[j];
    return y;
}

}  // namespace

TEST(ApplyA, UnitVectorAtOrigin) {
    Vector e(5, 0.0);
    e[2] = 1.0;
    EXPECT_EQ(apply_A(e, zd(2)), (Vector{0, -1, 2, -1, 0}));
}

TEST(ApplyA, PeriodicAnnihilatesConstants) {
    EXPECT_EQ(apply_A({1, 1, 1}, per(1)), (Vector{0, 0, 0}));
}

TEST(ApplyA, MatchesDenseMatrix) {
    EXPECT_EQ(apply_A({1, 2, 4}, zd(1)), (Vector{0, -1, 6}));
    std::mt19937_64 gen(3);
    std::normal_distribution<double> n01;
    for (auto t : {zd(6), per(6), per(0)}) {
        Vector x(t.sites());
        for (auto& e : x) e = n01(gen);
        const Vector a = apply_A(x, t), b = matvec(dense_A(t), x);
        for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-13);
    }
}

TEST(ApplyB, ForwardDifference) {
    // Indices -2..1; the entries at -1, 0, 1 are 1, -1, 0.
    EXPECT_EQ(apply_B({0, 1, 0}, zd(1)), (Vector{0, 1, -1, 0}));
    EXPECT_EQ(apply_B({2, 0, 0}, zd(1)), (Vector{2, -2, 0, 0}));
    EXPECT_EQ(apply_B({3, 3, 3, 3, 3}, per(2)), (Vector(5, 0.0)));
}

TEST(ApplyB, InnerProductIdentity) {
    std::mt19937_64 gen(11);
    std::normal_distribution<double> n01;
    for (auto t : {zd(5), per(5), zd(0), per(0)}) {
        for (int rep = 0; rep < 50; ++rep) {
            Vector u(t.sites());
            for (auto& e : u) e = n01(gen);
            const double lhs = dot(apply_A(u, t), u);
            const double rhs = norm_sq(apply_B(u, t));
            EXPECT_NEAR(lhs, rhs, 1e-12 * std::max(1.0, std::abs(rhs)));
        }
    }
}

TEST(ApplyA, RejectsWrongLength) {
    EXPECT_THROW(apply_A({1, 2}, zd(1)), ContractViolation);
}

TEST(Nonlinearity, FAndG) {
    LatticeState s(1);
    s.u = {2};
    s.v = {3};
    EXPECT_DOUBLE_EQ(eval_F(s, 1)[0], 12.0);
    s.u = {-2};
    EXPECT_DOUBLE_EQ(eval_F(s, 1)[0], 12.0);
    s.v = {0};
    EXPECT_DOUBLE_EQ(eval_F(s, 1)[0], 0.0);
    EXPECT_DOUBLE_EQ(eval_G({2}, 1)[0], 8.0);
    EXPECT_DOUBLE_EQ(eval_G({-2}, 1)[0], -8.0);
}

TEST(Nonlinearity, PowerBySquaringMatchesProduct) {
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> u(-3, 3);
    for (int rep = 0; rep < 200; ++rep) {
        const double x = u(gen);
        double naive = 1.0;
        for (int k = 0; k < 5; ++k) naive *= x;
        EXPECT_NEAR(eval_G({x}, 2)[0], naive, 1e-12 * std::max(1.0, std::abs(naive)));
    }
}

TEST(Drift, SingleSiteHandValue) {
    ModelParams m{1.0, 1.0, 2.5, 1.0, 1.0, 1.0, 1, {}, false};
    LatticeState s(1);
    s.u = {2.0};
    s.v = {0.0};
    const auto d = eval_drift(s, m, per(0), {1.0}, {1.0});
    EXPECT_DOUBLE_EQ(d.du[0], -12.0);
    EXPECT_DOUBLE_EQ(d.dv[0], 9.0);
}

TEST(Drift, ZeroStateZeroForcing) {
    ModelParams m;
    const auto t = zd(3);
    const Vector z(t.sites(), 0.0);
    const auto d = eval_drift(LatticeState::zeros(t), m, t, z, z);
    for (std::size_t i = 0; i < z.size(); ++i) {
        EXPECT_EQ(d.du[i], 0.0);
        EXPECT_EQ(d.dv[i], 0.0);
    }
}

TEST(Drift, OddUnderStateReflection) {
    ModelParams m{0.7, 1.3, 2.0, 1.5, 0.8, 1.1, 2, {}, false};
    const auto t = zd(4);
    const Vector z(t.sites(), 0.0);
    std::mt19937_64 gen(7);
    std::normal_distribution<double> n01;
    for (int rep = 0; rep < 20; ++rep) {
        LatticeState s(t.sites()), r(t.sites());
        for (std::size_t i = 0; i < t.sites(); ++i) {
            s.u[i] = n01(gen);
            s.v[i] = n01(gen);
            r.u[i] = -s.u[i];
            r.v[i] = -s.v[i];
        }
        const auto a = eval_drift(s, m, t, z, z), b = eval_drift(r, m, t, z, z);
        for (std::size_t i = 0; i < t.sites(); ++i) {
            EXPECT_NEAR(a.du[i], -b.du[i], 1e-12 * (1 + std::abs(a.du[i])));
            EXPECT_NEAR(a.dv[i], -b.dv[i], 1e-12 * (1 + std::abs(a.dv[i])));
        }
    }
}

TEST(Drift, NonFiniteRaisesBlowUp) {
    ModelParams m;
    LatticeState s(1);
    s.u = {1e200};
    s.v = {1e200};
    EXPECT_THROW(eval_drift(s, m, per(0), {0.0}, {0.0}), BlowUp);
}

TEST(Energy, Values) {
    ModelParams m;
    EXPECT_EQ(energy(LatticeState::zeros(zd(2)), m), 0.0);
    LatticeState s(1);
    s.u = {2};
    s.v = {3};
    EXPECT_DOUBLE_EQ(energy(s, m), 13.0);
    m.b1 = 0.5;
    m.b2 = 2.0;
    std::mt19937_64 gen(9);
    std::normal_distribution<double> n01;
    LatticeState r(33);
    for (std::size_t i = 0; i < 33; ++i) {
        r.u[i] = n01(gen);
        r.v[i] = n01(gen);
    }
    double oracle = 0.0;
    for (std::size_t i = 33; i-- > 0;) oracle += 2.0 * r.u[i] * r.u[i] + 0.5 * r.v[i] * r.v[i];
    EXPECT_NEAR(energy(r, m), oracle, 1e-12 * oracle);
}

TEST(SignInequality, EdgeCasesAndSweep) {
    EXPECT_TRUE(check_sign_inequality(0.0, 5.0, 1, 1.0, 1.0));
    EXPECT_TRUE(check_sign_inequality(1.0, 1.0, 1, 1.0, 1.0));
    std::mt19937_64 gen(13);
    std::uniform_real_distribution<double> u(-10, 10), b(0.1, 5);
    for (int rep = 0; rep < 20000; ++rep)
        ASSERT_TRUE(check_sign_inequality(u(gen), u(gen), 1 + rep % 3, b(gen), b(gen)));
}

TEST(Lipschitz, RandomPairsWithinBall) {
    const auto t = zd(2);
    std::mt19937_64 gen(17);
    std::uniform_real_distribution<double> u(-1, 1);
    auto random_in_ball = [&](double n) {
        LatticeState s(t.sites());
        for (std::size_t i = 0; i < t.sites(); ++i) {
            s.u[i] = u(gen);
            s.v[i] = u(gen);
        }
        const double r = std::sqrt(norm_sq(s.u) + norm_sq(s.v));
        const double scale = n * std::abs(u(gen)) / r;
        for (std::size_t i = 0; i < t.sites(); ++i) {
            s.u[i] *= scale;
            s.v[i] *= scale;
        }
        return s;
    };
    for (double n : {1.0, 2.0}) {
        const auto c = local_lipschitz_constants(n, 1);
        for (int rep = 0; rep < 2000; ++rep) {
            const auto a = random_in_ball(n), b = random_in_ball(n);
            const Vector Fa = eval_F(a, 1), Fb = eval_F(b, 1), Ga = eval_G(a.u, 1), Gb = eval_G(b.u, 1);
            double dF = 0, dG = 0, du = 0, dv = 0;
            for (std::size_t i = 0; i < t.sites(); ++i) {
                dF += (Fa[i] - Fb[i]) * (Fa[i] - Fb[i]);
                dG += (Ga[i] - Gb[i]) * (Ga[i] - Gb[i]);
                du += (a.u[i] - b.u[i]) * (a.u[i] - b.u[i]);
                dv += (a.v[i] - b.v[i]) * (a.v[i] - b.v[i]);
            }
            ASSERT_LE(dF, c.c1 * (du + dv) * (1 + 1e-12));
            ASSERT_LE(dG, c.c2 * du * (1 + 1e-12));
        }
    }
}

TEST(Params, ViolationsNamed) {
    ModelParams m;
    m.a1 = -1;
    m.p = 0;
    m.lambda.eps1 = 1.5;
    const auto v = violations(m);
    ASSERT_EQ(v.size(), 3u);
    EXPECT_EQ(v[0], "a1 must be positive");
    EXPECT_NE(v[1].find("p must be"), std::string::npos);
    EXPECT_NE(v[2].find("lambda.eps1"), std::string::npos);
}

TEST(Params, LinearControlNeedsZeroB) {
    ModelParams m;
    m.linear_control = true;
    EXPECT_EQ(violations(m).size(), 2u);
    m.b1 = m.b2 = 0.0;
    EXPECT_TRUE(violations(m).empty());
}
