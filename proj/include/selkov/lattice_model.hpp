#pragma once

// Deterministic skeleton of the reversible Selkov lattice: state on a finite
// symmetric window, the discrete operators A and B, the nonlinearities F and
// G, the drift, the Lyapunov energy and the algebraic inequalities that drive
// dissipativity.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace selkov {

using Vector = std::vector<double>;

/// Raised when a caller breaks a documented precondition (length mismatch,
/// index out of window, ...).
class ContractViolation : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A non-finite value appeared in the state or the drift.
class BlowUp : public std::runtime_error {
public:
    BlowUp(std::size_t site, long step)
        : std::runtime_error("non-finite value at site " + std::to_string(site) +
                             (step >= 0 ? " (step " + std::to_string(step) + ")" : std::string{})),
          site_(site), step_(step) {}

    std::size_t site() const noexcept { return site_; }
    long step() const noexcept { return step_; }

private:
    std::size_t site_;
    long step_;
};

struct NoiseIntensity {
    double eps1 = 0.0;
    double eps2 = 0.0;
    double gamma1 = 0.0;
    double gamma2 = 0.0;

    static NoiseIntensity diagonal(double c) { return {c, c, c, c}; }

    bool is_deterministic() const noexcept {
        return eps1 == 0.0 && eps2 == 0.0 && gamma1 == 0.0 && gamma2 == 0.0;
    }

    bool operator==(const NoiseIntensity&) const = default;
};

struct ModelParams {
    double d1 = 1.0;
    double d2 = 1.0;
    double a1 = 1.0;
    double a2 = 1.0;
    double b1 = 1.0;
    double b2 = 1.0;
    int p = 1;
    NoiseIntensity lambda{};
    // Linear control model: b1 = b2 = 0 is admitted (and required).
    bool linear_control = false;

    bool operator==(const ModelParams&) const = default;
};

/// Every physics violation of `m`, one message per offending field.
inline std::vector<std::string> violations(const ModelParams& m) {
    std::vector<std::string> out;
    auto positive = [&](double x, const char* name) {
        if (!(x > 0.0) || !std::isfinite(x)) out.push_back(std::string(name) + " must be positive");
    };
    positive(m.d1, "d1");
    positive(m.d2, "d2");
    positive(m.a1, "a1");
    positive(m.a2, "a2");
    if (m.linear_control) {
        if (m.b1 != 0.0) out.push_back("b1 must be zero in the linear control model");
        if (m.b2 != 0.0) out.push_back("b2 must be zero in the linear control model");
    } else {
        positive(m.b1, "b1");
        positive(m.b2, "b2");
    }
    if (m.p < 1) out.push_back("p must be an integer >= 1");
    auto unit = [&](double x, const char* name) {
        if (!(x >= 0.0 && x <= 1.0)) out.push_back(std::string(name) + " must lie in [0,1]");
    };
    unit(m.lambda.eps1, "lambda.eps1");
    unit(m.lambda.eps2, "lambda.eps2");
    unit(m.lambda.gamma1, "lambda.gamma1");
    unit(m.lambda.gamma2, "lambda.gamma2");
    return out;
}

enum class Boundary { ZeroDirichlet, Periodic };

/// Symmetric window {-N, ..., N}. N = 0 is the isolated single site; under the
/// periodic rule A vanishes there and the system reduces to the scalar ODE pair.
struct TruncationConfig {
    int half_width = 1;
    Boundary boundary = Boundary::ZeroDirichlet;

    std::size_t sites() const noexcept { return static_cast<std::size_t>(2 * half_width + 1); }
    /// Lattice index i of storage slot k.
    int lattice_index(std::size_t k) const noexcept { return static_cast<int>(k) - half_width; }
    std::size_t slot(int i) const {
        if (i < -half_width || i > half_width) throw ContractViolation("site outside window");
        return static_cast<std::size_t>(i + half_width);
    }

    bool operator==(const TruncationConfig&) const = default;
};

struct LatticeState {
    Vector u;
    Vector v;

    LatticeState() = default;
    explicit LatticeState(std::size_t n) : u(n, 0.0), v(n, 0.0) {}
    LatticeState(Vector uu, Vector vv) : u(std::move(uu)), v(std::move(vv)) {
        if (u.size() != v.size()) throw ContractViolation("u and v must have equal length");
    }
    static LatticeState zeros(const TruncationConfig& t) { return LatticeState(t.sites()); }

    std::size_t size() const noexcept { return u.size(); }

    bool finite() const noexcept {
        auto ok = [](double x) { return std::isfinite(x); };
        return std::all_of(u.begin(), u.end(), ok) && std::all_of(v.begin(), v.end(), ok);
    }

    bool operator==(const LatticeState&) const = default;
};

namespace detail {

inline void require_length(std::size_t n, const TruncationConfig& t) {
    if (n != t.sites())
        throw ContractViolation("vector length " + std::to_string(n) + " does not match window of " +
                                std::to_string(t.sites()) + " sites");
}

inline double neighbour(const Vector& x, std::ptrdiff_t k, Boundary b) {
    const auto n = static_cast<std::ptrdiff_t>(x.size());
    if (k >= 0 && k < n) return x[static_cast<std::size_t>(k)];
    if (b == Boundary::ZeroDirichlet) return 0.0;
    return x[static_cast<std::size_t>(((k % n) + n) % n)];
}

}  // namespace detail

/// x^k for k >= 0 by repeated squaring.
inline double ipow(double x, int k) noexcept {
    double result = 1.0;
    double base = x;
    unsigned e = static_cast<unsigned>(k);
    while (e != 0) {
        if (e & 1u) result *= base;
        base *= base;
        e >>= 1;
    }
    return result;
}

/// (Au)_i = -u_{i-1} + 2u_i - u_{i+1}
inline Vector apply_A(const Vector& x, const TruncationConfig& t) {
    detail::require_length(x.size(), t);
    Vector out(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
        const auto kk = static_cast<std::ptrdiff_t>(k);
        out[k] = -detail::neighbour(x, kk - 1, t.boundary) + 2.0 * x[k] -
                 detail::neighbour(x, kk + 1, t.boundary);
    }
    return out;
}

/// (Bu)_i = u_{i+1} - u_i on the support of Bu. Periodic: 2N+1 entries,
/// i = -N..N. ZeroDirichlet: the zero-extended sequence has one more nonzero
/// difference, so the result has 2N+2 entries, i = -N-1..N, the first being u_{-N}.
inline Vector apply_B(const Vector& x, const TruncationConfig& t) {
    detail::require_length(x.size(), t);
    const bool ghost = t.boundary == Boundary::ZeroDirichlet;
    Vector out(x.size() + (ghost ? 1 : 0));
    std::size_t j = 0;
    if (ghost) out[j++] = x.front();
    for (std::size_t k = 0; k < x.size(); ++k)
        out[j++] = detail::neighbour(x, static_cast<std::ptrdiff_t>(k) + 1, t.boundary) - x[k];
    return out;
}

inline Vector eval_F(const LatticeState& s, int p) {
    if (p < 1) throw ContractViolation("p must be >= 1");
    Vector out(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) out[i] = ipow(s.u[i], 2 * p) * s.v[i];
    return out;
}

inline Vector eval_G(const Vector& u, int p) {
    if (p < 1) throw ContractViolation("p must be >= 1");
    Vector out(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) out[i] = ipow(u[i], 2 * p + 1);
    return out;
}

inline double dot(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) throw ContractViolation("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm_sq(const Vector& a) { return dot(a, a); }

struct Drift {
    Vector du;
    Vector dv;
};

/// Drift of the lattice system for already-evaluated deterministic forcing
/// f1, f2 (one value per site). Throws BlowUp on the first non-finite entry.
inline Drift eval_drift(const LatticeState& s, const ModelParams& m, const TruncationConfig& t,
                        const Vector& f1, const Vector& f2) {
    detail::require_length(s.size(), t);
    detail::require_length(f1.size(), t);
    detail::require_length(f2.size(), t);
    const Vector Au = apply_A(s.u, t);
    const Vector Av = apply_A(s.v, t);
    Drift d{Vector(s.size()), Vector(s.size())};
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double u2p = ipow(s.u[i], 2 * m.p);
        const double F = u2p * s.v[i];
        const double G = u2p * s.u[i];
        d.du[i] = -m.d1 * Au[i] - m.a1 * s.u[i] + m.b1 * F - m.b2 * G + f1[i];
        d.dv[i] = -m.d2 * Av[i] - m.a2 * s.v[i] - m.b1 * F + m.b2 * G + f2[i];
        if (!std::isfinite(d.du[i]) || !std::isfinite(d.dv[i])) throw BlowUp(i, -1);
    }
    return d;
}

/// b2 ||u||^2 + b1 ||v||^2
inline double energy(const LatticeState& s, const ModelParams& m) {
    return m.b2 * norm_sq(s.u) + m.b1 * norm_sq(s.v);
}

/// 2 b1 b2 X^{2p+1} Y - X^{2p} (b2^2 X^2 + b1^2 Y^2) <= 0, up to rounding
/// slack proportional to the magnitude of the two terms.
inline bool check_sign_inequality(double X, double Y, int p, double b1, double b2) {
    const double x2p = ipow(X, 2 * p);
    const double cross = 2.0 * b1 * b2 * x2p * X * Y;
    const double square = x2p * (b2 * b2 * X * X + b1 * b1 * Y * Y);
    const double expr = cross - square;
    return expr <= 1e-12 * (1.0 + std::abs(cross) + std::abs(square));
}

struct LipschitzConstants {
    double c1;  // F on balls of radius n
    double c2;  // G on balls of radius n
};

/// Conservative constants for the local Lipschitz bounds of F and G on the
/// ball of radius n. Each site satisfies |u_i| <= n, so by the mean value
/// theorem |dF_i| <= n^{2p}(|dv_i| + 2p|du_i|) and |dG_i| <= (2p+1) n^{2p}|du_i|.
/// Both constants are at least 1 so the inner-product forms follow from
/// Cauchy-Schwarz.
inline LipschitzConstants local_lipschitz_constants(double n, int p) {
    if (!(n > 0.0)) throw ContractViolation("radius must be positive");
    if (p < 1) throw ContractViolation("p must be >= 1");
    const double n4p = ipow(n, 4 * p);
    const double c1 = (1.0 + 4.0 * p * p) * n4p;
    const double c2 = (2.0 * p + 1.0) * (2.0 * p + 1.0) * n4p;
    return {std::max(1.0, c1), std::max(1.0, c2)};
}

}  // namespace selkov
