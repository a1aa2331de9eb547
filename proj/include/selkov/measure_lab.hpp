#pragma once

// Moments, tails and distances of empirical measures, and the dissipativity
// constants varpi, R(tau), L1(tau).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "empirical_measure.hpp"
#include "lattice_model.hpp"
#include "lp_simplex.hpp"
#include "rng.hpp"
#include "stochastic_forcing.hpp"
#include "transport.hpp"

namespace selkov {

// ---------------------------------------------------------------------------
// Moments and tails

/// sum_j w_j (||u_j||^2 + ||v_j||^2)
inline double second_moment(const EmpiricalMeasure& mu) {
    double s = 0.0;
    for (std::size_t j = 0; j < mu.size(); ++j)
        s += mu.weights[j] * (norm_sq(mu.samples[j].u) + norm_sq(mu.samples[j].v));
    return s;
}

/// sum_j w_j (b2 ||u_j||^2 + b1 ||v_j||^2)
inline double second_moment(const EmpiricalMeasure& mu, const ModelParams& params) {
    double s = 0.0;
    for (std::size_t j = 0; j < mu.size(); ++j) s += mu.weights[j] * energy(mu.samples[j], params);
    return s;
}

/// theta = 0 on |s| <= 1, 1 on |s| >= 2, smoothstep 3x^2 - 2x^3 in between.
struct CutoffProfile {
    double operator()(double s) const noexcept {
        const double x = std::abs(s) - 1.0;
        if (x <= 0.0) return 0.0;
        if (x >= 1.0) return 1.0;
        return x * x * (3.0 - 2.0 * x);
    }
};

struct TailMass {
    double hard = 0.0;      // sum over |i| >= n
    double weighted = 0.0;  // sum over i of theta(i/n)^2 (u_i^2 + v_i^2)
};

inline TailMass tail_mass(const EmpiricalMeasure& mu, int n, const TruncationConfig& trunc, const CutoffProfile& theta = {}) {
    if (n < 1 || n > trunc.half_width) throw ContractViolation("tail index must lie in [1, N]");
    TailMass out;
    std::vector<double> th(trunc.sites());
    for (std::size_t k = 0; k < th.size(); ++k) {
        const double c = theta(static_cast<double>(trunc.lattice_index(k)) / n);
        th[k] = c * c;
    }
    for (std::size_t j = 0; j < mu.size(); ++j) {
        const auto& x = mu.samples[j];
        detail::require_length(x.size(), trunc);
        double hard = 0.0, weighted = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k) {
            const double e = x.u[k] * x.u[k] + x.v[k] * x.v[k];
            if (std::abs(trunc.lattice_index(k)) >= n) hard += e;
            weighted += th[k] * e;
        }
        out.hard += mu.weights[j] * hard;
        out.weighted += mu.weights[j] * weighted;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Distances

class AtomBudgetExceeded : public ContractViolation {
public:
    using ContractViolation::ContractViolation;
};

inline constexpr std::size_t kLpAtomBudget = 200;
inline constexpr std::size_t kTransportAtomBudget = 2000;

namespace detail {

/// Merges equal atoms (exact equality) and drops zero weights.
inline EmpiricalMeasure compress(const EmpiricalMeasure& mu) {
    std::vector<std::size_t> order(mu.size());
    std::iota(order.begin(), order.end(), 0);
    auto less = [&](std::size_t a, std::size_t b) {
        const auto& x = mu.samples[a];
        const auto& y = mu.samples[b];
        if (x.u != y.u) return x.u < y.u;
        return x.v < y.v;
    };
    std::sort(order.begin(), order.end(), less);
    EmpiricalMeasure out;
    out.origin = mu.origin;
    for (std::size_t idx : order) {
        if (mu.weights[idx] == 0.0) continue;
        if (!out.samples.empty() && out.samples.back() == mu.samples[idx])
            out.weights.back() += mu.weights[idx];
        else {
            out.samples.push_back(mu.samples[idx]);
            out.weights.push_back(mu.weights[idx]);
        }
    }
    return out;
}

/// Union of the supports with signed weights mu - nu.
struct SignedAtoms {
    std::vector<LatticeState> atoms;
    std::vector<double> w;
};

inline SignedAtoms signed_union(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
    EmpiricalMeasure both;
    both.samples = mu.samples;
    both.weights = mu.weights;
    both.samples.insert(both.samples.end(), nu.samples.begin(), nu.samples.end());
    for (double w : nu.weights) both.weights.push_back(-w);
    // compress() adds signed weights of equal atoms.
    std::vector<std::size_t> order(both.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& x = both.samples[a];
        const auto& y = both.samples[b];
        if (x.u != y.u) return x.u < y.u;
        return x.v < y.v;
    });
    SignedAtoms out;
    for (std::size_t idx : order) {
        if (!out.atoms.empty() && out.atoms.back() == both.samples[idx])
            out.w.back() += both.weights[idx];
        else {
            out.atoms.push_back(both.samples[idx]);
            out.w.push_back(both.weights[idx]);
        }
    }
    return out;
}

inline void require_compatible(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
    mu.validate();
    nu.validate();
    if (mu.sites() != nu.sites()) throw ContractViolation("measures live on different windows");
}

inline std::vector<double> distance_matrix(const std::vector<LatticeState>& a, const std::vector<LatticeState>& b) {
    std::vector<double> d(a.size() * b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) d[i * b.size() + j] = state_distance(a[i], b[j]);
    return d;
}

/// Exact d_BL on finite supports. Variables psi_a = phi_a + s >= 0, s, L:
///   max sum_a w_a psi_a  s.t.  psi_a - psi_b - L d_ab <= 0,  psi_a - 2s <= 0,  s + L <= 1.
/// Shifting phi by s leaves the objective unchanged because the w_a sum to 0.
inline double bl_lp(const SignedAtoms& sa) {
    const std::size_t n = sa.atoms.size();
    if (n <= 1) return 0.0;
    const std::size_t s_col = n, l_col = n + 1;
    const std::size_t rows = n * (n - 1) + n + 1;
    lp::Problem p(rows, n + 2);
    std::size_t r = 0;
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b) {
            if (a == b) continue;
            p.a(r, a) = 1.0;
            p.a(r, b) = -1.0;
            p.a(r, l_col) = -state_distance(sa.atoms[a], sa.atoms[b]);
            ++r;
        }
    for (std::size_t a = 0; a < n; ++a) {
        p.a(r, a) = 1.0;
        p.a(r, s_col) = -2.0;
        ++r;
    }
    p.a(r, s_col) = 1.0;
    p.a(r, l_col) = 1.0;
    p.b[r] = 1.0;
    for (std::size_t a = 0; a < n; ++a) p.c[a] = sa.w[a];
    const auto sol = lp::maximize(p);
    if (sol.status != lp::Status::Optimal) throw std::runtime_error("d_BL linear program did not reach optimality");
    return std::max(0.0, sol.value);
}

}  // namespace detail

/// Exact W1 with the product l2 ground distance (transportation simplex).
inline double wasserstein1(const EmpiricalMeasure& mu_in, const EmpiricalMeasure& nu_in) {
    detail::require_compatible(mu_in, nu_in);
    const EmpiricalMeasure mu = detail::compress(mu_in);
    const EmpiricalMeasure nu = detail::compress(nu_in);
    if (mu.size() + nu.size() > kTransportAtomBudget)
        throw AtomBudgetExceeded("wasserstein1: more than " + std::to_string(kTransportAtomBudget) + " atoms");
    auto res = transport::solve(mu.weights, nu.weights, detail::distance_matrix(mu.samples, nu.samples));
    if (!res.optimal) throw std::runtime_error("transportation simplex did not reach optimality");
    return res.cost;
}

enum class DistanceMethod { ClosedFormDiracs, LPOracle, RandomTestFunctions, TransportDual };

struct DistanceEstimate {
    double value = 0.0;
    double error_bound = 0.0;  // exact methods report solver tolerance; RandomTestFunctions its LP gap
    DistanceMethod method = DistanceMethod::LPOracle;
    std::size_t atoms = 0;
};

struct DistanceOptions {
    std::size_t test_functions = 512;   // RandomTestFunctions
    std::size_t gap_subsample = 40;     // atoms per measure for the LP gap check
    std::uint64_t seed = 0;
};

namespace detail {

/// d_BL = max over L in [0,1] of L * W1 under the truncated metric min(d, 2(1-L)/L).
/// The objective is concave in L, so a golden-section search applies.
inline double bl_transport_dual(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
    const std::vector<double> d = distance_matrix(mu.samples, nu.samples);
    std::vector<double> c(d.size());
    auto value = [&](double L) {
        if (L <= 0.0 || L >= 1.0) return 0.0;
        const double cap = 2.0 * (1.0 - L) / L;
        for (std::size_t k = 0; k < d.size(); ++k) c[k] = std::min(d[k], cap);
        auto res = transport::solve(mu.weights, nu.weights, c);
        if (!res.optimal) throw std::runtime_error("transportation simplex did not reach optimality");
        return L * res.cost;
    };
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = 0.0, b = 1.0;
    double x1 = b - g * (b - a), x2 = a + g * (b - a);
    double f1 = value(x1), f2 = value(x2);
    for (int it = 0; it < 60; ++it) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = value(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = value(x1);
        }
    }
    return std::max(f1, f2);
}

inline double mean_against(const EmpiricalMeasure& mu, const std::function<double(const LatticeState&)>& phi) {
    double s = 0.0;
    for (std::size_t j = 0; j < mu.size(); ++j) s += mu.weights[j] * phi(mu.samples[j]);
    return s;
}

/// Best of R admissible test functions phi = clamp(L (r - |x - c|), -(1-L), 1-L)
/// and phi = clamp(L <e, x - c>, -(1-L), 1-L); each has ||phi||_inf + Lip <= 1.
inline double bl_random(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, std::size_t R, std::uint64_t seed) {
    std::vector<const LatticeState*> pool;
    for (const auto& x : mu.samples) pool.push_back(&x);
    for (const auto& x : nu.samples) pool.push_back(&x);
    CounterStream rng(seed, 0, 0, StreamPurpose::TestFunctions);
    const std::size_t dim = mu.sites();
    double best = 0.0;
    for (std::size_t r = 0; r < R; ++r) {
        const double L = rng.uniform();
        const double cap = 1.0 - L;
        auto draw = [&](std::size_t n) { return static_cast<std::size_t>(rng.next_u64() % n); };
        const LatticeState& c = *pool[draw(pool.size())];
        std::function<double(const LatticeState&)> phi;
        if (r % 3 == 2) {
            // Half the difference of the distances to random atom subsets of
            // each measure: 1-Lipschitz before scaling.
            const std::size_t k = 1 + draw(8);
            std::vector<const LatticeState*> near_mu, near_nu;
            for (std::size_t q = 0; q < k; ++q) {
                near_mu.push_back(&mu.samples[draw(mu.size())]);
                near_nu.push_back(&nu.samples[draw(nu.size())]);
            }
            const double shift = (2.0 * rng.uniform() - 1.0) * cap;
            phi = [near_mu, near_nu, L, cap, shift](const LatticeState& x) {
                double dm = std::numeric_limits<double>::infinity(), dn = dm;
                for (const auto* a : near_mu) dm = std::min(dm, state_distance(x, *a));
                for (const auto* a : near_nu) dn = std::min(dn, state_distance(x, *a));
                return std::clamp(0.5 * L * (dn - dm) + shift, -cap, cap);
            };
        } else if (r % 3 == 0) {
            const double radius = rng.uniform() * 2.0 * cap / std::max(L, 1e-12);
            phi = [&, L, cap, radius](const LatticeState& x) {
                return std::clamp(L * (radius - state_distance(x, c)), -cap, cap);
            };
        } else {
            LatticeState e(dim);
            double norm = 0.0;
            for (std::size_t i = 0; i < dim; ++i) {
                e.u[i] = rng.normal();
                e.v[i] = rng.normal();
                norm += e.u[i] * e.u[i] + e.v[i] * e.v[i];
            }
            norm = std::sqrt(norm);
            phi = [&, e, L, cap, norm](const LatticeState& x) {
                double proj = 0.0;
                for (std::size_t i = 0; i < dim; ++i) proj += e.u[i] * (x.u[i] - c.u[i]) + e.v[i] * (x.v[i] - c.v[i]);
                return std::clamp(L * proj / norm, -cap, cap);
            };
        }
        best = std::max(best, std::abs(mean_against(mu, phi) - mean_against(nu, phi)));
    }
    return best;
}

/// First `k` atoms of a compressed measure after a seeded shuffle, renormalised.
inline EmpiricalMeasure head_subsample(const EmpiricalMeasure& mu, std::size_t k, std::uint64_t seed) {
    if (mu.size() <= k) return mu;
    std::vector<std::size_t> idx(mu.size());
    std::iota(idx.begin(), idx.end(), 0);
    CounterStream rng(seed, 0, 0, StreamPurpose::Resampling);
    for (std::size_t i = idx.size() - 1; i > 0; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.next_u64() % (i + 1));
        std::swap(idx[i], idx[j]);
    }
    EmpiricalMeasure out;
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        out.samples.push_back(mu.samples[idx[i]]);
        out.weights.push_back(mu.weights[idx[i]]);
        total += mu.weights[idx[i]];
    }
    for (auto& w : out.weights) w /= total;
    return out;
}

}  // namespace detail

/// Bounded-Lipschitz distance sup { int phi d(mu - nu) : ||phi||_inf + Lip(phi) <= 1 }.
inline DistanceEstimate dual_lipschitz_distance(const EmpiricalMeasure& mu_in, const EmpiricalMeasure& nu_in,
                                                DistanceMethod method, const DistanceOptions& opt = {}) {
    detail::require_compatible(mu_in, nu_in);
    const EmpiricalMeasure mu = detail::compress(mu_in);
    const EmpiricalMeasure nu = detail::compress(nu_in);
    DistanceEstimate est;
    est.method = method;
    switch (method) {
        case DistanceMethod::ClosedFormDiracs: {
            if (mu.size() != 1 || nu.size() != 1) throw ContractViolation("closed form needs two point masses");
            const double d = state_distance(mu.samples[0], nu.samples[0]);
            est.value = 2.0 * d / (2.0 + d);
            est.atoms = 2;
            return est;
        }
        case DistanceMethod::LPOracle: {
            const auto sa = detail::signed_union(mu, nu);
            if (sa.atoms.size() > kLpAtomBudget)
                throw AtomBudgetExceeded("LP oracle accepts at most " + std::to_string(kLpAtomBudget) + " atoms; subsample first");
            est.value = detail::bl_lp(sa);
            est.error_bound = 1e-9;
            est.atoms = sa.atoms.size();
            return est;
        }
        case DistanceMethod::TransportDual: {
            if (mu.size() + nu.size() > kTransportAtomBudget)
                throw AtomBudgetExceeded("transport route accepts at most " + std::to_string(kTransportAtomBudget) + " atoms");
            est.value = detail::bl_transport_dual(mu, nu);
            est.error_bound = 1e-8;
            est.atoms = mu.size() + nu.size();
            return est;
        }
        case DistanceMethod::RandomTestFunctions: {
            est.value = detail::bl_random(mu, nu, opt.test_functions, opt.seed);
            est.atoms = mu.size() + nu.size();
            const auto ms = detail::head_subsample(mu, opt.gap_subsample, hash_combine(opt.seed, 1));
            const auto ns = detail::head_subsample(nu, opt.gap_subsample, hash_combine(opt.seed, 2));
            const double exact = detail::bl_lp(detail::signed_union(ms, ns));
            const double lower = detail::bl_random(ms, ns, opt.test_functions, opt.seed);
            est.error_bound = std::max(0.0, exact - lower);
            return est;
        }
    }
    return est;
}

// ---------------------------------------------------------------------------
// Dissipativity constants

/// inf over `times` of (a1 ^ a2) - 1/2 - 4 alpha^2 ||delta(t)||^2 (b1 + b2),
/// for any callable t -> ||delta(t)||^2.
template <class DeltaNormSq>
double compute_varpi(const ModelParams& m, double alpha, DeltaNormSq&& delta_sq, const std::vector<double>& times) {
    if (times.empty()) throw ContractViolation("compute_varpi needs at least one time");
    double worst = 0.0;
    for (double t : times) worst = std::max(worst, static_cast<double>(delta_sq(t)));
    return std::min(m.a1, m.a2) - 0.5 - 4.0 * alpha * alpha * worst * (m.b1 + m.b2);
}

inline double compute_varpi(const ModelParams& m, const ForcingSpec& f, const TruncationConfig& trunc,
                            const std::vector<double>& times) {
    return compute_varpi(m, f.alpha, [&](double t) { return delta_norm_sq(f, t, trunc); }, times);
}

/// Evenly spaced grid with `n` points on [a, b].
inline std::vector<double> linspace(double a, double b, std::size_t n) {
    std::vector<double> out(n);
    for (std::size_t k = 0; k < n; ++k)
        out[k] = n == 1 ? a : a + (b - a) * static_cast<double>(k) / static_cast<double>(n - 1);
    return out;
}

/// Default grid for varpi on the way back from tau: one period if the forcing
/// is periodic, otherwise the window on which the exponential weight exceeds 1e-12
/// for a rate of at least 1/4.
inline std::vector<double> varpi_grid(const ForcingSpec& f, double tau) {
    const double span = f.chi ? *f.chi : 4.0 * std::log(1e12);
    return linspace(tau - span, tau, 20001);
}

class NotTempered : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class HypothesisViolated : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

struct RTau {
    double value = 0.0;
    double error_bound = 0.0;
    double lower_limit = 0.0;  // where the weight exp(-varpi (tau - s)) reaches 1e-12
};

/// int_{-inf}^tau exp(-varpi (tau - s)) g(s) ds by the trapezoid rule with step
/// h, truncated where the weight falls below 1e-12. The error bound adds a
/// Richardson estimate (h vs 2h) to a tail bound from sampling g further back.
/// Refuses integrands that grow too fast for the weight to dominate.
template <class Integrand>
RTau weighted_past_integral(double tau, double varpi, Integrand&& g, double h) {
    if (!(varpi > 0.0)) throw HypothesisViolated("varpi must be positive");
    if (!(h > 0.0)) throw ContractViolation("quadrature step must be positive");
    const double S = std::log(1e12) / varpi;
    std::size_t n = static_cast<std::size_t>(std::ceil(S / h));
    if (n % 2 == 1) ++n;
    const double step = S / static_cast<double>(n);
    std::vector<double> f(n + 1);
    for (std::size_t k = 0; k <= n; ++k) {
        const double r = step * static_cast<double>(k);
        f[k] = std::exp(-varpi * r) * g(tau - r);
    }
    double fine = 0.5 * (f[0] + f[n]);
    for (std::size_t k = 1; k < n; ++k) fine += f[k];
    fine *= step;
    double coarse = 0.5 * (f[0] + f[n]);
    for (std::size_t k = 2; k < n; k += 2) coarse += f[k];
    coarse *= 2.0 * step;

    // Tempering check on [tau - 4S, tau - S]: g must not outgrow exp(varpi |s| / 2).
    double near = 0.0, far = 0.0, gmax = 0.0;
    for (int k = 0; k <= 400; ++k) {
        const double r = S + 3.0 * S * k / 400.0;
        const double gv = std::abs(g(tau - r));
        gmax = std::max(gmax, gv);
        const double hv = std::exp(-0.5 * varpi * r) * gv;
        if (r <= 2.0 * S)
            near = std::max(near, hv);
        else
            far = std::max(far, hv);
    }
    if (far > near * (1.0 + 1e-9) + 1e-300)
        throw NotTempered("integrand grows faster than the exponential weight decays");
    RTau out;
    out.value = fine;
    out.lower_limit = tau - S;
    out.error_bound = std::abs(fine - coarse) / 3.0 + gmax * 1e-12 / varpi;
    return out;
}

/// R(tau): the weighted past integral of sum ||kappa||^2 + sum ||h||^2 +
/// ||f1||^2 + ||f2||^2 + ||delta||^2.
inline RTau compute_R_tau(double tau, double varpi, const ForcingSpec& f, const TruncationConfig& trunc, double h) {
    return weighted_past_integral(
        tau, varpi, [&](double s) { return forcing_norm_sq(f, s, trunc) + delta_norm_sq(f, s, trunc); }, h);
}

struct DissipativityReport {
    double varpi = 0.0;
    double R_tau = 0.0;
    double R_error = 0.0;
    double C = 1.0;
    double L1_tau = 0.0;
    double K_radius = 0.0;
    bool hypothesis_ok = false;
    std::string note;
};

/// varpi, R(tau), L1 = C R(tau) and the radius sqrt(L1). With varpi <= 0 the
/// report is marked violated and R is left at 0.
inline DissipativityReport compute_absorbing_radius(double tau, const ModelParams& m, const ForcingSpec& f,
                                                    const TruncationConfig& trunc, double C, double h,
                                                    std::optional<std::vector<double>> varpi_times = std::nullopt) {
    DissipativityReport rep;
    rep.C = C;
    rep.varpi = compute_varpi(m, f, trunc, varpi_times ? *varpi_times : varpi_grid(f, tau));
    if (!(rep.varpi > 0.0)) {
        rep.note = "hypothesis violated: varpi <= 0";
        return rep;
    }
    try {
        const auto r = compute_R_tau(tau, rep.varpi, f, trunc, h);
        rep.R_tau = r.value;
        rep.R_error = r.error_bound;
    } catch (const NotTempered& e) {
        rep.note = e.what();
        return rep;
    }
    rep.hypothesis_ok = true;
    rep.L1_tau = C * rep.R_tau;
    rep.K_radius = std::sqrt(rep.L1_tau);
    return rep;
}

}  // namespace selkov
