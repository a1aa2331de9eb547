#pragma once

// Time-dependent forcing, state-dependent noise kernels drawn from a closed
// catalog, the Levy jump law, and seeded generation of Wiener increments and
// compound-Poisson jump batches.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "lattice_model.hpp"
#include "rng.hpp"

namespace selkov {

// ---------------------------------------------------------------------------
// Kernel catalog

enum class EnvelopeKind { Constant, Cos, Sin, Exp, Gaussian };

/// Scalar time profile: 1, cos(rate t + phase), sin(rate t + phase),
/// exp(-rate t) or exp(-rate t^2).
struct TimeEnvelope {
    EnvelopeKind kind = EnvelopeKind::Constant;
    double rate = 1.0;
    double phase = 0.0;

    double operator()(double t) const noexcept {
        switch (kind) {
            case EnvelopeKind::Constant: return 1.0;
            case EnvelopeKind::Cos: return std::cos(rate * t + phase);
            case EnvelopeKind::Sin: return std::sin(rate * t + phase);
            case EnvelopeKind::Exp: return std::exp(-rate * t);
            case EnvelopeKind::Gaussian: return std::exp(-rate * t * t);
        }
        return 0.0;
    }

    /// True when the envelope repeats after `chi`.
    bool periodic_with(double chi) const noexcept {
        switch (kind) {
            case EnvelopeKind::Constant: return true;
            case EnvelopeKind::Cos:
            case EnvelopeKind::Sin: {
                const double cycles = rate * chi / (2.0 * std::numbers::pi);
                return std::abs(cycles - std::round(cycles)) <= 1e-9 * std::max(1.0, std::abs(cycles));
            }
            case EnvelopeKind::Exp:
            case EnvelopeKind::Gaussian: return rate == 0.0;
        }
        return false;
    }

    bool nonnegative() const noexcept {
        return kind == EnvelopeKind::Constant || kind == EnvelopeKind::Exp || kind == EnvelopeKind::Gaussian;
    }

    bool operator==(const TimeEnvelope&) const = default;
};

enum class ProfileKind { Uniform, Origin, ExpDecay, Compact };

/// Spatial shape over lattice sites: 1 everywhere, the indicator of site 0,
/// exp(-rate |i|), or the indicator of |i| < width.
struct SpatialProfile {
    ProfileKind kind = ProfileKind::Uniform;
    double rate = 1.0;
    int width = 1;

    double at(int i) const noexcept {
        switch (kind) {
            case ProfileKind::Uniform: return 1.0;
            case ProfileKind::Origin: return i == 0 ? 1.0 : 0.0;
            case ProfileKind::ExpDecay: return std::exp(-rate * std::abs(i));
            case ProfileKind::Compact: return std::abs(i) < width ? 1.0 : 0.0;
        }
        return 0.0;
    }

    bool operator==(const SpatialProfile&) const = default;
};

struct FieldTerm {
    double amplitude = 1.0;
    TimeEnvelope envelope{};
    SpatialProfile profile{};

    bool operator==(const FieldTerm&) const = default;
};

/// A site-indexed, time-dependent coefficient: a sum of separable terms.
struct SiteField {
    std::vector<FieldTerm> terms;

    bool empty() const noexcept { return terms.empty(); }

    double value(double t, int i) const noexcept {
        double s = 0.0;
        for (const auto& term : terms) s += term.amplitude * term.envelope(t) * term.profile.at(i);
        return s;
    }

    Vector eval(double t, const TruncationConfig& trunc) const {
        Vector out(trunc.sites(), 0.0);
        for (std::size_t k = 0; k < out.size(); ++k) out[k] = value(t, trunc.lattice_index(k));
        return out;
    }

    bool operator==(const SiteField&) const = default;
};

inline SiteField constant_field(double amplitude, SpatialProfile profile = {}) {
    return SiteField{{FieldTerm{amplitude, {}, profile}}};
}

/// envelope(t) * (c0 + c1 s + c2 s^2)
struct StateKernel {
    TimeEnvelope envelope{};
    std::array<double, 3> coeffs{0.0, 0.0, 0.0};

    double poly(double s) const noexcept { return coeffs[0] + s * (coeffs[1] + s * coeffs[2]); }
    double operator()(double t, double s) const noexcept { return envelope(t) * poly(s); }
    bool zero() const noexcept { return coeffs[0] == 0.0 && coeffs[1] == 0.0 && coeffs[2] == 0.0; }

    bool operator==(const StateKernel&) const = default;
};

enum class JumpFactor { One, Lorentzian };

inline double jump_factor(JumpFactor f, double y) noexcept {
    return f == JumpFactor::One ? 1.0 : 1.0 / (1.0 + y * y);
}

/// envelope(t) * (c0 + c1 s + c2 s^2) * g(y), with g = 1 or 1/(1+y^2).
struct JumpKernel {
    StateKernel state{};
    JumpFactor factor = JumpFactor::One;

    double operator()(double t, double s, double y) const noexcept { return state(t, s) * jump_factor(factor, y); }

    bool operator==(const JumpKernel&) const = default;
};

/// One retained noise mode k: additive parts h_k, kappa_k, the nonnegative
/// shape delta_k, and the kernels sigma~_k, q~_k. The state-dependent
/// coefficients are delta_{k,i}(t) sigma~_k(t, s) and delta_{k,i}(t) q~_k(t, s, y).
struct NoiseMode {
    SiteField h;
    SiteField kappa;
    SiteField delta;
    StateKernel sigma;
    JumpKernel q;

    bool operator==(const NoiseMode&) const = default;
};

struct ForcingSpec {
    SiteField f1;
    SiteField f2;
    std::vector<NoiseMode> modes;
    double alpha = 1.0;
    std::optional<double> chi;

    std::size_t K_modes() const noexcept { return modes.size(); }

    bool operator==(const ForcingSpec&) const = default;
};

// ---------------------------------------------------------------------------
// Levy jump law

enum class JumpLawKind { Gaussian, UniformSmall };

struct JumpLaw {
    JumpLawKind kind = JumpLawKind::Gaussian;
    double scale = 1.0;  // sd for Gaussian, bound (< 1) for UniformSmall

    bool operator==(const JumpLaw&) const = default;
};

struct LevyConfig {
    double poisson_intensity = 0.0;
    JumpLaw jump_law{};
    bool truncate_small = false;
    double M_jump_bound = 1.0;

    bool operator==(const LevyConfig&) const = default;
};

namespace detail {

inline double std_normal_pdf(double x) noexcept { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }
inline double std_normal_cdf(double x) noexcept { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

struct LegendreRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1] (Newton on P_n).
inline LegendreRule legendre_rule(int n) {
    LegendreRule r{std::vector<double>(static_cast<std::size_t>(n)), std::vector<double>(static_cast<std::size_t>(n))};
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = pk;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        r.nodes[static_cast<std::size_t>(i)] = -x;
        r.nodes[static_cast<std::size_t>(n - 1 - i)] = x;
        r.weights[static_cast<std::size_t>(i)] = w;
        r.weights[static_cast<std::size_t>(n - 1 - i)] = w;
    }
    return r;
}

/// Composite 20-point Gauss-Legendre quadrature on [a, b].
template <class F>
double gauss_legendre(F&& f, double a, double b, int panels = 64) {
    static const LegendreRule rule = legendre_rule(20);
    const double h = (b - a) / panels;
    double total = 0.0;
    for (int p = 0; p < panels; ++p) {
        const double mid = a + (p + 0.5) * h;
        const double half = 0.5 * h;
        double s = 0.0;
        for (std::size_t j = 0; j < rule.nodes.size(); ++j) s += rule.weights[j] * f(mid + half * rule.nodes[j]);
        total += s * half;
    }
    return total;
}

}  // namespace detail

/// Probability that a jump drawn from the (untruncated) law lands in |y| < 1.
inline double small_jump_probability(const JumpLaw& law) {
    if (law.kind == JumpLawKind::UniformSmall) return 1.0;
    return 1.0 - 2.0 * detail::std_normal_cdf(-1.0 / law.scale);
}

/// Mean of g(Y) for a single jump of the configured (possibly truncated) law.
/// The compensator of a jump kernel with factor g is intensity * E[g(Y)].
inline double mean_jump_factor(const LevyConfig& levy, JumpFactor f) {
    if (f == JumpFactor::One) return 1.0;
    const JumpLaw& law = levy.jump_law;
    if (law.kind == JumpLawKind::UniformSmall) return std::atan(law.scale) / law.scale;
    const double s = law.scale;
    if (!levy.truncate_small) {
        // E[1/(1+Y^2)] = sqrt(pi/2)/s * exp(1/(2 s^2)) * erfc(1/(sqrt2 s))
        return std::sqrt(std::numbers::pi / 2.0) / s * std::exp(0.5 / (s * s)) *
               std::erfc(1.0 / (std::numbers::sqrt2 * s));
    }
    const double mass = small_jump_probability(law);
    const double integral = detail::gauss_legendre(
        [s](double y) { return detail::std_normal_pdf(y / s) / s / (1.0 + y * y); }, -1.0, 1.0);
    return integral / mass;
}

/// sum_k int (|y|^2 ^ 1) nu_k(dy) for K identically distributed modes.
inline double levy_second_moment(const LevyConfig& levy, std::size_t K) {
    const JumpLaw& law = levy.jump_law;
    double per_jump = 0.0;
    if (law.kind == JumpLawKind::UniformSmall) {
        per_jump = law.scale * law.scale / 3.0;
    } else {
        const double s = law.scale;
        const double c = 1.0 / s;
        const double inner = s * s * ((2.0 * detail::std_normal_cdf(c) - 1.0) - 2.0 * c * detail::std_normal_pdf(c));
        if (levy.truncate_small)
            per_jump = inner / small_jump_probability(law);
        else
            per_jump = inner + 2.0 * detail::std_normal_cdf(-c);
    }
    return static_cast<double>(K) * levy.poisson_intensity * per_jump;
}

inline std::vector<std::string> violations(const LevyConfig& levy, std::size_t K) {
    std::vector<std::string> out;
    if (!(levy.poisson_intensity >= 0.0)) out.push_back("poisson_intensity must be nonnegative");
    if (!(levy.jump_law.scale > 0.0)) out.push_back("jump_law.scale must be positive");
    if (levy.jump_law.kind == JumpLawKind::UniformSmall && !(levy.jump_law.scale < 1.0))
        out.push_back("uniform jump bound must be < 1");
    if (!(levy.M_jump_bound >= 0.0)) out.push_back("M_jump_bound must be nonnegative");
    if (out.empty() && levy_second_moment(levy, K) > levy.M_jump_bound * (1.0 + 1e-12))
        out.push_back("jump second moment exceeds M_jump_bound");
    return out;
}

// ---------------------------------------------------------------------------
// Seeded increments

/// Identifies the substream family of one step of one trajectory.
struct NoiseContext {
    std::uint64_t path_key = 0;
    std::uint64_t step = 0;
};

inline Vector sample_wiener_increments(const NoiseContext& ctx, double dt, std::size_t K) {
    if (!(dt > 0.0)) throw ContractViolation("dt must be positive");
    Vector dW(K);
    const double sd = std::sqrt(dt);
    for (std::size_t k = 0; k < K; ++k) {
        CounterStream s(ctx.path_key, ctx.step, static_cast<std::uint32_t>(k), StreamPurpose::Wiener);
        dW[k] = sd * s.normal();
    }
    return dW;
}

inline double sample_jump_size(CounterStream& s, const LevyConfig& levy) {
    const JumpLaw& law = levy.jump_law;
    for (;;) {
        const double y = law.kind == JumpLawKind::Gaussian ? law.scale * s.normal()
                                                           : law.scale * (2.0 * s.uniform() - 1.0);
        if (!levy.truncate_small || std::abs(y) < 1.0) return y;
    }
}

using JumpBatch = std::vector<std::vector<double>>;  // per mode, the jump sizes of the step

/// Compound-Poisson jumps of one step: P ~ Poisson(intensity dt) per mode,
/// then P sizes from the jump law (resampled into |y| < 1 when truncating).
inline JumpBatch sample_jump_batch(const NoiseContext& ctx, double dt, const LevyConfig& levy, std::size_t K) {
    if (!(dt > 0.0)) throw ContractViolation("dt must be positive");
    JumpBatch out(K);
    for (std::size_t k = 0; k < K; ++k) {
        CounterStream s(ctx.path_key, ctx.step, static_cast<std::uint32_t>(k), StreamPurpose::Jumps);
        const auto count = s.poisson(levy.poisson_intensity * dt);
        out[k].reserve(count);
        for (std::uint64_t j = 0; j < count; ++j) out[k].push_back(sample_jump_size(s, levy));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Coefficient evaluation

/// sigma_k(t, x) = (delta_{k,i}(t) sigma~_k(t, x_i))_i for every mode.
inline std::vector<Vector> eval_sigma(const ForcingSpec& f, double t, const Vector& x, const TruncationConfig& trunc) {
    detail::require_length(x.size(), trunc);
    std::vector<Vector> out;
    out.reserve(f.modes.size());
    for (const auto& mode : f.modes) {
        Vector col(x.size());
        for (std::size_t k = 0; k < x.size(); ++k)
            col[k] = mode.delta.value(t, trunc.lattice_index(k)) * mode.sigma(t, x[k]);
        out.push_back(std::move(col));
    }
    return out;
}

/// q_k(t, x, y) = (delta_{k,i}(t) q~_k(t, x_i, y))_i for every mode.
inline std::vector<Vector> eval_q(const ForcingSpec& f, double t, const Vector& x, double y,
                                  const TruncationConfig& trunc) {
    detail::require_length(x.size(), trunc);
    std::vector<Vector> out;
    out.reserve(f.modes.size());
    for (const auto& mode : f.modes) {
        Vector col(x.size());
        for (std::size_t k = 0; k < x.size(); ++k)
            col[k] = mode.delta.value(t, trunc.lattice_index(k)) * mode.q(t, x[k], y);
        out.push_back(std::move(col));
    }
    return out;
}

inline Drift eval_drift(const LatticeState& s, double t, const ModelParams& m, const ForcingSpec& f,
                        const TruncationConfig& trunc) {
    return eval_drift(s, m, trunc, f.f1.eval(t, trunc), f.f2.eval(t, trunc));
}

/// ||delta(t)||^2 = sum_k sum_i delta_{k,i}(t)^2 over the window.
inline double delta_norm_sq(const ForcingSpec& f, double t, const TruncationConfig& trunc) {
    double s = 0.0;
    for (const auto& mode : f.modes)
        for (std::size_t k = 0; k < trunc.sites(); ++k) {
            const double d = mode.delta.value(t, trunc.lattice_index(k));
            s += d * d;
        }
    return s;
}

/// sum_k ||h_k||^2 + sum_k ||kappa_k||^2 + ||f1||^2 + ||f2||^2 at time t.
inline double forcing_norm_sq(const ForcingSpec& f, double t, const TruncationConfig& trunc) {
    double s = 0.0;
    for (std::size_t k = 0; k < trunc.sites(); ++k) {
        const int i = trunc.lattice_index(k);
        const double a = f.f1.value(t, i);
        const double b = f.f2.value(t, i);
        s += a * a + b * b;
        for (const auto& mode : f.modes) {
            const double h = mode.h.value(t, i);
            const double kap = mode.kappa.value(t, i);
            s += h * h + kap * kap;
        }
    }
    return s;
}

// ---------------------------------------------------------------------------
// Validation

struct GrowthSample {
    std::size_t mode = 0;
    int site = 0;
    double t = 0.0;
    double s = 0.0;
};

struct GrowthReport {
    double max_sigma_ratio = 0.0;  // max |sigma~| / (alpha (1 + |s|)) where delta > 0
    double max_jump_ratio = 0.0;   // max int_{|y|<1} |q~| nu(dy) / (alpha (1 + |s|))
    GrowthSample worst_sigma{};
    GrowthSample worst_jump{};
    bool passed = true;
};

/// Checks |delta sigma~| <= alpha delta (1+|s|) and the small-jump integral of
/// |q| against the same bound, on the product of `times` and `states`.
inline GrowthReport validate_growth_bound(const ForcingSpec& f, const LevyConfig& levy, const std::vector<double>& times,
                                          const std::vector<double>& states, const TruncationConfig& trunc) {
    GrowthReport rep;
    for (std::size_t k = 0; k < f.modes.size(); ++k) {
        const auto& mode = f.modes[k];
        const double law_scale = levy.jump_law.scale;
        const JumpLaw law = levy.jump_law;
        // int_{|y|<1} |g(y)| nu(dy) for the mode's factor g.
        double factor_integral = 0.0;
        if (levy.poisson_intensity > 0.0) {
            if (law.kind == JumpLawKind::UniformSmall) {
                factor_integral = levy.poisson_intensity * mean_jump_factor(levy, mode.q.factor);
            } else {
                const double inner = detail::gauss_legendre(
                    [&](double y) { return detail::std_normal_pdf(y / law_scale) / law_scale * jump_factor(mode.q.factor, y); },
                    -1.0, 1.0);
                factor_integral = levy.poisson_intensity * inner / (levy.truncate_small ? small_jump_probability(law) : 1.0);
            }
        }
        for (double t : times) {
            bool any_positive = false;
            for (std::size_t slot = 0; slot < trunc.sites(); ++slot)
                if (mode.delta.value(t, trunc.lattice_index(slot)) > 0.0) {
                    any_positive = true;
                    break;
                }
            if (!any_positive) continue;
            for (double s : states) {
                const double bound = f.alpha * (1.0 + std::abs(s));
                const double rs = std::abs(mode.sigma(t, s)) / bound;
                if (rs > rep.max_sigma_ratio) {
                    rep.max_sigma_ratio = rs;
                    rep.worst_sigma = {k, 0, t, s};
                }
                const double rj = std::abs(mode.q.state(t, s)) * factor_integral / bound;
                if (rj > rep.max_jump_ratio) {
                    rep.max_jump_ratio = rj;
                    rep.worst_jump = {k, 0, t, s};
                }
            }
        }
    }
    rep.passed = rep.max_sigma_ratio <= 1.0 + 1e-9 && rep.max_jump_ratio <= 1.0 + 1e-9;
    return rep;
}

struct PeriodicityReport {
    double max_abs_difference = 0.0;
    double worst_time = 0.0;
    bool envelopes_periodic = true;
    bool passed = true;
};

/// Compares f1, f2, h, kappa, delta and the kernels' envelopes at t and t+chi
/// over `times`. Requires chi to be set.
inline PeriodicityReport check_periodicity(const ForcingSpec& f, const std::vector<double>& times,
                                           const TruncationConfig& trunc) {
    if (!f.chi) throw ContractViolation("forcing has no period");
    const double chi = *f.chi;
    PeriodicityReport rep;
    auto field_periodic = [&](const SiteField& sf) {
        return std::all_of(sf.terms.begin(), sf.terms.end(), [&](const FieldTerm& term) { return term.envelope.periodic_with(chi); });
    };
    rep.envelopes_periodic = field_periodic(f.f1) && field_periodic(f.f2);
    for (const auto& m : f.modes)
        rep.envelopes_periodic = rep.envelopes_periodic && field_periodic(m.h) && field_periodic(m.kappa) &&
                                 field_periodic(m.delta) && m.sigma.envelope.periodic_with(chi) &&
                                 m.q.state.envelope.periodic_with(chi);
    double scale = 1.0;
    auto compare = [&](const SiteField& sf, double t) {
        for (std::size_t k = 0; k < trunc.sites(); ++k) {
            const int i = trunc.lattice_index(k);
            const double a = sf.value(t, i);
            const double b = sf.value(t + chi, i);
            scale = std::max(scale, std::abs(a));
            const double d = std::abs(a - b);
            if (d > rep.max_abs_difference) {
                rep.max_abs_difference = d;
                rep.worst_time = t;
            }
        }
    };
    for (double t : times) {
        compare(f.f1, t);
        compare(f.f2, t);
        for (const auto& m : f.modes) {
            compare(m.h, t);
            compare(m.kappa, t);
            compare(m.delta, t);
            const double ds = std::abs(m.sigma.envelope(t) - m.sigma.envelope(t + chi));
            const double dq = std::abs(m.q.state.envelope(t) - m.q.state.envelope(t + chi));
            rep.max_abs_difference = std::max({rep.max_abs_difference, ds, dq});
        }
    }
    // Trigonometric envelopes are periodic only up to rounding of t + chi.
    const double tmax = times.empty() ? 0.0 : std::abs(*std::max_element(times.begin(), times.end(), [](double a, double b) {
        return std::abs(a) < std::abs(b);
    }));
    rep.passed = rep.envelopes_periodic && rep.max_abs_difference <= 1e-12 * scale * (1.0 + tmax + chi);
    return rep;
}

/// Every structural violation of the forcing: negative delta on the sample
/// grid, a declared period that some envelope does not share, alpha <= 0.
inline std::vector<std::string> violations(const ForcingSpec& f, const TruncationConfig& trunc,
                                           const std::vector<double>& sample_times) {
    std::vector<std::string> out;
    if (!(f.alpha > 0.0)) out.push_back("alpha must be positive");
    if (f.chi && !(*f.chi > 0.0)) out.push_back("chi must be positive");
    for (std::size_t k = 0; k < f.modes.size(); ++k) {
        bool negative = false;
        for (double t : sample_times)
            for (std::size_t slot = 0; slot < trunc.sites() && !negative; ++slot)
                negative = f.modes[k].delta.value(t, trunc.lattice_index(slot)) < 0.0;
        if (negative) out.push_back("modes/" + std::to_string(k) + "/delta must be nonnegative");
    }
    if (f.chi && *f.chi > 0.0) {
        auto rep = check_periodicity(f, sample_times, trunc);
        if (!rep.envelopes_periodic) out.push_back("a coefficient is not periodic with the declared chi");
    }
    return out;
}

}  // namespace selkov
