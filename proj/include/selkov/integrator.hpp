#pragma once

// Euler-Maruyama scheme with compound-Poisson jumps on the truncated lattice,
// single paths, ensembles and pullback runs.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <type_traits>
#include <variant>
#include <vector>

#include "empirical_measure.hpp"
#include "lattice_model.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "stochastic_forcing.hpp"

namespace selkov {

/// Section7Literal multiplies each jump integrand by the jump size and has no
/// compensator. CompensatedForm integrates the integrand itself against the
/// compensated Poisson measure.
enum class SchemeVariant { Section7Literal, CompensatedForm };

struct SystemSpec {
    ModelParams params{};
    ForcingSpec forcing{};
    LevyConfig levy{};
    TruncationConfig trunc{};
    SchemeVariant variant = SchemeVariant::CompensatedForm;
};

struct TimeGrid {
    double t_start = 0.0;
    double t_end = 0.0;
    double dt = 0.0;
    long n_steps = 0;

    /// Grid on [t_start, t_end]; dt must divide the span up to rounding.
    static TimeGrid make(double t_start, double t_end, double dt) {
        if (!(dt > 0.0)) throw ContractViolation("dt must be positive");
        const double span = t_end - t_start;
        const double steps = span / dt;
        const long n = std::lround(steps);
        if (n < 1) throw ContractViolation("time grid needs at least one step");
        if (std::abs(steps - static_cast<double>(n)) > 1e-9 * std::max(1.0, steps))
            throw ContractViolation("dt does not divide the time span");
        return {t_start, t_end, dt, n};
    }

    double time(long n) const noexcept { return n == n_steps ? t_end : t_start + static_cast<double>(n) * dt; }

    /// Grid index of the save request t, rounding down (left limit).
    long index_of(double t) const {
        if (t < t_start - 1e-9 * dt || t > t_end + 1e-9 * dt) throw ContractViolation("save time outside grid");
        const long n = static_cast<long>(std::floor((t - t_start) / dt + 1e-9));
        return std::clamp(n, 0L, n_steps);
    }
};

struct StepNoise {
    Vector dW;        // per mode
    JumpBatch jumps;  // per mode
};

inline StepNoise draw_step_noise(const NoiseContext& ctx, double dt, const LevyConfig& levy, std::size_t K) {
    StepNoise n;
    n.dW = sample_wiener_increments(ctx, dt, K);
    n.jumps = levy.poisson_intensity > 0.0 ? sample_jump_batch(ctx, dt, levy, K) : JumpBatch(K);
    return n;
}

namespace detail {

/// A SiteField with its spatial profiles tabulated on the window.
class TabulatedField {
public:
    TabulatedField() = default;
    TabulatedField(const SiteField& f, const TruncationConfig& trunc) {
        for (const auto& term : f.terms) {
            Vector shape(trunc.sites());
            for (std::size_t k = 0; k < shape.size(); ++k)
                shape[k] = term.amplitude * term.profile.at(trunc.lattice_index(k));
            envelopes_.push_back(term.envelope);
            shapes_.push_back(std::move(shape));
        }
    }

    bool empty() const noexcept { return shapes_.empty(); }

    void eval(double t, Vector& out) const {
        std::fill(out.begin(), out.end(), 0.0);
        for (std::size_t j = 0; j < shapes_.size(); ++j) {
            const double e = envelopes_[j](t);
            const auto& s = shapes_[j];
            for (std::size_t k = 0; k < out.size(); ++k) out[k] += e * s[k];
        }
    }

private:
    std::vector<TimeEnvelope> envelopes_;
    std::vector<Vector> shapes_;
};

}  // namespace detail

/// Precomputed form of a SystemSpec that advances states in place.
class Stepper {
public:
    explicit Stepper(SystemSpec spec) : spec_(std::move(spec)) {
        const auto& tr = spec_.trunc;
        const std::size_t n = tr.sites();
        f1_ = detail::TabulatedField(spec_.forcing.f1, tr);
        f2_ = detail::TabulatedField(spec_.forcing.f2, tr);
        for (const auto& m : spec_.forcing.modes) {
            modes_.push_back({detail::TabulatedField(m.h, tr), detail::TabulatedField(m.kappa, tr),
                              detail::TabulatedField(m.delta, tr), m.sigma, m.q,
                              mean_jump_factor(spec_.levy, m.q.factor)});
        }
        buf_f1_.resize(n);
        buf_f2_.resize(n);
        buf_h_.resize(n);
        buf_kappa_.resize(n);
        buf_delta_.resize(n);
        next_u_.resize(n);
        next_v_.resize(n);
    }

    const SystemSpec& spec() const noexcept { return spec_; }
    std::size_t modes() const noexcept { return modes_.size(); }

    /// One Euler-Maruyama step from t to t + dt. Jump coefficients use the
    /// pre-step state. Throws BlowUp(site, step_index) on non-finite output.
    void step(LatticeState& s, double t, double dt, const StepNoise& noise, long step_index = -1) {
        const auto& m = spec_.params;
        const auto& lam = m.lambda;
        const std::size_t n = s.size();
        detail::require_length(n, spec_.trunc);
        const bool periodic = spec_.trunc.boundary == Boundary::Periodic;

        f1_.eval(t, buf_f1_);
        f2_.eval(t, buf_f2_);
        for (std::size_t i = 0; i < n; ++i) {
            const double ui = s.u[i];
            const double vi = s.v[i];
            const double ul = i > 0 ? s.u[i - 1] : (periodic ? s.u[n - 1] : 0.0);
            const double ur = i + 1 < n ? s.u[i + 1] : (periodic ? s.u[0] : 0.0);
            const double vl = i > 0 ? s.v[i - 1] : (periodic ? s.v[n - 1] : 0.0);
            const double vr = i + 1 < n ? s.v[i + 1] : (periodic ? s.v[0] : 0.0);
            const double Au = -ul + 2.0 * ui - ur;
            const double Av = -vl + 2.0 * vi - vr;
            const double u2p = ipow(ui, 2 * m.p);
            const double F = u2p * vi;
            const double G = u2p * ui;
            next_u_[i] = ui + dt * (-m.d1 * Au - m.a1 * ui + m.b1 * F - m.b2 * G + buf_f1_[i]);
            next_v_[i] = vi + dt * (-m.d2 * Av - m.a2 * vi - m.b1 * F + m.b2 * G + buf_f2_[i]);
        }

        const bool diffusion = lam.eps1 != 0.0 || lam.gamma1 != 0.0;
        const bool jumps = lam.eps2 != 0.0 || lam.gamma2 != 0.0;
        for (std::size_t k = 0; k < modes_.size() && (diffusion || jumps); ++k) {
            const auto& mode = modes_[k];
            mode.delta.eval(t, buf_delta_);
            if (diffusion && noise.dW[k] != 0.0) {
                const double dW = noise.dW[k];
                mode.h.eval(t, buf_h_);
                const double env = mode.sigma.envelope(t);
                for (std::size_t i = 0; i < n; ++i) {
                    if (lam.eps1 != 0.0)
                        next_u_[i] += lam.eps1 * (buf_h_[i] + buf_delta_[i] * env * mode.sigma.poly(s.u[i])) * dW;
                    if (lam.gamma1 != 0.0)
                        next_v_[i] += lam.gamma1 * (buf_h_[i] + buf_delta_[i] * env * mode.sigma.poly(s.v[i])) * dW;
                }
            }
            if (!jumps) continue;
            const auto& ys = noise.jumps[k];
            // Sums over the jumps of the step; the kernel is separable in y.
            double count = static_cast<double>(ys.size());
            double sum_y = 0.0, sum_g = 0.0, sum_gy = 0.0;
            for (double y : ys) {
                const double g = jump_factor(mode.q.factor, y);
                sum_y += y;
                sum_g += g;
                sum_gy += g * y;
            }
            double kappa_weight = 0.0, q_weight = 0.0;
            if (spec_.variant == SchemeVariant::Section7Literal) {
                kappa_weight = sum_y;
                q_weight = sum_gy;
            } else {
                const double rate = spec_.levy.poisson_intensity * dt;
                kappa_weight = count - rate;
                q_weight = sum_g - rate * mode.mean_factor;
            }
            if (kappa_weight == 0.0 && q_weight == 0.0) continue;
            mode.kappa.eval(t, buf_kappa_);
            const double env = mode.q.state.envelope(t);
            for (std::size_t i = 0; i < n; ++i) {
                if (lam.eps2 != 0.0)
                    next_u_[i] += lam.eps2 * (buf_kappa_[i] * kappa_weight +
                                              buf_delta_[i] * env * mode.q.state.poly(s.u[i]) * q_weight);
                if (lam.gamma2 != 0.0)
                    next_v_[i] += lam.gamma2 * (buf_kappa_[i] * kappa_weight +
                                                buf_delta_[i] * env * mode.q.state.poly(s.v[i]) * q_weight);
            }
        }

        for (std::size_t i = 0; i < n; ++i)
            if (!std::isfinite(next_u_[i]) || !std::isfinite(next_v_[i])) throw BlowUp(i, step_index);
        s.u.swap(next_u_);
        s.v.swap(next_v_);
        next_u_.resize(n);
        next_v_.resize(n);
    }

private:
    struct Mode {
        detail::TabulatedField h, kappa, delta;
        StateKernel sigma;
        JumpKernel q;
        double mean_factor;
    };

    SystemSpec spec_;
    detail::TabulatedField f1_, f2_;
    std::vector<Mode> modes_;
    Vector buf_f1_, buf_f2_, buf_h_, buf_kappa_, buf_delta_, next_u_, next_v_;
};

/// Functional form of a single step.
inline LatticeState em_step(const LatticeState& state, double t, double dt, const SystemSpec& spec,
                            const StepNoise& noise) {
    if (!(dt > 0.0)) throw ContractViolation("dt must be positive");
    if (!state.finite()) throw ContractViolation("em_step: non-finite input state");
    Stepper stepper(spec);
    LatticeState out = state;
    stepper.step(out, t, dt, noise);
    return out;
}

struct TrajectoryRecord {
    std::vector<double> times;
    std::vector<LatticeState> states;
    bool blew_up = false;
    long blowup_step = -1;
    std::size_t blowup_site = 0;
    std::uint64_t path_id = 0;
    std::uint64_t path_key = 0;
};

/// Iterates em_step over the grid with noise from the substream family
/// `path_key`, recording the states at the requested save times. A blow-up
/// truncates the record and sets the flag.
inline TrajectoryRecord integrate_path(const LatticeState& initial, const TimeGrid& grid, Stepper& stepper,
                                       std::uint64_t path_key, const std::vector<double>& save_times,
                                       std::uint64_t path_id = 0) {
    if (!initial.finite()) throw ContractViolation("initial state is not finite");
    std::vector<long> save_idx;
    save_idx.reserve(save_times.size());
    for (double t : save_times) save_idx.push_back(grid.index_of(t));

    TrajectoryRecord rec;
    rec.path_id = path_id;
    rec.path_key = path_key;
    LatticeState s = initial;
    const std::size_t K = stepper.modes();
    const auto& levy = stepper.spec().levy;
    const auto& lam = stepper.spec().params.lambda;
    const bool noisy = !lam.is_deterministic() && K > 0;
    StepNoise zero{Vector(K, 0.0), JumpBatch(K)};

    std::size_t next_save = 0;
    auto record = [&](long n) {
        while (next_save < save_idx.size() && save_idx[next_save] == n) {
            rec.times.push_back(grid.time(n));
            rec.states.push_back(s);
            ++next_save;
        }
    };
    record(0);
    for (long n = 0; n < grid.n_steps; ++n) {
        const double t = grid.time(n);
        try {
            if (noisy)
                stepper.step(s, t, grid.dt, draw_step_noise({path_key, static_cast<std::uint64_t>(n)}, grid.dt, levy, K), n);
            else
                stepper.step(s, t, grid.dt, zero, n);
        } catch (const BlowUp& e) {
            rec.blew_up = true;
            rec.blowup_step = n;
            rec.blowup_site = e.site();
            return rec;
        }
        record(n + 1);
    }
    return rec;
}

inline TrajectoryRecord integrate_path(const LatticeState& initial, const TimeGrid& grid, const SystemSpec& spec,
                                       std::uint64_t path_key, const std::vector<double>& save_times) {
    Stepper stepper(spec);
    return integrate_path(initial, grid, stepper, path_key, save_times);
}

// ---------------------------------------------------------------------------
// Ensembles

struct PointMass {
    LatticeState state;
};

struct GaussianCloud {
    LatticeState mean;
    double sd = 0.0;
};

struct Resample {
    EmpiricalMeasure measure;
};

using InitialLaw = std::variant<PointMass, GaussianCloud, Resample>;

struct EnsembleConfig {
    std::size_t M = 1;
    InitialLaw initial_law = PointMass{};
    SeedSpec seed{};
    // Noise substreams depend only on (seed, path index), so ensembles that
    // differ in lambda, start time or initial law are coupled path by path.
    // Otherwise the substreams are additionally keyed by lambda and start time.
    bool common_noise = false;
};

inline std::uint64_t ensemble_path_key(const EnsembleConfig& cfg, std::uint64_t path, const NoiseIntensity& lambda,
                                       double t_start) {
    std::uint64_t key = cfg.seed.path_key(path);
    if (!cfg.common_noise) {
        key = hash_combine(key, std::bit_cast<std::uint64_t>(lambda.eps1));
        key = hash_combine(key, std::bit_cast<std::uint64_t>(lambda.eps2));
        key = hash_combine(key, std::bit_cast<std::uint64_t>(lambda.gamma1));
        key = hash_combine(key, std::bit_cast<std::uint64_t>(lambda.gamma2));
        key = hash_combine(key, std::bit_cast<std::uint64_t>(t_start));
    }
    return key;
}

inline LatticeState sample_initial(const InitialLaw& law, std::uint64_t key) {
    CounterStream s(key, 0, 0, StreamPurpose::InitialLaw);
    return std::visit(
        [&](const auto& l) -> LatticeState {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, PointMass>) {
                return l.state;
            } else if constexpr (std::is_same_v<L, GaussianCloud>) {
                LatticeState x = l.mean;
                for (auto& e : x.u) e += l.sd * s.normal();
                for (auto& e : x.v) e += l.sd * s.normal();
                return x;
            } else {
                const double u = s.uniform();
                double acc = 0.0;
                for (std::size_t j = 0; j < l.measure.size(); ++j) {
                    acc += l.measure.weights[j];
                    if (u < acc) return l.measure.samples[j];
                }
                return l.measure.samples.back();
            }
        },
        law);
}

struct EnsembleRun {
    std::vector<double> save_times;
    std::vector<EmpiricalMeasure> measures;  // one per save time, blown-up paths excluded
    std::size_t blowups = 0;
    std::vector<std::uint64_t> blown_paths;
    std::size_t M = 0;

    double blowup_fraction() const noexcept { return M == 0 ? 0.0 : static_cast<double>(blowups) / static_cast<double>(M); }
};

/// M paths (independent or common-noise coupled) from the initial law, as
/// uniform-weight empirical measures at each save time. Paths are a pure
/// function of their index, so the result is identical for any thread count.
inline EnsembleRun integrate_ensemble(const EnsembleConfig& cfg, const TimeGrid& grid, const SystemSpec& spec,
                                      const std::vector<double>& save_times, unsigned threads = 1) {
    if (cfg.M < 1) throw ContractViolation("ensemble needs M >= 1");
    std::vector<TrajectoryRecord> paths(cfg.M);
    const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(cfg.M)));
    std::vector<std::optional<Stepper>> steppers(workers);
    const std::size_t chunk = (cfg.M + workers - 1) / workers;
    parallel_for(workers, workers, [&](std::size_t w) {
        steppers[w].emplace(spec);
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(cfg.M, lo + chunk);
        for (std::size_t m = lo; m < hi; ++m) {
            const auto key = ensemble_path_key(cfg, m, spec.params.lambda, grid.t_start);
            const LatticeState x0 = sample_initial(cfg.initial_law, key);
            paths[m] = integrate_path(x0, grid, *steppers[w], key, save_times, m);
        }
    });

    EnsembleRun run;
    run.M = cfg.M;
    run.save_times.reserve(save_times.size());
    for (double t : save_times) run.save_times.push_back(grid.time(grid.index_of(t)));
    run.measures.resize(save_times.size());
    std::vector<std::vector<LatticeState>> clouds(save_times.size());
    for (auto& p : paths) {
        if (p.blew_up) {
            ++run.blowups;
            run.blown_paths.push_back(p.path_id);
            continue;
        }
        for (std::size_t j = 0; j < p.states.size(); ++j) clouds[j].push_back(std::move(p.states[j]));
    }
    for (std::size_t j = 0; j < clouds.size(); ++j)
        run.measures[j] = EmpiricalMeasure::uniform(std::move(clouds[j]),
                                                    {run.save_times[j], run.save_times[j] - grid.t_start,
                                                     spec.params.lambda, cfg.seed.master_seed});
    return run;
}

/// Law at tau of the solution started at tau - horizon from the configured
/// initial law. horizon = 0 returns the initial samples.
inline EnsembleRun pullback_ensemble(double tau, double horizon, double dt, const EnsembleConfig& cfg,
                                     const SystemSpec& spec, unsigned threads = 1) {
    if (!(horizon >= 0.0)) throw ContractViolation("pullback horizon must be nonnegative");
    if (horizon == 0.0) {
        std::vector<LatticeState> xs;
        xs.reserve(cfg.M);
        for (std::size_t m = 0; m < cfg.M; ++m)
            xs.push_back(sample_initial(cfg.initial_law, ensemble_path_key(cfg, m, spec.params.lambda, tau)));
        EnsembleRun run;
        run.M = cfg.M;
        run.save_times = {tau};
        run.measures.push_back(EmpiricalMeasure::uniform(std::move(xs), {tau, 0.0, spec.params.lambda, cfg.seed.master_seed}));
        return run;
    }
    const TimeGrid grid = TimeGrid::make(tau - horizon, tau, dt);
    EnsembleRun run = integrate_ensemble(cfg, grid, spec, {tau}, threads);
    for (auto& m : run.measures) {
        m.origin.tau = tau;
        m.origin.horizon = horizon;
    }
    return run;
}

}  // namespace selkov
