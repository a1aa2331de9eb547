#pragma once

// Config-driven numerical checks. Each experiment is a pure function of its
// configuration and master seed and returns a verdict together with the
// thresholds used, summary statistics and a plot-ready series.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "config.hpp"
#include "csv.hpp"
#include "integrator.hpp"
#include "measure_lab.hpp"
#include "statistics.hpp"

namespace selkov {

enum class Verdict { Pass, Fail, Inconclusive };

inline const char* verdict_name(Verdict v) {
    switch (v) {
        case Verdict::Pass: return "pass";
        case Verdict::Fail: return "fail";
        case Verdict::Inconclusive: return "inconclusive";
    }
    return "fail";
}

struct ExtraFile {
    std::string name;
    std::string content;
};

struct ExperimentResult {
    std::string id;
    std::string claim;
    Verdict verdict = Verdict::Fail;
    json thresholds = json::object();
    json statistics = json::object();
    std::vector<csv::SeriesRow> series;
    std::vector<ExtraFile> extra_files;
    std::vector<std::string> notes;
};

inline json result_json(const ExperimentResult& r) {
    return {{"id", r.id},
            {"claim", r.claim},
            {"verdict", verdict_name(r.verdict)},
            {"thresholds", r.thresholds},
            {"statistics", r.statistics},
            {"notes", r.notes}};
}

/// Writes <dir>/<id>/result.json, series.csv and any extra files.
inline std::filesystem::path write_result(const std::filesystem::path& dir, const ExperimentResult& r) {
    const auto out = dir / r.id;
    std::filesystem::create_directories(out);
    {
        std::ofstream f(out / "result.json", std::ios::binary);
        f << result_json(r).dump(2) << '\n';
    }
    {
        std::ofstream f(out / "series.csv", std::ios::binary);
        csv::write_series(f, r.series);
    }
    for (const auto& e : r.extra_files) {
        std::ofstream f(out / e.name, std::ios::binary);
        f << e.content;
    }
    return out;
}

namespace detail {

inline SystemSpec with_lambda(SystemSpec s, const NoiseIntensity& l) {
    s.params.lambda = l;
    return s;
}

inline std::vector<double> grid_times(const TimeGrid& g, long every) {
    std::vector<double> t;
    for (long n = 0; n <= g.n_steps; n += every) t.push_back(g.time(n));
    if (g.n_steps % every != 0) t.push_back(g.t_end);
    return t;
}

inline double sup_distance(const TrajectoryRecord& a, const TrajectoryRecord& b) {
    double d = 0.0;
    const std::size_t n = std::min(a.states.size(), b.states.size());
    for (std::size_t j = 0; j < n; ++j) d = std::max(d, state_distance(a.states[j], b.states[j]));
    return d;
}

/// Initial law with total second moment m on the window: a point mass at 0
/// for m = 0, otherwise i.i.d. N(0, m / (2 sites)) entries.
inline InitialLaw law_with_moment(double m, const TruncationConfig& trunc) {
    if (m <= 0.0) return PointMass{LatticeState::zeros(trunc)};
    return GaussianCloud{LatticeState::zeros(trunc), std::sqrt(m / (2.0 * static_cast<double>(trunc.sites())))};
}

inline std::vector<double> squared_norms(const EmpiricalMeasure& mu) {
    std::vector<double> out;
    out.reserve(mu.size());
    for (const auto& s : mu.samples) out.push_back(norm_sq(s.u) + norm_sq(s.v));
    return out;
}

inline void require_no_excess_blowups(const EnsembleRun& run, std::size_t& blowups, std::size_t& paths) {
    blowups += run.blowups;
    paths += run.M;
}

inline DistanceMethod parse_distance_method(const std::string& s) {
    if (s == "lp") return DistanceMethod::LPOracle;
    if (s == "transport_dual") return DistanceMethod::TransportDual;
    if (s == "random") return DistanceMethod::RandomTestFunctions;
    throw ContractViolation("unknown distance method '" + s + "' (lp, transport_dual, random)");
}

/// d_BL estimate; the LP route subsamples to its atom budget.
inline double bl_distance(const EmpiricalMeasure& a, const EmpiricalMeasure& b, DistanceMethod method, std::uint64_t seed) {
    if (method == DistanceMethod::LPOracle) {
        const std::size_t half = kLpAtomBudget / 2;
        return dual_lipschitz_distance(head_subsample(compress(a), half, hash_combine(seed, 1)),
                                       head_subsample(compress(b), half, hash_combine(seed, 2)), method)
            .value;
    }
    DistanceOptions opt;
    opt.seed = seed;
    return dual_lipschitz_distance(a, b, method, opt).value;
}

/// Uniform resample (with replacement) of the atoms of a uniform-weight measure.
inline EmpiricalMeasure resample(const EmpiricalMeasure& mu, std::uint64_t seed) {
    CounterStream s(seed, 0, 0, StreamPurpose::Resampling);
    std::vector<LatticeState> xs;
    xs.reserve(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) xs.push_back(mu.samples[stats::draw_index(s, mu.size())]);
    return EmpiricalMeasure::uniform(std::move(xs), mu.origin);
}

/// Disjoint random halves of a uniform-weight measure.
inline std::pair<EmpiricalMeasure, EmpiricalMeasure> split_halves(const EmpiricalMeasure& mu, std::uint64_t seed) {
    std::vector<std::size_t> idx(mu.size());
    std::iota(idx.begin(), idx.end(), 0);
    CounterStream s(seed, 0, 0, StreamPurpose::Resampling);
    for (std::size_t i = idx.size() - 1; i > 0; --i) std::swap(idx[i], idx[stats::draw_index(s, i + 1)]);
    std::vector<LatticeState> a, b;
    for (std::size_t i = 0; i < idx.size(); ++i) (i < idx.size() / 2 ? a : b).push_back(mu.samples[idx[i]]);
    return {EmpiricalMeasure::uniform(std::move(a)), EmpiricalMeasure::uniform(std::move(b))};
}

inline double blowup_fraction(std::size_t blowups, std::size_t paths) {
    return paths == 0 ? 0.0 : static_cast<double>(blowups) / static_cast<double>(paths);
}

inline constexpr double kMaxBlowupFraction = 1e-3;

}  // namespace detail

// ---------------------------------------------------------------------------
// Single-site demonstration

inline ExperimentResult run_section7_demo(const RunConfig& cfg, unsigned /*threads*/ = 1) {
    ExperimentResult r;
    r.id = "section7";
    r.claim = "single-site demonstration: deterministic limit path, dt-halving stability, and closeness of noisy paths as lambda -> 0";
    const json& p = cfg.experiment;
    const auto lambdas = p.value("lambdas", std::vector<double>{0.05, 0.4});
    const double tol = p.value("halving_tolerance", 1e-3);
    r.thresholds = {{"halving_tolerance", tol}, {"lambdas", lambdas}};

    const TimeGrid grid = TimeGrid::make(cfg.grid.t_start, cfg.grid.t_end, cfg.grid.dt);
    const TimeGrid half = TimeGrid::make(cfg.grid.t_start, cfg.grid.t_end, cfg.grid.dt / 2.0);
    const auto every = detail::grid_times(grid, 1);
    const LatticeState x0 = cfg.ensemble.initial_law.mean;
    const std::uint64_t key = SeedSpec{cfg.seed}.path_key(0);

    const SystemSpec det = detail::with_lambda(cfg.system, NoiseIntensity{});
    TrajectoryRecord base = integrate_path(x0, grid, det, key, every);
    const TrajectoryRecord fine = integrate_path(x0, half, det, key, {cfg.grid.t_end});
    std::string traj;
    bool ok = !base.blew_up && !fine.blew_up;
    if (!ok) r.notes.push_back("deterministic path blew up");
    double shift = std::numeric_limits<double>::infinity();
    if (ok) {
        const auto& a = base.states.back();
        const auto& b = fine.states.back();
        shift = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i)
            shift = std::max({shift, std::abs(a.u[i] - b.u[i]), std::abs(a.v[i] - b.v[i])});
    }
    r.statistics["deterministic_endpoint"] = ok ? json{{"u", base.states.back().u}, {"v", base.states.back().v}} : json();
    r.statistics["halving_shift"] = ok ? json(shift) : json("blow-up");
    r.series.push_back({cfg.grid.dt, ok ? shift : -1.0, 0.0, tol, "halving_shift"});
    ok = ok && shift < tol;

    auto thin = [&](const TrajectoryRecord& rec) {
        TrajectoryRecord t;
        t.path_id = rec.path_id;
        for (std::size_t j = 0; j < rec.states.size(); j += static_cast<std::size_t>(cfg.grid.save_every)) {
            t.times.push_back(rec.times[j]);
            t.states.push_back(rec.states[j]);
        }
        return t;
    };
    std::ostringstream os;
    base.path_id = 0;
    csv::write_trajectory(os, thin(base), cfg.system.trunc, true);

    std::vector<double> sorted = lambdas;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> sup_by_c;
    json paths = json::array();
    for (std::size_t k = 0; k < sorted.size(); ++k) {
        const double c = sorted[k];
        TrajectoryRecord rec = integrate_path(x0, grid, detail::with_lambda(cfg.system, NoiseIntensity::diagonal(c)), key, every);
        rec.path_id = k + 1;
        if (rec.blew_up) {
            ok = false;
            r.notes.push_back("path for lambda=" + csv::number(c) + " blew up at step " + std::to_string(rec.blowup_step) +
                              ", site " + std::to_string(cfg.system.trunc.lattice_index(rec.blowup_site)));
        }
        const double d = detail::sup_distance(rec, base);
        sup_by_c.push_back(d);
        paths.push_back({{"lambda", c}, {"path_id", k + 1}, {"sup_distance", d}, {"blew_up", rec.blew_up}});
        r.series.push_back({c, d, d, d, "sup_distance"});
        csv::write_trajectory(os, thin(rec), cfg.system.trunc, false);
    }
    bool monotone = true;
    for (std::size_t k = 1; k < sup_by_c.size(); ++k) monotone = monotone && sup_by_c[k] > sup_by_c[k - 1];
    r.statistics["paths"] = paths;
    r.statistics["monotone_in_lambda"] = monotone;
    ok = ok && monotone;
    r.extra_files.push_back({"trajectories.csv", os.str()});
    r.verdict = ok ? Verdict::Pass : Verdict::Fail;
    return r;
}

// ---------------------------------------------------------------------------
// Strong convergence as lambda -> lambda_0

inline ExperimentResult run_strong_convergence(const RunConfig& cfg, unsigned threads = 1) {
    ExperimentResult r;
    r.id = "strong-convergence";
    r.claim = "E sup_{t<=T1} |phi^lambda - phi^lambda0|^2 scales like |lambda - lambda0|^2 under common noise";
    const json& p = cfg.experiment;
    const auto cs = p.value("lambdas", std::vector<double>{0.4, 0.2, 0.1, 0.05});
    const double T1 = p.value("T1", 1.0);
    const double smin = p.value("slope_min", 1.6), smax = p.value("slope_max", 2.4);
    const std::size_t B = p.value("bootstrap", 200);
    r.thresholds = {{"slope_min", smin}, {"slope_max", smax}, {"ci_width_max", "half the fitted slope"}, {"lambdas", cs},
                    {"T1", T1}, {"max_blowup_fraction", detail::kMaxBlowupFraction}};

    const TimeGrid grid = TimeGrid::make(cfg.grid.t_start, cfg.grid.t_start + T1, cfg.grid.dt);
    const std::size_t M = cfg.ensemble.M;
    const std::size_t C = cs.size();
    std::vector<double> sup(M * C, 0.0);
    std::vector<char> blown(M, 0);
    const EnsembleConfig ens = make_ensemble(cfg);
    const std::size_t K = cfg.system.forcing.K_modes();

    const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(M)));
    const std::size_t chunk = (M + workers - 1) / workers;
    parallel_for(workers, workers, [&](std::size_t w) {
        Stepper base(detail::with_lambda(cfg.system, NoiseIntensity{}));
        std::vector<Stepper> noisy;
        for (double c : cs) noisy.emplace_back(detail::with_lambda(cfg.system, NoiseIntensity::diagonal(c)));
        for (std::size_t m = w * chunk; m < std::min(M, (w + 1) * chunk); ++m) {
            const std::uint64_t key = ens.seed.path_key(m);
            const LatticeState x0 = sample_initial(ens.initial_law, key);
            LatticeState y = x0;
            std::vector<LatticeState> xs(C, x0);
            try {
                for (long n = 0; n < grid.n_steps; ++n) {
                    const double t = grid.time(n);
                    const StepNoise noise = draw_step_noise({key, static_cast<std::uint64_t>(n)}, grid.dt, cfg.system.levy, K);
                    base.step(y, t, grid.dt, noise, n);
                    for (std::size_t k = 0; k < C; ++k) {
                        noisy[k].step(xs[k], t, grid.dt, noise, n);
                        const double d = state_distance(xs[k], y);
                        sup[m * C + k] = std::max(sup[m * C + k], d * d);
                    }
                }
            } catch (const BlowUp&) {
                blown[m] = 1;
            }
        }
    });

    std::vector<std::size_t> kept;
    for (std::size_t m = 0; m < M; ++m)
        if (!blown[m]) kept.push_back(m);
    const double frac = detail::blowup_fraction(M - kept.size(), M);
    auto means_for = [&](const std::vector<std::size_t>& idx) {
        std::vector<double> mean(C, 0.0);
        for (std::size_t m : idx)
            for (std::size_t k = 0; k < C; ++k) mean[k] += sup[m * C + k];
        for (auto& v : mean) v /= static_cast<double>(idx.size());
        return mean;
    };
    const auto mean = means_for(kept);
    const auto fit = stats::fit_loglog(cs, mean);

    std::vector<double> slopes;
    std::vector<std::vector<double>> per_c(C);
    for (std::size_t b = 0; b < B; ++b) {
        CounterStream s(hash_combine(cfg.seed, 0x5c0), b, 0, StreamPurpose::Resampling);
        std::vector<std::size_t> idx(kept.size());
        for (auto& i : idx) i = kept[stats::draw_index(s, kept.size())];
        const auto mb = means_for(idx);
        slopes.push_back(stats::fit_loglog(cs, mb).slope);
        for (std::size_t k = 0; k < C; ++k) per_c[k].push_back(mb[k]);
    }
    const double lo = stats::quantile(slopes, 0.025), hi = stats::quantile(slopes, 0.975);
    for (std::size_t k = 0; k < C; ++k)
        r.series.push_back({cs[k], mean[k], stats::quantile(per_c[k], 0.025), stats::quantile(per_c[k], 0.975), "mean_sup_sq"});
    r.statistics = {{"slope", fit.slope}, {"slope_ci", {lo, hi}}, {"intercept", fit.intercept},
                    {"paths", M}, {"blowup_fraction", frac}, {"mean_sup_sq", mean}};
    if (frac > detail::kMaxBlowupFraction) {
        r.verdict = Verdict::Fail;
        r.notes.push_back("blow-up fraction above limit");
    } else if (hi - lo > 0.5 * std::abs(fit.slope)) {
        r.verdict = Verdict::Inconclusive;
    } else {
        r.verdict = (fit.slope >= smin && fit.slope <= smax) ? Verdict::Pass : Verdict::Fail;
    }
    return r;
}

// ---------------------------------------------------------------------------
// Moment forgetting

namespace detail {

struct GapCurve {
    std::vector<double> horizons;
    std::vector<double> gap;  // |E|X_B|^2 - E|X_A|^2|
    std::vector<double> lo, hi;
    std::vector<double> mA, mB;
    std::size_t blowups = 0, paths = 0;
};

/// Paired pullback ensembles from laws A and B sharing noise by path index.
inline GapCurve gap_curve(const SystemSpec& sys, const InitialLaw& A, const InitialLaw& B, std::size_t M, std::uint64_t seed,
                          double tau, const std::vector<double>& horizons, double dt, std::size_t boot, unsigned threads) {
    GapCurve g;
    for (double h : horizons) {
        EnsembleConfig ea{M, A, SeedSpec{seed}, true};
        EnsembleConfig eb{M, B, SeedSpec{seed}, true};
        const auto ra = pullback_ensemble(tau, h, dt, ea, sys, threads);
        const auto rb = pullback_ensemble(tau, h, dt, eb, sys, threads);
        g.blowups += ra.blowups + rb.blowups;
        g.paths += 2 * M;
        const auto na = squared_norms(ra.measures[0]);
        const auto nb = squared_norms(rb.measures[0]);
        // Pair by path id when no path blew up; otherwise fall back to the difference of means.
        std::vector<double> diff;
        if (na.size() == nb.size()) {
            for (std::size_t i = 0; i < na.size(); ++i) diff.push_back(nb[i] - na[i]);
        } else {
            diff.push_back(stats::mean(nb) - stats::mean(na));
        }
        const auto ci = stats::bootstrap_mean(diff, boot, hash_combine(seed, std::bit_cast<std::uint64_t>(h)));
        g.horizons.push_back(h);
        g.gap.push_back(std::abs(ci.estimate));
        g.lo.push_back(ci.lo);
        g.hi.push_back(ci.hi);
        g.mA.push_back(stats::mean(na));
        g.mB.push_back(stats::mean(nb));
    }
    return g;
}

/// Rate w of gap(t) ~ C exp(-2 w t), from a least-squares fit of log gap
/// over the horizons whose bootstrap interval excludes zero.
inline double fitted_rate(const GapCurve& g) {
    std::vector<double> t, y;
    for (std::size_t i = 0; i < g.gap.size(); ++i)
        if (g.gap[i] > 0.0 && g.lo[i] * g.hi[i] > 0.0) {
            t.push_back(g.horizons[i]);
            y.push_back(std::log(g.gap[i]));
        }
    if (t.size() < 2) return 0.0;
    return -stats::fit_line(t, y).slope / 2.0;
}

/// Calibrates C in L1 = C R(tau) as the largest reference second moment over
/// R(tau), using pullback runs from the zero law with an independent seed.
inline double calibrate_C(const SystemSpec& sys, const DissipativityReport& rep, std::size_t M, std::uint64_t seed,
                          double tau, const std::vector<double>& horizons, double dt, unsigned threads,
                          std::vector<double>* moments = nullptr) {
    double worst = 0.0;
    for (double h : horizons) {
        EnsembleConfig e{M, PointMass{LatticeState::zeros(sys.trunc)}, SeedSpec{hash_combine(seed, 0xca1)}, false};
        const auto run = pullback_ensemble(tau, h, dt, e, sys, threads);
        const double m = second_moment(run.measures[0]);
        if (moments) moments->push_back(m);
        worst = std::max(worst, m);
    }
    return rep.R_tau > 0.0 ? worst / rep.R_tau : 0.0;
}

inline DissipativityReport dissipativity(const RunConfig& cfg, double tau) {
    auto rep = compute_absorbing_radius(tau, cfg.system.params, cfg.system.forcing, cfg.system.trunc, 1.0, cfg.grid.dt);
    if (!rep.hypothesis_ok) throw HypothesisViolated("dissipativity hypothesis not met: " + rep.note);
    const auto times = linspace(tau - 2.0 * std::numbers::pi, tau, 201);
    const auto growth = validate_growth_bound(cfg.system.forcing, cfg.system.levy, times, linspace(-20.0, 20.0, 81), cfg.system.trunc);
    if (!growth.passed)
        throw HypothesisViolated("linear growth bound fails: sigma ratio " + csv::number(growth.max_sigma_ratio) +
                                 ", jump ratio " + csv::number(growth.max_jump_ratio));
    return rep;
}

inline json report_json(const DissipativityReport& rep) {
    return {{"varpi", rep.varpi}, {"R_tau", rep.R_tau}, {"R_error", rep.R_error}, {"C", rep.C},
            {"L1_tau", rep.L1_tau}, {"K_radius", rep.K_radius}, {"hypothesis_ok", rep.hypothesis_ok}};
}

}  // namespace detail

inline ExperimentResult run_moment_decay(const RunConfig& cfg, unsigned threads = 1) {
    ExperimentResult r;
    r.id = "moment-decay";
    r.claim = "uniform moment estimates: pullback second moments forget the initial law exponentially fast";
    const json& p = cfg.experiment;
    const double tau = p.value("tau", 0.0);
    const auto moments = p.value("moments", std::vector<double>{0.0, 100.0});
    const auto horizons = p.value("horizons", std::vector<double>{});
    const double gap_fraction = p.value("gap_fraction", 0.01);
    const double envelope_factor = p.value("envelope_factor", 1.5);
    const double ref_horizon = p.value("reference_horizon", 8.0);
    const double ctrl_tol = p.value("control_tolerance", 0.3);
    const json ctrl = p.value("control", json::object());
    const std::size_t B = p.value("bootstrap", 200);
    if (moments.size() != 2) throw ContractViolation("moment-decay needs exactly two initial moments");
    r.thresholds = {{"gap_fraction", gap_fraction}, {"check_horizon", "10 / fitted rate"}, {"envelope_factor", envelope_factor},
                    {"control_tolerance", ctrl_tol}, {"rate_convention", "gap ~ exp(-2 rate t)"},
                    {"max_blowup_fraction", detail::kMaxBlowupFraction}};

    auto rep = detail::dissipativity(cfg, tau);
    const auto& sys = cfg.system;
    const std::size_t M = cfg.ensemble.M;
    const InitialLaw A = detail::law_with_moment(moments[0], sys.trunc);
    const InitialLaw Bl = detail::law_with_moment(moments[1], sys.trunc);
    auto curve = detail::gap_curve(sys, A, Bl, M, cfg.seed, tau, horizons, cfg.grid.dt, B, threads);
    const double rate = detail::fitted_rate(curve);
    for (std::size_t i = 0; i < curve.horizons.size(); ++i) {
        r.series.push_back({curve.horizons[i], curve.gap[i], curve.lo[i], curve.hi[i], "gap"});
        r.series.push_back({curve.horizons[i], curve.lo[i] * curve.hi[i] > 0.0 ? 1.0 : 0.0, 0.0, 1.0, "gap_resolved"});
        r.series.push_back({curve.horizons[i], curve.mA[i], curve.mA[i], curve.mA[i], "moment_A"});
        r.series.push_back({curve.horizons[i], curve.mB[i], curve.mB[i], curve.mB[i], "moment_B"});
    }

    bool ok = rate > 0.0;
    double ratio = std::numeric_limits<double>::infinity();
    json check = json::object();
    if (ok) {
        // Grid-aligned horizon near 10 / rate.
        const double t_check = std::ceil(10.0 / rate / cfg.grid.dt) * cfg.grid.dt;
        auto late = detail::gap_curve(sys, A, Bl, M, cfg.seed, tau, {t_check}, cfg.grid.dt, B, threads);
        curve.blowups += late.blowups;
        curve.paths += late.paths;
        const auto start = detail::gap_curve(sys, A, Bl, M, cfg.seed, tau, {0.0}, cfg.grid.dt, 0, threads);
        const double initial_gap = start.gap[0];
        ratio = late.gap[0] / initial_gap;
        rep.C = detail::calibrate_C(sys, rep, M, cfg.seed, tau, {ref_horizon}, cfg.grid.dt, threads);
        rep.L1_tau = rep.C * rep.R_tau;
        rep.K_radius = std::sqrt(rep.L1_tau);
        const double envelope = envelope_factor * rep.L1_tau;
        const bool inside = late.mA[0] <= envelope && late.mB[0] <= envelope;
        check = {{"t_check", t_check}, {"initial_gap", initial_gap}, {"gap", late.gap[0]}, {"gap_ratio", ratio}, {"moment_A", late.mA[0]},
                 {"moment_B", late.mB[0]}, {"envelope", envelope}, {"inside_envelope", inside}};
        r.series.push_back({t_check, late.gap[0], late.lo[0], late.hi[0], "gap_check"});
        ok = ratio < gap_fraction && inside;
    }

    // Linear control model: b1 = b2 = 0, single site, additive noise. The
    // forgetting rate is exactly a1 ^ a2.
    RunConfig lc;
    lc.system.params = {1.0, 1.0, ctrl.value("a1", 1.0), ctrl.value("a2", 1.5), 0.0, 0.0, 1, NoiseIntensity::diagonal(1.0), true};
    lc.system.trunc = {0, Boundary::Periodic};
    lc.system.variant = SchemeVariant::CompensatedForm;
    const double amp = ctrl.value("amplitude", 1.0);
    NoiseMode mode;
    mode.h = constant_field(amp);
    mode.kappa = constant_field(amp);
    lc.system.forcing.modes = {mode};
    lc.system.levy.poisson_intensity = ctrl.value("intensity", 0.5);
    lc.system.levy.truncate_small = true;
    const std::size_t cM = ctrl.value("M", 2000);
    const double cdt = ctrl.value("dt", 0.001);
    const auto ch = ctrl.value("horizons", std::vector<double>{0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0});
    const double cm = ctrl.value("moment", 100.0);
    auto cc = detail::gap_curve(lc.system, detail::law_with_moment(0.0, lc.system.trunc), detail::law_with_moment(cm, lc.system.trunc),
                                cM, hash_combine(cfg.seed, 0xc0), tau, ch, cdt, B, threads);
    const double crate = detail::fitted_rate(cc);
    const double exact = std::min(lc.system.params.a1, lc.system.params.a2);
    const double rel = std::abs(crate - exact) / exact;
    for (std::size_t i = 0; i < cc.horizons.size(); ++i)
        r.series.push_back({cc.horizons[i], cc.gap[i], cc.lo[i], cc.hi[i], "control_gap"});
    ok = ok && rel <= ctrl_tol;

    const double frac = detail::blowup_fraction(curve.blowups + cc.blowups, curve.paths + cc.paths);
    ok = ok && frac <= detail::kMaxBlowupFraction;
    r.statistics = {{"dissipativity", detail::report_json(rep)},
                    {"fitted_rate", rate},
                    {"varpi_theory", rep.varpi},
                    {"check", check},
                    {"control", {{"fitted_rate", crate}, {"exact_rate", exact}, {"relative_error", rel}}},
                    {"paths", M},
                    {"blowup_fraction", frac}};
    r.verdict = ok ? Verdict::Pass : Verdict::Fail;
    return r;
}

// ---------------------------------------------------------------------------
// Tail uniformity

inline ExperimentResult run_tail_uniformity(const RunConfig& cfg, unsigned threads = 1) {
    ExperimentResult r;
    r.id = "tail-uniformity";
    r.claim = "uniform estimates on the tails: far-field mass stays small uniformly in the pullback horizon";
    const json& p = cfg.experiment;
    const double tau = p.value("tau", 0.0);
    const auto horizons = p.value("horizons", std::vector<double>{5.0, 10.0, 20.0});
    const auto ns = p.value("tail_indices", std::vector<int>{8, 16, 32});
    const double frac_max = p.value("tail_fraction", 0.01);
    const double uni = p.value("uniformity_factor", 2.0);
    const std::size_t B = p.value("bootstrap", 200);
    r.thresholds = {{"tail_fraction", frac_max}, {"uniformity_factor", uni}, {"tail_indices", ns}, {"horizons", horizons},
                    {"max_blowup_fraction", detail::kMaxBlowupFraction}};

    const EnsembleConfig ens = make_ensemble(cfg);
    std::vector<std::vector<double>> tails(ns.size());
    std::vector<double> totals;
    bool monotone = true, small = true;
    std::size_t blowups = 0, paths = 0;
    json per_t = json::array();
    for (double h : horizons) {
        const auto run = pullback_ensemble(tau, h, cfg.grid.dt, ens, cfg.system, threads);
        blowups += run.blowups;
        paths += run.M;
        const auto& mu = run.measures[0];
        const double total = second_moment(mu);
        totals.push_back(total);
        double prev = std::numeric_limits<double>::infinity();
        json row = {{"horizon", h}, {"total", total}};
        for (std::size_t k = 0; k < ns.size(); ++k) {
            const auto tm = tail_mass(mu, ns[k], cfg.system.trunc);
            tails[k].push_back(tm.hard);
            monotone = monotone && tm.hard <= prev;
            prev = tm.hard;
            // Per-path tails for a bootstrap band.
            std::vector<double> per_path;
            for (const auto& s : mu.samples) per_path.push_back(tail_mass(EmpiricalMeasure::dirac(s), ns[k], cfg.system.trunc).hard);
            const auto ci = stats::bootstrap_mean(per_path, B, hash_combine(cfg.seed, static_cast<std::uint64_t>(k) * 131 + static_cast<std::uint64_t>(h)));
            r.series.push_back({static_cast<double>(ns[k]), tm.hard, ci.lo, ci.hi, "t=" + csv::number(h)});
            row["tail_" + std::to_string(ns[k])] = tm.hard;
            row["weighted_tail_" + std::to_string(ns[k])] = tm.weighted;
        }
        const double last = tails.back().back();
        row["largest_index_fraction"] = total > 0.0 ? last / total : 0.0;
        small = small && (total > 0.0 ? last / total < frac_max : true);
        per_t.push_back(row);
    }
    bool uniform = true;
    json spread = json::object();
    for (std::size_t k = 0; k < ns.size(); ++k) {
        const auto [mn, mx] = std::minmax_element(tails[k].begin(), tails[k].end());
        const double ratio = *mn > 0.0 ? *mx / *mn : (*mx == 0.0 ? 1.0 : std::numeric_limits<double>::infinity());
        spread[std::to_string(ns[k])] = ratio;
        uniform = uniform && ratio < uni;
    }
    const double frac = detail::blowup_fraction(blowups, paths);
    r.statistics = {{"per_horizon", per_t}, {"max_over_min_by_index", spread}, {"monotone_in_n", monotone},
                    {"small_at_largest_index", small}, {"uniform_in_t", uniform}, {"paths", cfg.ensemble.M},
                    {"blowup_fraction", frac}};
    r.verdict = (monotone && small && uniform && frac <= detail::kMaxBlowupFraction) ? Verdict::Pass : Verdict::Fail;
    return r;
}

// ---------------------------------------------------------------------------
// Absorption

inline ExperimentResult run_absorption(const RunConfig& cfg, unsigned threads = 1) {
    ExperimentResult r;
    r.id = "absorption";
    r.claim = "absorbing ball: pullback ensembles from laws of any second moment enter and stay in the ball of radius sqrt(L1(tau))";
    const json& p = cfg.experiment;
    const double tau = p.value("tau", 0.0);
    const auto moments = p.value("moments", std::vector<double>{0.0, 1.0, 10.0, 100.0, 1000.0});
    const auto horizons = p.value("horizons", std::vector<double>{4.0, 6.0, 8.0});
    const auto ref_h = p.value("reference_horizons", std::vector<double>{4.0, 6.0, 8.0});
    const double factor = p.value("envelope_factor", 1.5);
    const std::size_t B = p.value("bootstrap", 200);
    r.thresholds = {{"envelope_factor", factor}, {"moments", moments}, {"horizons", horizons},
                    {"calibration", "C = max reference second moment / R(tau), zero initial law, independent seed"},
                    {"max_blowup_fraction", detail::kMaxBlowupFraction}};

    auto rep = detail::dissipativity(cfg, tau);
    std::vector<double> ref_moments;
    rep.C = detail::calibrate_C(cfg.system, rep, cfg.ensemble.M, cfg.seed, tau, ref_h, cfg.grid.dt, threads, &ref_moments);
    rep.L1_tau = rep.C * rep.R_tau;
    rep.K_radius = std::sqrt(rep.L1_tau);
    const double envelope = factor * rep.L1_tau;

    bool ok = true;
    std::size_t blowups = 0, paths = 0;
    json laws = json::array();
    for (double m : moments) {
        EnsembleConfig e{cfg.ensemble.M, detail::law_with_moment(m, cfg.system.trunc), SeedSpec{cfg.seed}, false};
        json row = {{"initial_moment", m}};
        json values = json::array();
        for (double h : horizons) {
            const auto run = pullback_ensemble(tau, h, cfg.grid.dt, e, cfg.system, threads);
            blowups += run.blowups;
            paths += run.M;
            const auto norms = detail::squared_norms(run.measures[0]);
            const auto ci = stats::bootstrap_mean(norms, B, hash_combine(cfg.seed, std::bit_cast<std::uint64_t>(m * 7.0 + h)));
            values.push_back(ci.estimate);
            ok = ok && ci.estimate <= envelope;
            r.series.push_back({h, ci.estimate, ci.lo, ci.hi, "m0=" + csv::number(m)});
        }
        row["second_moments"] = values;
        laws.push_back(row);
    }
    for (std::size_t i = 0; i < ref_h.size(); ++i) r.series.push_back({ref_h[i], ref_moments[i], ref_moments[i], ref_moments[i], "reference"});
    const double frac = detail::blowup_fraction(blowups, paths);
    r.statistics = {{"dissipativity", detail::report_json(rep)}, {"envelope", envelope}, {"laws", laws},
                    {"reference_moments", ref_moments}, {"paths", cfg.ensemble.M}, {"blowup_fraction", frac}};
    r.verdict = (ok && frac <= detail::kMaxBlowupFraction) ? Verdict::Pass : Verdict::Fail;
    return r;
}

// ---------------------------------------------------------------------------
// Upper semicontinuity in lambda

inline ExperimentResult run_upper_semicontinuity(const RunConfig& cfg, unsigned threads = 1) {
    ExperimentResult r;
    r.id = "upper-semicontinuity";
    r.claim = "upper semicontinuity: d_BL between pullback measures at lambda and lambda0 vanishes as lambda -> lambda0";
    const json& p = cfg.experiment;
    const double tau = p.value("tau", 0.0);
    auto cs = p.value("lambdas", std::vector<double>{0.8, 0.4, 0.2, 0.1, 0.05});
    const double horizon = p.value("horizon", 4.0);
    const double rho_min = p.value("rho_min", 0.8);
    const double floor_factor = p.value("floor_factor", 3.0);
    const std::size_t B = p.value("bootstrap", 20);
    const auto method = detail::parse_distance_method(p.value("distance", std::string("transport_dual")));
    r.thresholds = {{"rho_min", rho_min}, {"floor_factor", floor_factor}, {"horizon", horizon}, {"lambdas", cs},
                    {"noise_floor", "mean d_BL between disjoint random halves of the largest-lambda ensemble"},
                    {"surrogate_check", "d_BL(horizon, 2 horizon) at the largest lambda <= noise floor + 2 sd"},
                    {"max_blowup_fraction", detail::kMaxBlowupFraction}};
    std::sort(cs.begin(), cs.end());

    EnsembleConfig ens = make_ensemble(cfg);
    std::size_t blowups = 0, paths = 0;
    auto measure_at = [&](double c, double h) {
        const auto run = pullback_ensemble(tau, h, cfg.grid.dt, ens, detail::with_lambda(cfg.system, NoiseIntensity::diagonal(c)), threads);
        blowups += run.blowups;
        paths += run.M;
        return run.measures[0];
    };
    auto floor_of = [&](const EmpiricalMeasure& mu, std::uint64_t salt) {
        std::vector<double> ds;
        for (std::size_t b = 0; b < B; ++b) {
            const auto [x, y] = detail::split_halves(mu, hash_combine(hash_combine(cfg.seed, salt), b));
            ds.push_back(detail::bl_distance(x, y, method, hash_combine(cfg.seed, b)));
        }
        return std::pair{stats::mean(ds), stats::stddev(ds)};
    };

    const EmpiricalMeasure ref = measure_at(0.0, horizon);
    std::vector<double> dist;
    std::vector<EmpiricalMeasure> mus;
    for (double c : cs) {
        mus.push_back(measure_at(c, horizon));
        const double d = detail::bl_distance(mus.back(), ref, method, cfg.seed);
        std::vector<double> boots;
        for (std::size_t b = 0; b < B; ++b)
            boots.push_back(detail::bl_distance(detail::resample(mus.back(), hash_combine(cfg.seed, 0xb00 + b)), ref, method, b));
        dist.push_back(d);
        r.series.push_back({c, d, stats::quantile(boots, 0.025), stats::quantile(boots, 0.975), "d_BL"});
    }

    // The sweep's resolution is set by its widest ensemble. A floor taken at
    // the smallest lambda shrinks with lambda, so their ratio says nothing
    // about the limit; it is reported for reference only.
    const auto [floor, floor_sd] = floor_of(mus.back(), 0xf2);
    const auto [floor_small, floor_small_sd] = floor_of(mus.front(), 0xf1);
    const EmpiricalMeasure doubled = measure_at(cs.back(), 2.0 * horizon);
    const double doubling = detail::bl_distance(mus.back(), doubled, method, cfg.seed);
    const double rho = stats::spearman(cs, dist);
    const auto slope = stats::fit_loglog(cs, dist);
    r.series.push_back({cs.back(), floor, floor - 2.0 * floor_sd, floor + 2.0 * floor_sd, "noise_floor"});
    r.series.push_back({cs.front(), floor_small, floor_small - 2.0 * floor_small_sd, floor_small + 2.0 * floor_small_sd,
                        "noise_floor_smallest"});
    r.series.push_back({2.0 * horizon, doubling, 0.0, floor + 2.0 * floor_sd, "doubling"});
    const double frac = detail::blowup_fraction(blowups, paths);
    r.statistics = {{"distances", dist}, {"spearman_rho", rho}, {"noise_floor", floor}, {"noise_floor_sd", floor_sd},
                    {"smallest_over_floor", dist.front() / floor}, {"largest_over_floor", dist.back() / floor},
                    {"noise_floor_smallest_lambda", floor_small}, {"smallest_over_own_floor", dist.front() / floor_small},
                    {"doubling_distance", doubling}, {"loglog_slope", slope.slope}, {"paths", cfg.ensemble.M},
                    {"blowup_fraction", frac}};
    if (doubling > floor + 2.0 * floor_sd) {
        r.verdict = Verdict::Inconclusive;
        r.notes.push_back("attractor surrogate not converged: doubling the horizon moves d_BL above the noise floor");
        return r;
    }
    const bool ok = rho >= rho_min && dist.front() < floor_factor * floor && frac <= detail::kMaxBlowupFraction;
    r.verdict = ok ? Verdict::Pass : Verdict::Fail;
    return r;
}

// ---------------------------------------------------------------------------
// Periodicity

inline ExperimentResult run_periodicity(const RunConfig& cfg, unsigned threads = 1) {
    ExperimentResult r;
    r.id = "periodicity";
    r.claim = "periodic forcing gives a periodic pullback measure attractor; a non-periodic control does not";
    const json& p = cfg.experiment;
    const double tau = p.value("tau", 0.0);
    const double horizon = p.value("horizon", 4.0);
    const auto periods = p.value("periods", std::vector<int>{1, 2});
    const double control_factor = p.value("control_factor", 3.0);
    const std::size_t B = p.value("bootstrap", 20);
    const auto method = detail::parse_distance_method(p.value("distance", std::string("transport_dual")));
    const double amp = p.value("control_f", json::object()).value("amplitude", 1.0);
    if (!cfg.system.forcing.chi) throw ContractViolation("periodicity experiment needs forcing.chi");
    const double chi = *cfg.system.forcing.chi;
    const auto rep = check_periodicity(cfg.system.forcing, linspace(tau - horizon, tau, 101), cfg.system.trunc);
    if (!rep.passed) throw ContractViolation("forcing is not periodic with the declared chi");
    r.thresholds = {{"noise_floor", "mean d_BL between disjoint random halves of the ensemble at tau, plus its bootstrap spread"},
                    {"control_factor", control_factor}, {"horizon", horizon}, {"chi", chi}, {"periods", periods},
                    {"max_blowup_fraction", detail::kMaxBlowupFraction}};

    EnsembleConfig ens = make_ensemble(cfg);
    ens.common_noise = false;  // measures at tau and tau + k chi are independent samples
    std::size_t blowups = 0, paths = 0;
    auto measure_at = [&](const SystemSpec& sys, double t) {
        const auto run = pullback_ensemble(t, horizon, cfg.grid.dt, ens, sys, threads);
        blowups += run.blowups;
        paths += run.M;
        return run.measures[0];
    };
    auto floor_of = [&](const EmpiricalMeasure& mu, std::uint64_t salt) {
        std::vector<double> ds;
        for (std::size_t b = 0; b < B; ++b) {
            const auto [x, y] = detail::split_halves(mu, hash_combine(hash_combine(cfg.seed, salt), b));
            ds.push_back(detail::bl_distance(x, y, method, b));
        }
        return std::pair{stats::mean(ds), stats::stddev(ds)};
    };

    // Periodic system.
    const auto base = measure_at(cfg.system, tau);
    const auto [floor, floor_sd] = floor_of(base, 0xa1);
    const double band = floor + 2.0 * floor_sd;
    bool ok = true;
    json shifted = json::array();
    for (int k : periods) {
        const double d = detail::bl_distance(base, measure_at(cfg.system, tau + k * chi), method, cfg.seed);
        shifted.push_back({{"periods", k}, {"distance", d}});
        r.series.push_back({static_cast<double>(k), d, 0.0, band, "periodic"});
        ok = ok && d <= band;
    }

    // Control: same system with f1 = f2 = amp exp(-t) times the configured spatial profile.
    SystemSpec control = cfg.system;
    for (SiteField* f : {&control.forcing.f1, &control.forcing.f2}) {
        SpatialProfile prof = f->terms.empty() ? SpatialProfile{} : f->terms.front().profile;
        *f = SiteField{{FieldTerm{amp, TimeEnvelope{EnvelopeKind::Exp, 1.0, 0.0}, prof}}};
    }
    control.forcing.chi.reset();
    const auto cbase = measure_at(control, tau);
    const auto [cfloor, cfloor_sd] = floor_of(cbase, 0xa2);
    const double cd = detail::bl_distance(cbase, measure_at(control, tau + chi), method, cfg.seed);
    r.series.push_back({1.0, cd, 0.0, cfloor, "control"});
    const bool control_separates = cd >= control_factor * cfloor;
    ok = ok && control_separates;

    const double frac = detail::blowup_fraction(blowups, paths);
    ok = ok && frac <= detail::kMaxBlowupFraction;
    r.statistics = {{"noise_floor", floor}, {"noise_floor_sd", floor_sd}, {"band", band}, {"shifted", shifted},
                    {"control_distance", cd}, {"control_noise_floor", cfloor}, {"control_ratio", cd / cfloor},
                    {"paths", cfg.ensemble.M}, {"blowup_fraction", frac}};
    r.verdict = ok ? Verdict::Pass : Verdict::Fail;
    return r;
}

// ---------------------------------------------------------------------------

inline ExperimentResult run_experiment(const RunConfig& cfg, unsigned threads = 1) {
    const std::string& id = cfg.experiment_id;
    if (id == "section7") return run_section7_demo(cfg, threads);
    if (id == "strong-convergence") return run_strong_convergence(cfg, threads);
    if (id == "moment-decay") return run_moment_decay(cfg, threads);
    if (id == "tail-uniformity") return run_tail_uniformity(cfg, threads);
    if (id == "absorption") return run_absorption(cfg, threads);
    if (id == "upper-semicontinuity") return run_upper_semicontinuity(cfg, threads);
    if (id == "periodicity") return run_periodicity(cfg, threads);
    throw ContractViolation(id.empty() ? "configuration has no experiment section" : "unknown experiment '" + id + "'");
}

}  // namespace selkov
