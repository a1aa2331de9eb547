// selkov: command-line front end for simulation, pullback ensembles, distances,
// dissipativity checks and the bundled experiments.
//
// Exit codes: 0 success/pass, 1 error, 2 experiment fail, 3 inconclusive.

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unistd.h>

#include "selkov/selkov.hpp"

namespace fs = std::filesystem;
using namespace selkov;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitFail = 2;
constexpr int kExitInconclusive = 3;

#ifndef SELKOV_CONFIG_DIR
#define SELKOV_CONFIG_DIR "configs"
#endif

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex16(std::uint64_t x) {
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << x;
    return os.str();
}

struct Common {
    std::optional<std::uint64_t> seed;
    unsigned threads = 1;
    std::string out;
};

fs::path output_root(const Common& c, const RunConfig* cfg) {
    if (!c.out.empty()) return c.out;
    if (cfg && cfg->output) return *cfg->output;
    if (const char* env = std::getenv("SELKOV_OUTPUT_ROOT"); env && *env) return env;
    return "runs";
}

/// Content-addressed run directory: <root>/<kind>-<hash of canonical config, seed and extra key>.
fs::path run_dir(const Common& c, const RunConfig& cfg, const std::string& kind, const std::string& extra = "") {
    const std::string key = canonical_string(cfg) + "\nseed=" + std::to_string(cfg.seed) + "\n" + kind + "\n" + extra;
    const fs::path dir = output_root(c, &cfg) / (kind + "-" + hex16(fnv1a(key)));
    fs::create_directories(dir);
    std::ofstream(dir / "config.cfg", std::ios::binary) << canonical_string(cfg);
    return dir;
}

void write_meta(const fs::path& dir, const Common& c, double seconds) {
    char host[256] = {0};
    gethostname(host, sizeof host - 1);
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char stamp[64];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    const json meta = {{"threads", c.threads}, {"wall_seconds", seconds}, {"host", host}, {"finished_utc", stamp}};
    std::ofstream(dir / "meta.json", std::ios::binary) << meta.dump(2) << '\n';
}

RunConfig load(const std::string& path, const Common& c) {
    RunConfig cfg = parse_config(path);
    if (c.seed) cfg.seed = *c.seed;
    return cfg;
}

int exit_for(Verdict v) {
    switch (v) {
        case Verdict::Pass: return kExitOk;
        case Verdict::Fail: return kExitFail;
        case Verdict::Inconclusive: return kExitInconclusive;
    }
    return kExitError;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_measure(const fs::path& file, const EmpiricalMeasure& mu, double t, const TruncationConfig& trunc) {
    std::ofstream f(file, std::ios::binary);
    f << "t,site,u,v,path_id\n";
    for (std::size_t m = 0; m < mu.size(); ++m) {
        TrajectoryRecord rec;
        rec.path_id = m;
        rec.times = {t};
        rec.states = {mu.samples[m]};
        csv::write_trajectory(f, rec, trunc, false);
    }
}

/// Reads a measure from trajectory-schema CSV: the atoms are the states of
/// each path_id at the latest time present for that path.
EmpiricalMeasure read_measure(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    std::getline(in, line);
    if (line != "t,site,u,v,path_id") throw std::runtime_error(path + ": expected header t,site,u,v,path_id");
    struct Rows {
        double t = -std::numeric_limits<double>::infinity();
        std::map<int, std::pair<double, double>> sites;
    };
    std::map<std::uint64_t, Rows> paths;
    long lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell[5];
        for (auto& c : cell) std::getline(ls, c, ',');
        try {
            const double t = std::stod(cell[0]);
            const int site = std::stoi(cell[1]);
            const std::uint64_t id = std::stoull(cell[4]);
            auto& r = paths[id];
            if (t > r.t) {
                r.t = t;
                r.sites.clear();
            }
            if (t == r.t) r.sites[site] = {std::stod(cell[2]), std::stod(cell[3])};
        } catch (const std::exception&) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed row");
        }
    }
    std::vector<LatticeState> xs;
    for (const auto& [id, r] : paths) {
        LatticeState s(r.sites.size());
        std::size_t k = 0;
        for (const auto& [site, uv] : r.sites) {
            s.u[k] = uv.first;
            s.v[k] = uv.second;
            ++k;
        }
        xs.push_back(std::move(s));
    }
    if (xs.empty()) throw std::runtime_error(path + ": no atoms");
    auto mu = EmpiricalMeasure::uniform(std::move(xs));
    mu.validate();
    return mu;
}

DistanceMethod method_from(const std::string& s) {
    if (s == "closed_form") return DistanceMethod::ClosedFormDiracs;
    if (s == "lp") return DistanceMethod::LPOracle;
    if (s == "random") return DistanceMethod::RandomTestFunctions;
    if (s == "transport_dual") return DistanceMethod::TransportDual;
    throw std::runtime_error("unknown method '" + s + "'");
}

const char* method_name(DistanceMethod m) {
    switch (m) {
        case DistanceMethod::ClosedFormDiracs: return "closed_form";
        case DistanceMethod::LPOracle: return "lp";
        case DistanceMethod::RandomTestFunctions: return "random";
        case DistanceMethod::TransportDual: return "transport_dual";
    }
    return "?";
}

int cmd_validate(const std::string& path) {
    parse_config(path);
    std::cout << "ok\n";
    return kExitOk;
}

int cmd_simulate(const std::string& path, const Common& c) {
    const auto t0 = std::chrono::steady_clock::now();
    const RunConfig cfg = load(path, c);
    const TimeGrid grid = TimeGrid::make(cfg.grid.t_start, cfg.grid.t_end, cfg.grid.dt);
    std::vector<double> saves;
    for (long n = 0; n <= grid.n_steps; n += cfg.grid.save_every) saves.push_back(grid.time(n));
    if (grid.n_steps % cfg.grid.save_every != 0) saves.push_back(grid.t_end);

    const EnsembleConfig ens = make_ensemble(cfg);
    const fs::path dir = run_dir(c, cfg, "simulate");
    std::ofstream traj(dir / "trajectories.csv", std::ios::binary);
    traj << "t,site,u,v,path_id\n";
    std::vector<std::size_t> blown;
    std::vector<csv::SeriesRow> moments(saves.size());
    const unsigned workers = std::max(1u, std::min<unsigned>(c.threads, static_cast<unsigned>(ens.M)));
    std::vector<TrajectoryRecord> recs(ens.M);
    parallel_for(workers, workers, [&](std::size_t w) {
        Stepper st(cfg.system);
        const std::size_t chunk = (ens.M + workers - 1) / workers;
        for (std::size_t m = w * chunk; m < std::min(ens.M, (w + 1) * chunk); ++m) {
            const auto key = ensemble_path_key(ens, m, cfg.system.params.lambda, grid.t_start);
            recs[m] = integrate_path(sample_initial(ens.initial_law, key), grid, st, key, saves, m);
        }
    });
    std::vector<double> sum(saves.size(), 0.0);
    std::vector<std::size_t> count(saves.size(), 0);
    json blowups = json::array();
    for (const auto& r : recs) {
        csv::write_trajectory(traj, r, cfg.system.trunc, false);
        for (std::size_t j = 0; j < r.states.size(); ++j) {
            sum[j] += norm_sq(r.states[j].u) + norm_sq(r.states[j].v);
            ++count[j];
        }
        if (r.blew_up)
            blowups.push_back({{"path_id", r.path_id}, {"step", r.blowup_step},
                               {"site", cfg.system.trunc.lattice_index(r.blowup_site)}});
    }
    std::vector<csv::SeriesRow> rows;
    for (std::size_t j = 0; j < saves.size(); ++j)
        if (count[j] > 0) {
            const double m = sum[j] / static_cast<double>(count[j]);
            rows.push_back({saves[j], m, m, m, "second_moment"});
        }
    std::ofstream(dir / "series.csv", std::ios::binary) << [&] {
        std::ostringstream os;
        csv::write_series(os, rows);
        return os.str();
    }();
    std::ofstream(dir / "result.json", std::ios::binary)
        << json{{"paths", ens.M}, {"blowups", blowups}}.dump(2) << '\n';
    write_meta(dir, c, seconds_since(t0));
    std::cout << dir.string() << '\n';
    if (!blowups.empty()) std::cerr << blowups.size() << " path(s) blew up; see result.json\n";
    return kExitOk;
}

int cmd_pullback(const std::string& path, double tau, double horizon, const Common& c) {
    const auto t0 = std::chrono::steady_clock::now();
    const RunConfig cfg = load(path, c);
    const EnsembleConfig ens = make_ensemble(cfg);
    const auto run = pullback_ensemble(tau, horizon, cfg.grid.dt, ens, cfg.system, c.threads);
    const fs::path dir = run_dir(c, cfg, "pullback", "tau=" + csv::number(tau) + ",horizon=" + csv::number(horizon));
    write_measure(dir / "measure.csv", run.measures[0], tau, cfg.system.trunc);
    const json res = {{"tau", tau}, {"horizon", horizon}, {"paths", run.M}, {"blowups", run.blowups},
                      {"blown_paths", run.blown_paths}, {"second_moment", second_moment(run.measures[0])}};
    std::ofstream(dir / "result.json", std::ios::binary) << res.dump(2) << '\n';
    write_meta(dir, c, seconds_since(t0));
    std::cout << dir.string() << '\n';
    return kExitOk;
}

int cmd_distance(const std::string& a, const std::string& b, const std::string& method, std::size_t tests, std::uint64_t seed) {
    const auto mu = read_measure(a);
    const auto nu = read_measure(b);
    DistanceOptions opt;
    opt.test_functions = tests;
    opt.seed = seed;
    const auto est = dual_lipschitz_distance(mu, nu, method_from(method), opt);
    const json out = {{"d_BL", est.value}, {"error_bound", est.error_bound}, {"method", method_name(est.method)},
                      {"atoms", est.atoms}, {"W1", wasserstein1(mu, nu)}};
    std::cout << out.dump(2) << '\n';
    return kExitOk;
}

int cmd_dissipativity(const std::string& path, double tau, double C, const Common& c) {
    const RunConfig cfg = load(path, c);
    const auto rep = compute_absorbing_radius(tau, cfg.system.params, cfg.system.forcing, cfg.system.trunc, C, cfg.grid.dt);
    const json out = {{"tau", tau}, {"varpi", rep.varpi}, {"R_tau", rep.R_tau}, {"R_error", rep.R_error}, {"C", rep.C},
                      {"L1_tau", rep.L1_tau}, {"K_radius", rep.K_radius}, {"hypothesis_ok", rep.hypothesis_ok},
                      {"note", rep.note}};
    std::cout << out.dump(2) << '\n';
    if (!rep.hypothesis_ok) {
        std::cerr << "dissipativity hypothesis not met: " << rep.note << '\n';
        return kExitFail;
    }
    return kExitOk;
}

int cmd_experiment(const std::string& path, const Common& c) {
    const auto t0 = std::chrono::steady_clock::now();
    const RunConfig cfg = load(path, c);
    if (cfg.experiment_id.empty()) throw ContractViolation(path + " has no experiment section");
    const auto result = run_experiment(cfg, c.threads);
    const fs::path dir = run_dir(c, cfg, cfg.experiment_id);
    write_result(dir, result);
    write_meta(dir / result.id, c, seconds_since(t0));
    std::cout << result.id << ' ' << verdict_name(result.verdict) << ' ' << (dir / result.id).string() << '\n';
    for (const auto& n : result.notes) std::cerr << "note: " << n << '\n';
    return exit_for(result.verdict);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stochastic reversible Selkov lattice: simulation and measure-attractor experiments"};
    app.require_subcommand(1);
    Common common;
    auto add_common = [&](CLI::App* sub, bool with_out = true) {
        sub->add_option("--seed", common.seed, "Override the master seed");
        sub->add_option("--threads", common.threads, "Worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
        if (with_out) sub->add_option("--out", common.out, "Output root (default $SELKOV_OUTPUT_ROOT or ./runs)");
    };

    std::string cfg_path;
    auto* validate = app.add_subcommand("validate-config", "Parse and validate a configuration");
    validate->add_option("config", cfg_path)->required();

    auto* simulate = app.add_subcommand("simulate", "Integrate an ensemble over the configured grid");
    simulate->add_option("config", cfg_path)->required();
    add_common(simulate);

    double tau = 0.0, horizon = 4.0, C = 1.0;
    auto* pullback = app.add_subcommand("pullback", "Pullback ensemble at tau from tau - horizon");
    pullback->add_option("config", cfg_path)->required();
    pullback->add_option("--tau", tau);
    pullback->add_option("--horizon", horizon)->check(CLI::NonNegativeNumber);
    add_common(pullback);

    std::string a, b, method = "transport_dual";
    std::size_t tests = 512;
    std::uint64_t dseed = 0;
    auto* distance = app.add_subcommand("distance", "Dual-Lipschitz distance between two measure CSV files");
    distance->add_option("a", a)->required();
    distance->add_option("b", b)->required();
    distance->add_option("--method", method)->check(CLI::IsMember({"closed_form", "lp", "random", "transport_dual"}));
    distance->add_option("--test-functions", tests);
    distance->add_option("--seed", dseed);

    auto* diss = app.add_subcommand("check-dissipativity", "Report varpi, R(tau) and the absorbing radius");
    diss->add_option("config", cfg_path)->required();
    diss->add_option("--tau", tau);
    diss->add_option("-C,--calibration", C, "Constant in L1 = C R(tau)");
    add_common(diss, false);

    std::string demo_cfg = std::string(SELKOV_CONFIG_DIR) + "/section7.cfg";
    auto* demo = app.add_subcommand("demo-section7", "Single-site demonstration run");
    demo->add_option("--config", demo_cfg);
    add_common(demo);

    auto* experiment = app.add_subcommand("experiment", "Run a configured experiment and write its verdict");
    experiment->add_option("config", cfg_path)->required();
    add_common(experiment);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitError;
    }

    try {
        if (*validate) return cmd_validate(cfg_path);
        if (*simulate) return cmd_simulate(cfg_path, common);
        if (*pullback) return cmd_pullback(cfg_path, tau, horizon, common);
        if (*distance) return cmd_distance(a, b, method, tests, dseed);
        if (*diss) return cmd_dissipativity(cfg_path, tau, C, common);
        if (*demo) return cmd_experiment(demo_cfg, common);
        if (*experiment) return cmd_experiment(cfg_path, common);
    } catch (const ConfigError& e) {
        for (const auto& p : e.problems()) std::cerr << p << '\n';
        return kExitError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitError;
    }
    return kExitError;
}
