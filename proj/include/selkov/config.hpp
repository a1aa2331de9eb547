#pragma once

// JSON run configuration: parsing with exhaustive validation (every problem is
// reported with a JSON-pointer path), and a canonical serialization that
// round-trips.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "integrator.hpp"
#include "lattice_model.hpp"
#include "measure_lab.hpp"
#include "stochastic_forcing.hpp"

namespace selkov {

using json = nlohmann::json;

struct GridConfig {
    double t_start = 0.0;
    double t_end = 1.0;
    double dt = 0.001;
    long save_every = 1;
};

struct InitialLawConfig {
    enum class Kind { PointMass, GaussianCloud } kind = Kind::PointMass;
    LatticeState mean;
    double sd = 0.0;
};

struct EnsembleSection {
    std::size_t M = 1;
    InitialLawConfig initial_law;
    bool common_noise = false;
};

struct RunConfig {
    SystemSpec system;
    GridConfig grid;
    EnsembleSection ensemble;
    std::uint64_t seed = 0;
    std::optional<std::string> output;
    std::string experiment_id;  // empty when there is no experiment section
    json experiment = json::object();  // parameters with defaults filled in
};

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<std::string> problems)
        : std::runtime_error(join(problems)), problems_(std::move(problems)) {}
    const std::vector<std::string>& problems() const noexcept { return problems_; }

private:
    static std::string join(const std::vector<std::string>& v) {
        std::string s;
        for (const auto& p : v) s += p + "\n";
        return s;
    }
    std::vector<std::string> problems_;
};

// ---------------------------------------------------------------------------
// Experiment parameter schemas

namespace experiment_schema {

enum class Kind { Number, Integer, Boolean, NumberList, IntegerList, String, Object };

struct Field {
    Kind kind;
    json fallback;
};

using Schema = std::map<std::string, Field>;

inline const std::map<std::string, Schema>& all() {
    static const std::map<std::string, Schema> schemas = [] {
        std::map<std::string, Schema> s;
        s["section7"] = {
            {"lambdas", {Kind::NumberList, json::array({0.05, 0.4})}},
            {"halving_tolerance", {Kind::Number, 1e-3}},
        };
        s["strong-convergence"] = {
            {"lambdas", {Kind::NumberList, json::array({0.4, 0.2, 0.1, 0.05})}},
            {"T1", {Kind::Number, 1.0}},
            {"slope_min", {Kind::Number, 1.6}},
            {"slope_max", {Kind::Number, 2.4}},
            {"bootstrap", {Kind::Integer, 200}},
        };
        s["moment-decay"] = {
            {"tau", {Kind::Number, 0.0}},
            {"moments", {Kind::NumberList, json::array({0.0, 100.0})}},
            {"horizons", {Kind::NumberList, json::array({0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 2.5, 3.0})}},
            {"gap_fraction", {Kind::Number, 0.01}},
            {"envelope_factor", {Kind::Number, 1.5}},
            {"reference_horizon", {Kind::Number, 8.0}},
            {"control_tolerance", {Kind::Number, 0.3}},
            {"control", {Kind::Object, json::object({{"a1", 1.0}, {"a2", 1.5}, {"amplitude", 1.0}, {"intensity", 0.5},
                                                     {"M", 2000}, {"moment", 100.0}, {"dt", 0.001},
                                                     {"horizons", json::array({0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0})}})}},
            {"bootstrap", {Kind::Integer, 200}},
        };
        s["tail-uniformity"] = {
            {"tau", {Kind::Number, 0.0}},
            {"horizons", {Kind::NumberList, json::array({5.0, 10.0, 20.0})}},
            {"tail_indices", {Kind::IntegerList, json::array({8, 16, 32})}},
            {"tail_fraction", {Kind::Number, 0.01}},
            {"uniformity_factor", {Kind::Number, 2.0}},
            {"bootstrap", {Kind::Integer, 200}},
        };
        s["absorption"] = {
            {"tau", {Kind::Number, 0.0}},
            {"moments", {Kind::NumberList, json::array({0.0, 1.0, 10.0, 100.0, 1000.0})}},
            {"horizons", {Kind::NumberList, json::array({4.0, 6.0, 8.0})}},
            {"reference_horizons", {Kind::NumberList, json::array({4.0, 6.0, 8.0})}},
            {"envelope_factor", {Kind::Number, 1.5}},
            {"bootstrap", {Kind::Integer, 200}},
        };
        s["upper-semicontinuity"] = {
            {"tau", {Kind::Number, 0.0}},
            {"lambdas", {Kind::NumberList, json::array({0.8, 0.4, 0.2, 0.1, 0.05})}},
            {"horizon", {Kind::Number, 4.0}},
            {"rho_min", {Kind::Number, 0.8}},
            {"floor_factor", {Kind::Number, 3.0}},
            {"bootstrap", {Kind::Integer, 20}},
            {"distance", {Kind::String, "transport_dual"}},
        };
        s["periodicity"] = {
            {"tau", {Kind::Number, 0.0}},
            {"horizon", {Kind::Number, 4.0}},
            {"periods", {Kind::IntegerList, json::array({1, 2})}},
            {"control_factor", {Kind::Number, 3.0}},
            {"bootstrap", {Kind::Integer, 20}},
            {"distance", {Kind::String, "transport_dual"}},
            {"control_f", {Kind::Object, json::object({{"amplitude", 1.0}})}},
        };
        return s;
    }();
    return schemas;
}

}  // namespace experiment_schema

namespace detail {

/// Walks a JSON document collecting every problem with its pointer path.
class Reader {
public:
    std::vector<std::string> problems;

    void problem(const std::string& path, const std::string& what) { problems.push_back(path + ": " + what); }

    /// Reports keys of `obj` outside `allowed`.
    void only(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
        if (!obj.is_object()) return;
        std::set<std::string> ok(allowed.begin(), allowed.end());
        for (auto it = obj.begin(); it != obj.end(); ++it)
            if (!ok.count(it.key())) problem(path + "/" + it.key(), "unknown key");
    }

    bool object(const json& parent, const std::string& key, const std::string& path, bool required = true) {
        if (!parent.contains(key)) {
            if (required) problem(path + "/" + key, "required section missing");
            return false;
        }
        if (!parent.at(key).is_object()) {
            problem(path + "/" + key, "must be an object");
            return false;
        }
        return true;
    }

    double number(const json& obj, const std::string& key, const std::string& path, std::optional<double> fallback = {}) {
        if (!obj.is_object() || !obj.contains(key)) {
            if (!fallback) problem(path + "/" + key, "required value missing");
            return fallback.value_or(0.0);
        }
        return as_number(obj.at(key), path + "/" + key);
    }

    double as_number(const json& v, const std::string& path) {
        if (v.is_number()) return v.get<double>();
        if (v.is_string()) {
            // Multiples of pi, e.g. "pi", "2pi", "0.5pi".
            static const std::regex re(R"(^\s*([0-9]*\.?[0-9]*)\s*\*?\s*pi\s*$)");
            std::smatch m;
            const std::string s = v.get<std::string>();
            if (std::regex_match(s, m, re)) return (m[1].length() ? std::stod(m[1]) : 1.0) * std::numbers::pi;
        }
        problem(path, "must be a number");
        return 0.0;
    }

    long integer(const json& obj, const std::string& key, const std::string& path, std::optional<long> fallback = {}) {
        if (!obj.is_object() || !obj.contains(key)) {
            if (!fallback) problem(path + "/" + key, "required value missing");
            return fallback.value_or(0);
        }
        const json& v = obj.at(key);
        if (v.is_number_integer()) return v.get<long>();
        if (v.is_number_float()) {
            const double d = v.get<double>();
            if (std::floor(d) == d && std::abs(d) < 1e15) return static_cast<long>(d);
        }
        problem(path + "/" + key, "must be an integer");
        return 0;
    }

    bool boolean(const json& obj, const std::string& key, const std::string& path, bool fallback) {
        if (!obj.is_object() || !obj.contains(key)) return fallback;
        if (!obj.at(key).is_boolean()) {
            problem(path + "/" + key, "must be true or false");
            return fallback;
        }
        return obj.at(key).get<bool>();
    }

    std::string string(const json& obj, const std::string& key, const std::string& path, std::optional<std::string> fallback = {}) {
        if (!obj.is_object() || !obj.contains(key)) {
            if (!fallback) problem(path + "/" + key, "required value missing");
            return fallback.value_or("");
        }
        if (!obj.at(key).is_string()) {
            problem(path + "/" + key, "must be a string");
            return fallback.value_or("");
        }
        return obj.at(key).get<std::string>();
    }
};

inline TimeEnvelope read_envelope(Reader& r, const json& j, const std::string& path) {
    TimeEnvelope e;
    if (!j.is_object()) {
        r.problem(path, "must be an object");
        return e;
    }
    r.only(j, path, {"kind", "rate", "phase"});
    const std::string kind = r.string(j, "kind", path, "constant");
    static const std::map<std::string, EnvelopeKind> kinds{{"constant", EnvelopeKind::Constant},
                                                           {"cos", EnvelopeKind::Cos},
                                                           {"sin", EnvelopeKind::Sin},
                                                           {"exp", EnvelopeKind::Exp},
                                                           {"gaussian", EnvelopeKind::Gaussian}};
    if (auto it = kinds.find(kind); it != kinds.end())
        e.kind = it->second;
    else
        r.problem(path + "/kind", "unknown envelope '" + kind + "' (constant, cos, sin, exp, gaussian)");
    e.rate = r.number(j, "rate", path, 1.0);
    e.phase = r.number(j, "phase", path, 0.0);
    return e;
}

inline SpatialProfile read_profile(Reader& r, const json& j, const std::string& path) {
    SpatialProfile p;
    if (!j.is_object()) {
        r.problem(path, "must be an object");
        return p;
    }
    r.only(j, path, {"kind", "rate", "width"});
    const std::string kind = r.string(j, "kind", path, "uniform");
    static const std::map<std::string, ProfileKind> kinds{{"uniform", ProfileKind::Uniform},
                                                          {"origin", ProfileKind::Origin},
                                                          {"exp_decay", ProfileKind::ExpDecay},
                                                          {"compact", ProfileKind::Compact}};
    if (auto it = kinds.find(kind); it != kinds.end())
        p.kind = it->second;
    else
        r.problem(path + "/kind", "unknown profile '" + kind + "' (uniform, origin, exp_decay, compact)");
    p.rate = r.number(j, "rate", path, 1.0);
    p.width = static_cast<int>(r.integer(j, "width", path, 1));
    return p;
}

inline SiteField read_field(Reader& r, const json& parent, const std::string& key, const std::string& path) {
    SiteField f;
    if (!parent.contains(key)) return f;
    const json& j = parent.at(key);
    const std::string p = path + "/" + key;
    if (!j.is_array()) {
        r.problem(p, "must be a list of terms");
        return f;
    }
    for (std::size_t k = 0; k < j.size(); ++k) {
        const std::string tp = p + "/" + std::to_string(k);
        const json& t = j[k];
        if (!t.is_object()) {
            r.problem(tp, "must be an object");
            continue;
        }
        r.only(t, tp, {"amplitude", "envelope", "profile"});
        FieldTerm term;
        term.amplitude = r.number(t, "amplitude", tp, 1.0);
        if (t.contains("envelope")) term.envelope = read_envelope(r, t.at("envelope"), tp + "/envelope");
        if (t.contains("profile")) term.profile = read_profile(r, t.at("profile"), tp + "/profile");
        f.terms.push_back(term);
    }
    return f;
}

inline StateKernel read_kernel(Reader& r, const json& j, const std::string& path, JumpFactor* factor) {
    StateKernel k;
    if (!j.is_object()) {
        r.problem(path, "must be an object");
        return k;
    }
    if (factor)
        r.only(j, path, {"envelope", "coeffs", "factor"});
    else
        r.only(j, path, {"envelope", "coeffs"});
    if (j.contains("envelope")) k.envelope = read_envelope(r, j.at("envelope"), path + "/envelope");
    if (j.contains("coeffs")) {
        const json& c = j.at("coeffs");
        if (!c.is_array() || c.size() > 3)
            r.problem(path + "/coeffs", "must be a list of at most 3 numbers");
        else
            for (std::size_t i = 0; i < c.size(); ++i) k.coeffs[i] = r.as_number(c[i], path + "/coeffs/" + std::to_string(i));
    }
    if (factor) {
        const std::string f = r.string(j, "factor", path, "one");
        if (f == "one")
            *factor = JumpFactor::One;
        else if (f == "lorentzian")
            *factor = JumpFactor::Lorentzian;
        else
            r.problem(path + "/factor", "unknown jump factor '" + f + "' (one, lorentzian)");
    }
    return k;
}

inline LatticeState read_state(Reader& r, const json& j, const std::string& path, const TruncationConfig& trunc) {
    LatticeState s = LatticeState::zeros(trunc);
    r.only(j, path, {"kind", "u", "v", "sd"});
    auto fill = [&](const char* key, Vector& out) {
        if (!j.contains(key)) return;
        const json& v = j.at(key);
        const std::string p = path + "/" + key;
        if (v.is_number() || v.is_string()) {
            // A scalar sets the origin site.
            out[trunc.slot(0)] = r.as_number(v, p);
        } else if (v.is_array()) {
            if (v.size() != out.size()) {
                r.problem(p, "must have " + std::to_string(out.size()) + " entries (one per site)");
                return;
            }
            for (std::size_t i = 0; i < v.size(); ++i) out[i] = r.as_number(v[i], p + "/" + std::to_string(i));
        } else {
            r.problem(p, "must be a number or a list of numbers");
        }
    };
    fill("u", s.u);
    fill("v", s.v);
    return s;
}

inline json envelope_json(const TimeEnvelope& e) {
    static const char* names[] = {"constant", "cos", "sin", "exp", "gaussian"};
    return {{"kind", names[static_cast<int>(e.kind)]}, {"rate", e.rate}, {"phase", e.phase}};
}

inline json profile_json(const SpatialProfile& p) {
    static const char* names[] = {"uniform", "origin", "exp_decay", "compact"};
    return {{"kind", names[static_cast<int>(p.kind)]}, {"rate", p.rate}, {"width", p.width}};
}

inline json field_json(const SiteField& f) {
    json out = json::array();
    for (const auto& t : f.terms)
        out.push_back({{"amplitude", t.amplitude}, {"envelope", envelope_json(t.envelope)}, {"profile", profile_json(t.profile)}});
    return out;
}

inline json kernel_json(const StateKernel& k) {
    return {{"envelope", envelope_json(k.envelope)}, {"coeffs", {k.coeffs[0], k.coeffs[1], k.coeffs[2]}}};
}

inline bool kind_matches(experiment_schema::Kind kind, const json& v) {
    using K = experiment_schema::Kind;
    auto all_of = [&](auto pred) {
        if (!v.is_array()) return false;
        for (const auto& e : v)
            if (!pred(e)) return false;
        return true;
    };
    switch (kind) {
        case K::Number: return v.is_number();
        case K::Integer: return v.is_number_integer();
        case K::Boolean: return v.is_boolean();
        case K::NumberList: return all_of([](const json& e) { return e.is_number(); });
        case K::IntegerList: return all_of([](const json& e) { return e.is_number_integer(); });
        case K::String: return v.is_string();
        case K::Object: return v.is_object();
    }
    return false;
}

}  // namespace detail

/// Parses and validates a configuration document. Throws ConfigError listing
/// every violation found.
inline RunConfig parse_config_json(const json& doc) {
    detail::Reader r;
    RunConfig cfg;
    if (!doc.is_object()) throw ConfigError({"/: configuration must be a JSON object"});
    r.only(doc, "", {"model", "forcing", "levy", "truncation", "grid", "ensemble", "scheme", "experiment", "seed", "output"});
    const json empty = json::object();

    // truncation first: other sections depend on the window
    auto& trunc = cfg.system.trunc;
    if (r.object(doc, "truncation", "")) {
        const json& j = doc.at("truncation");
        r.only(j, "/truncation", {"half_width", "boundary"});
        trunc.half_width = static_cast<int>(r.integer(j, "half_width", "/truncation"));
        const std::string b = r.string(j, "boundary", "/truncation", "zero_dirichlet");
        if (b == "zero_dirichlet")
            trunc.boundary = Boundary::ZeroDirichlet;
        else if (b == "periodic")
            trunc.boundary = Boundary::Periodic;
        else
            r.problem("/truncation/boundary", "unknown boundary '" + b + "' (zero_dirichlet, periodic)");
        if (trunc.half_width < 0) {
            r.problem("/truncation/half_width", "must be >= 0");
            trunc.half_width = 0;
        }
    }

    auto& m = cfg.system.params;
    if (r.object(doc, "model", "")) {
        const json& j = doc.at("model");
        const std::string P = "/model";
        r.only(j, P, {"d1", "d2", "a1", "a2", "b1", "b2", "p", "lambda", "linear_control"});
        m.linear_control = r.boolean(j, "linear_control", P, false);
        m.d1 = r.number(j, "d1", P);
        m.d2 = r.number(j, "d2", P);
        m.a1 = r.number(j, "a1", P);
        m.a2 = r.number(j, "a2", P);
        m.b1 = r.number(j, "b1", P, m.linear_control ? std::optional<double>(0.0) : std::nullopt);
        m.b2 = r.number(j, "b2", P, m.linear_control ? std::optional<double>(0.0) : std::nullopt);
        if (j.contains("p")) {
            const json& p = j.at("p");
            if (p.is_number_integer())
                m.p = p.get<int>();
            else
                r.problem(P + "/p", "p must be an integer >= 1");
        } else {
            r.problem(P + "/p", "required value missing");
        }
        if (j.contains("lambda")) {
            const json& l = j.at("lambda");
            if (l.is_number()) {
                m.lambda = NoiseIntensity::diagonal(l.get<double>());
            } else if (l.is_object()) {
                r.only(l, P + "/lambda", {"eps1", "eps2", "gamma1", "gamma2"});
                m.lambda.eps1 = r.number(l, "eps1", P + "/lambda", 0.0);
                m.lambda.eps2 = r.number(l, "eps2", P + "/lambda", 0.0);
                m.lambda.gamma1 = r.number(l, "gamma1", P + "/lambda", 0.0);
                m.lambda.gamma2 = r.number(l, "gamma2", P + "/lambda", 0.0);
            } else {
                r.problem(P + "/lambda", "must be a number or an object with eps1, eps2, gamma1, gamma2");
            }
        }
        for (const auto& v : violations(m)) {
            const std::string field = v.substr(0, v.find(' '));
            std::string ptr = field;
            for (auto& c : ptr)
                if (c == '.') c = '/';
            if (ptr.find('/') == std::string::npos && !j.contains(ptr))
                continue;  // already reported missing
            r.problem(P + "/" + ptr, v);
        }
    }

    auto& f = cfg.system.forcing;
    if (r.object(doc, "forcing", "")) {
        const json& j = doc.at("forcing");
        const std::string P = "/forcing";
        r.only(j, P, {"f1", "f2", "modes", "alpha", "chi"});
        f.f1 = detail::read_field(r, j, "f1", P);
        f.f2 = detail::read_field(r, j, "f2", P);
        f.alpha = r.number(j, "alpha", P, 1.0);
        if (j.contains("chi")) f.chi = r.as_number(j.at("chi"), P + "/chi");
        if (j.contains("modes")) {
            const json& ms = j.at("modes");
            if (!ms.is_array()) r.problem(P + "/modes", "must be a list");
            for (std::size_t k = 0; ms.is_array() && k < ms.size(); ++k) {
                const std::string mp = P + "/modes/" + std::to_string(k);
                const json& mj = ms[k];
                if (!mj.is_object()) {
                    r.problem(mp, "must be an object");
                    continue;
                }
                r.only(mj, mp, {"h", "kappa", "delta", "sigma", "q"});
                NoiseMode mode;
                mode.h = detail::read_field(r, mj, "h", mp);
                mode.kappa = detail::read_field(r, mj, "kappa", mp);
                mode.delta = detail::read_field(r, mj, "delta", mp);
                if (mj.contains("sigma")) mode.sigma = detail::read_kernel(r, mj.at("sigma"), mp + "/sigma", nullptr);
                if (mj.contains("q")) mode.q.state = detail::read_kernel(r, mj.at("q"), mp + "/q", &mode.q.factor);
                f.modes.push_back(mode);
            }
        }
    }

    auto& levy = cfg.system.levy;
    if (r.object(doc, "levy", "")) {
        const json& j = doc.at("levy");
        const std::string P = "/levy";
        r.only(j, P, {"poisson_intensity", "jump_law", "truncate_small", "M_jump_bound"});
        levy.poisson_intensity = r.number(j, "poisson_intensity", P);
        levy.truncate_small = r.boolean(j, "truncate_small", P, false);
        levy.M_jump_bound = r.number(j, "M_jump_bound", P);
        if (r.object(j, "jump_law", P)) {
            const json& jl = j.at("jump_law");
            r.only(jl, P + "/jump_law", {"kind", "scale"});
            const std::string kind = r.string(jl, "kind", P + "/jump_law");
            if (kind == "gaussian")
                levy.jump_law.kind = JumpLawKind::Gaussian;
            else if (kind == "uniform_small")
                levy.jump_law.kind = JumpLawKind::UniformSmall;
            else
                r.problem(P + "/jump_law/kind", "unknown jump law '" + kind + "' (gaussian, uniform_small)");
            levy.jump_law.scale = r.number(jl, "scale", P + "/jump_law");
        }
    }

    if (r.object(doc, "grid", "")) {
        const json& j = doc.at("grid");
        const std::string P = "/grid";
        r.only(j, P, {"t_start", "t_end", "dt", "save_every"});
        cfg.grid.t_start = r.number(j, "t_start", P, 0.0);
        cfg.grid.t_end = r.number(j, "t_end", P);
        cfg.grid.dt = r.number(j, "dt", P);
        cfg.grid.save_every = r.integer(j, "save_every", P, 1);
        if (!(cfg.grid.dt > 0.0)) r.problem(P + "/dt", "dt must be positive");
        if (!(cfg.grid.t_end > cfg.grid.t_start)) r.problem(P + "/t_end", "t_end must exceed t_start");
        if (cfg.grid.save_every < 1) r.problem(P + "/save_every", "must be >= 1");
        if (cfg.grid.dt > 0.0 && cfg.grid.t_end > cfg.grid.t_start) {
            try {
                TimeGrid::make(cfg.grid.t_start, cfg.grid.t_end, cfg.grid.dt);
            } catch (const ContractViolation& e) {
                r.problem(P + "/dt", e.what());
            }
        }
    }

    if (r.object(doc, "ensemble", "")) {
        const json& j = doc.at("ensemble");
        const std::string P = "/ensemble";
        r.only(j, P, {"M", "initial_law", "common_noise"});
        const long M = r.integer(j, "M", P);
        if (M < 1) r.problem(P + "/M", "M must be >= 1");
        cfg.ensemble.M = static_cast<std::size_t>(std::max(1L, M));
        cfg.ensemble.common_noise = r.boolean(j, "common_noise", P, false);
        if (r.object(j, "initial_law", P)) {
            const json& il = j.at("initial_law");
            const std::string ip = P + "/initial_law";
            const std::string kind = r.string(il, "kind", ip, "point_mass");
            cfg.ensemble.initial_law.mean = detail::read_state(r, il, ip, trunc);
            if (kind == "point_mass") {
                cfg.ensemble.initial_law.kind = InitialLawConfig::Kind::PointMass;
                if (il.contains("sd")) r.problem(ip + "/sd", "unknown key for a point mass");
            } else if (kind == "gaussian_cloud") {
                cfg.ensemble.initial_law.kind = InitialLawConfig::Kind::GaussianCloud;
                cfg.ensemble.initial_law.sd = r.number(il, "sd", ip);
                if (!(cfg.ensemble.initial_law.sd >= 0.0)) r.problem(ip + "/sd", "sd must be nonnegative");
            } else {
                r.problem(ip + "/kind", "unknown initial law '" + kind + "' (point_mass, gaussian_cloud)");
            }
        }
    }

    const std::string scheme = r.string(doc, "scheme", "", "compensated");
    if (scheme == "compensated")
        cfg.system.variant = SchemeVariant::CompensatedForm;
    else if (scheme == "section7_literal")
        cfg.system.variant = SchemeVariant::Section7Literal;
    else
        r.problem("/scheme", "unknown scheme '" + scheme + "' (compensated, section7_literal)");

    if (!doc.contains("seed")) {
        r.problem("/seed", "required value missing");
    } else if (!doc.at("seed").is_number_unsigned()) {
        r.problem("/seed", "must be a nonnegative integer");
    } else {
        cfg.seed = doc.at("seed").get<std::uint64_t>();
    }
    if (doc.contains("output")) cfg.output = r.string(doc, "output", "");

    if (doc.contains("experiment")) {
        const json& j = doc.at("experiment");
        if (!j.is_object()) {
            r.problem("/experiment", "must be an object");
        } else {
            cfg.experiment_id = r.string(j, "id", "/experiment");
            const auto& schemas = experiment_schema::all();
            auto it = schemas.find(cfg.experiment_id);
            if (it == schemas.end()) {
                if (!cfg.experiment_id.empty()) r.problem("/experiment/id", "unknown experiment '" + cfg.experiment_id + "'");
            } else {
                json params = json::object();
                for (const auto& [key, field] : it->second) params[key] = field.fallback;
                for (auto e = j.begin(); e != j.end(); ++e) {
                    if (e.key() == "id") continue;
                    auto fit = it->second.find(e.key());
                    if (fit == it->second.end()) {
                        r.problem("/experiment/" + e.key(), "unknown key for experiment '" + cfg.experiment_id + "'");
                    } else if (!detail::kind_matches(fit->second.kind, e.value())) {
                        r.problem("/experiment/" + e.key(), "has the wrong type");
                    } else if (fit->second.kind == experiment_schema::Kind::Object) {
                        // Nested objects: keys must be known, values replace defaults.
                        for (auto n = e.value().begin(); n != e.value().end(); ++n) {
                            if (!fit->second.fallback.contains(n.key()))
                                r.problem("/experiment/" + e.key() + "/" + n.key(), "unknown key");
                            else
                                params[e.key()][n.key()] = n.value();
                        }
                    } else {
                        params[e.key()] = e.value();
                    }
                }
                cfg.experiment = params;
            }
        }
    }

    // Cross-section checks once the pieces are known.
    if (r.problems.empty()) {
        for (const auto& v : violations(levy, f.K_modes())) r.problem("/levy", v);
        const TimeGrid g = TimeGrid::make(cfg.grid.t_start, cfg.grid.t_end, cfg.grid.dt);
        std::vector<double> sample = linspace(g.t_start, g.t_end, 201);
        for (const auto& v : violations(f, trunc, sample)) r.problem("/forcing", v);
        for (std::size_t k = 0; k < f.modes.size(); ++k) {
            const double s = delta_norm_sq(f, g.t_start, trunc);
            if (!std::isfinite(s)) r.problem("/forcing/modes/" + std::to_string(k) + "/delta", "not square summable");
        }
    }
    if (!r.problems.empty()) throw ConfigError(r.problems);
    return cfg;
}

inline RunConfig parse_config_text(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text, nullptr, true, true);
    } catch (const json::parse_error& e) {
        if (text.find_first_not_of(" \t\r\n") == std::string::npos) doc = json::object();
        else throw ConfigError({std::string("/: not valid JSON: ") + e.what()});
    }
    return parse_config_json(doc);
}

inline RunConfig parse_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

/// Canonical form: every field explicit, keys sorted.
inline json to_json(const RunConfig& cfg) {
    const auto& m = cfg.system.params;
    const auto& f = cfg.system.forcing;
    const auto& l = cfg.system.levy;
    json doc;
    doc["model"] = {{"d1", m.d1}, {"d2", m.d2}, {"a1", m.a1}, {"a2", m.a2}, {"b1", m.b1}, {"b2", m.b2}, {"p", m.p},
                    {"linear_control", m.linear_control},
                    {"lambda", {{"eps1", m.lambda.eps1}, {"eps2", m.lambda.eps2}, {"gamma1", m.lambda.gamma1}, {"gamma2", m.lambda.gamma2}}}};
    json modes = json::array();
    for (const auto& mode : f.modes) {
        json q = detail::kernel_json(mode.q.state);
        q["factor"] = mode.q.factor == JumpFactor::One ? "one" : "lorentzian";
        modes.push_back({{"h", detail::field_json(mode.h)},
                         {"kappa", detail::field_json(mode.kappa)},
                         {"delta", detail::field_json(mode.delta)},
                         {"sigma", detail::kernel_json(mode.sigma)},
                         {"q", q}});
    }
    doc["forcing"] = {{"f1", detail::field_json(f.f1)}, {"f2", detail::field_json(f.f2)}, {"modes", modes}, {"alpha", f.alpha}};
    if (f.chi) doc["forcing"]["chi"] = *f.chi;
    doc["levy"] = {{"poisson_intensity", l.poisson_intensity},
                   {"jump_law", {{"kind", l.jump_law.kind == JumpLawKind::Gaussian ? "gaussian" : "uniform_small"}, {"scale", l.jump_law.scale}}},
                   {"truncate_small", l.truncate_small},
                   {"M_jump_bound", l.M_jump_bound}};
    doc["truncation"] = {{"half_width", cfg.system.trunc.half_width},
                         {"boundary", cfg.system.trunc.boundary == Boundary::Periodic ? "periodic" : "zero_dirichlet"}};
    doc["grid"] = {{"t_start", cfg.grid.t_start}, {"t_end", cfg.grid.t_end}, {"dt", cfg.grid.dt}, {"save_every", cfg.grid.save_every}};
    const auto& il = cfg.ensemble.initial_law;
    json law = {{"kind", il.kind == InitialLawConfig::Kind::PointMass ? "point_mass" : "gaussian_cloud"},
                {"u", il.mean.u}, {"v", il.mean.v}};
    if (il.kind == InitialLawConfig::Kind::GaussianCloud) law["sd"] = il.sd;
    doc["ensemble"] = {{"M", cfg.ensemble.M}, {"common_noise", cfg.ensemble.common_noise}, {"initial_law", law}};
    doc["scheme"] = cfg.system.variant == SchemeVariant::CompensatedForm ? "compensated" : "section7_literal";
    doc["seed"] = cfg.seed;
    if (cfg.output) doc["output"] = *cfg.output;
    if (!cfg.experiment_id.empty()) {
        json e = cfg.experiment;
        e["id"] = cfg.experiment_id;
        doc["experiment"] = e;
    }
    return doc;
}

inline std::string canonical_string(const RunConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

inline InitialLaw make_initial_law(const InitialLawConfig& c) {
    if (c.kind == InitialLawConfig::Kind::PointMass) return PointMass{c.mean};
    return GaussianCloud{c.mean, c.sd};
}

inline EnsembleConfig make_ensemble(const RunConfig& cfg) {
    EnsembleConfig e;
    e.M = cfg.ensemble.M;
    e.initial_law = make_initial_law(cfg.ensemble.initial_law);
    e.seed = SeedSpec{cfg.seed};
    e.common_noise = cfg.ensemble.common_noise;
    return e;
}

}  // namespace selkov
