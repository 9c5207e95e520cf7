#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <string>
#include <type_traits>

#include <json.hpp>

#include "fbsde/assembly.hpp"
#include "fbsde/simulate.hpp"

namespace fbsde {

// parsed, semantically validated run configuration; gate checks and epsilon
// resolution happen later in the runner
struct RunConfig {
    KappaParams utility;
    std::shared_ptr<const MarketSpec> market;
    SystemForm form = SystemForm::PForm;
    double epsilon = -1.0;  // negative means "auto"
    bool epsilon_auto = false;
    GridSpec grid;
    int quad_nodes = 8;
    bool has_simulate = false;
    SimulateOptions sim;
    long csv_paths = 100;
    std::vector<std::string> checks;
    // negative control: verification sees the solved field shifted by this
    // constant while the recorded paths stay honest, so checks must fail
    double corrupt_field_shift = 0.0;
    std::string output_dir = "out";
};

namespace cfg {

using nlohmann::json;

inline void require_object(const json& j, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
}

inline void check_keys(const json& j, const std::string& where,
                       std::initializer_list<const char*> required,
                       std::initializer_list<const char*> optional) {
    require_object(j, where);
    for (const char* k : required)
        if (!j.contains(k)) throw ConfigError(where + " is missing required key '" + k + "'");
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* k : required) known = known || item.key() == k;
        for (const char* k : optional) known = known || item.key() == k;
        if (!known) throw ConfigError(where + " has unknown key '" + item.key() + "'");
    }
}

template <class T>
T get_as(const json& j, const std::string& where, const char* key) {
    if (!j.is_object() || !j.contains(key))
        throw ConfigError(where + " is missing required key '" + key + "'");
    const json& v = j.at(key);
    if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>)
        if (!v.is_number_integer() && !v.is_number_unsigned())
            throw ConfigError(where + "." + key + " must be an integer");
    try {
        return v.get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + "." + key + " has the wrong type");
    }
}

template <class T>
T get_or(const json& j, const std::string& where, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    return get_as<T>(j, where, key);
}

inline TermSpec parse_term(const json& j, const std::string& where) {
    require_object(j, where);
    const std::string kind = get_as<std::string>(j, where, "kind");
    if (kind == "constant") {
        check_keys(j, where, {"kind", "value"}, {});
        return TermSpec::constant(get_as<double>(j, where, "value"));
    }
    if (kind == "linear") {
        check_keys(j, where, {"kind", "arg", "slope"}, {});
        return TermSpec::linear(get_as<int>(j, where, "arg"), get_as<double>(j, where, "slope"));
    }
    if (kind == "sine") {
        check_keys(j, where, {"kind", "arg", "amplitude", "frequency"}, {"phase"});
        return TermSpec::sine(get_as<int>(j, where, "arg"), get_as<double>(j, where, "amplitude"),
                              get_as<double>(j, where, "frequency"),
                              get_or<double>(j, where, "phase", 0.0));
    }
    throw ConfigError(where + ".kind must be constant, linear, or sine");
}

inline CoefficientFn parse_coefficient(const json& j, const std::string& where) {
    if (!j.is_array()) throw ConfigError(where + " must be an array of terms");
    CoefficientFn f;
    for (size_t i = 0; i < j.size(); ++i)
        f.terms.push_back(parse_term(j[i], where + "[" + std::to_string(i) + "]"));
    return f;
}

inline std::vector<CoefficientFn> parse_coefficients(const json& j, const std::string& where) {
    if (!j.is_array()) throw ConfigError(where + " must be an array of coefficients");
    std::vector<CoefficientFn> out;
    for (size_t i = 0; i < j.size(); ++i)
        out.push_back(parse_coefficient(j[i], where + "[" + std::to_string(i) + "]"));
    return out;
}

inline KappaParams parse_utility(const json& j) {
    const std::string where = "utility";
    const std::string family = get_as<std::string>(j, where, "family");
    KappaParams p;
    if (family == "linear") {
        check_keys(j, where, {"family", "gamma"}, {"offset"});
        p.family = KappaFamily::Linear;
        p.gamma = get_as<double>(j, where, "gamma");
        p.offset = get_or<double>(j, where, "offset", 0.0);
        return p;
    }
    if (family == "softplus_blend") {
        check_keys(j, where, {"family", "lo", "hi", "sharpness", "center"}, {});
        p.family = KappaFamily::SoftplusBlend;
        p.lo = get_as<double>(j, where, "lo");
        p.hi = get_as<double>(j, where, "hi");
        p.sharpness = get_as<double>(j, where, "sharpness");
        p.center = get_as<double>(j, where, "center");
        return p;
    }
    if (family == "tabulated") {
        check_keys(j, where, {"family", "knots_x", "knots_k"}, {});
        p.family = KappaFamily::Tabulated;
        p.knots_x = get_as<std::vector<double>>(j, where, "knots_x");
        p.knots_k = get_as<std::vector<double>>(j, where, "knots_k");
        return p;
    }
    throw ConfigError("utility.family must be linear, softplus_blend, or tabulated");
}

inline MarketParams parse_market(const json& j) {
    const std::string where = "market";
    check_keys(j, where, {"dim_n", "dim_d1", "dim_d2"},
               {"mu", "sigma", "theta", "terminal", "lip_h_x", "lip_h_xtilde", "lip_theta",
                "lip_mu", "lip_sigma", "sup_theta", "sup_h", "sup_sigma"});
    MarketParams p;
    p.dim_n = get_as<int>(j, where, "dim_n");
    p.dim_d1 = get_as<int>(j, where, "dim_d1");
    p.dim_d2 = get_as<int>(j, where, "dim_d2");
    if (j.contains("mu")) p.mu = parse_coefficients(j["mu"], where + ".mu");
    if (j.contains("sigma")) p.sigma = parse_coefficients(j["sigma"], where + ".sigma");
    if (j.contains("theta")) p.theta = parse_coefficients(j["theta"], where + ".theta");
    if (j.contains("terminal"))
        p.terminal = parse_coefficient(j["terminal"], where + ".terminal");
    p.lip_h_x = get_or<double>(j, where, "lip_h_x", -1.0);
    p.lip_h_xtilde = get_or<double>(j, where, "lip_h_xtilde", -1.0);
    p.lip_theta = get_or<double>(j, where, "lip_theta", -1.0);
    p.lip_mu = get_or<double>(j, where, "lip_mu", -1.0);
    p.lip_sigma = get_or<double>(j, where, "lip_sigma", -1.0);
    p.sup_theta = get_or<double>(j, where, "sup_theta", -1.0);
    p.sup_h = get_or<double>(j, where, "sup_h", -1.0);
    p.sup_sigma = get_or<double>(j, where, "sup_sigma", -1.0);
    return p;
}

inline Axis parse_axis(const json& j, const std::string& where) {
    check_keys(j, where, {"lo", "hi", "points"}, {});
    Axis a;
    a.lo = get_as<double>(j, where, "lo");
    a.hi = get_as<double>(j, where, "hi");
    a.count = get_as<int>(j, where, "points");
    return a;
}

inline GridSpec parse_grid(const json& j, int& quad_nodes) {
    const std::string where = "grid";
    check_keys(j, where, {"horizon", "time_steps", "x_axis", "x0", "sup_vol_x"},
               {"xtilde_axes", "xtilde0", "sup_vol_xtilde", "quadrature_nodes"});
    GridSpec g;
    g.horizon = get_as<double>(j, where, "horizon");
    g.time_steps = get_as<int>(j, where, "time_steps");
    g.x_axis = parse_axis(j["x_axis"], where + ".x_axis");
    g.x0 = get_as<double>(j, where, "x0");
    g.sup_vol_x = get_as<double>(j, where, "sup_vol_x");
    if (j.contains("xtilde_axes")) {
        const auto& axes = j["xtilde_axes"];
        if (!axes.is_array()) throw ConfigError(where + ".xtilde_axes must be an array");
        for (size_t i = 0; i < axes.size(); ++i)
            g.xtilde_axes.push_back(
                parse_axis(axes[i], where + ".xtilde_axes[" + std::to_string(i) + "]"));
        if (!j.contains("sup_vol_xtilde"))
            throw ConfigError(where + ".sup_vol_xtilde is required with xtilde_axes");
    }
    g.xtilde0 = get_or<std::vector<double>>(j, where, "xtilde0", {});
    g.sup_vol_xtilde = get_or<std::vector<double>>(j, where, "sup_vol_xtilde", {});
    quad_nodes = get_or<int>(j, where, "quadrature_nodes", 8);
    return g;
}

inline const std::set<std::string>& known_checks() {
    static const std::set<std::string> s{"closed_form", "martingale", "gradient_band",
                                         "epsilon_scaling", "form_equivalence"};
    return s;
}

}  // namespace cfg

inline RunConfig parse_config(const nlohmann::json& doc) {
    using cfg::get_as;
    using cfg::get_or;
    cfg::check_keys(doc, "config", {"utility", "market", "fbsde", "grid"},
                    {"simulate", "verify", "output", "corrupt_field_shift"});

    RunConfig rc;
    rc.utility = cfg::parse_utility(doc["utility"]);
    // constructing the model performs the family's semantic validation
    { KappaModel validate(rc.utility); static_cast<void>(validate); }
    rc.market = std::make_shared<MarketSpec>(cfg::parse_market(doc["market"]));

    const auto& fb = doc["fbsde"];
    cfg::check_keys(fb, "fbsde", {"form", "epsilon"}, {});
    const std::string form = get_as<std::string>(fb, "fbsde", "form");
    if (form == "p")
        rc.form = SystemForm::PForm;
    else if (form == "b")
        rc.form = SystemForm::BForm;
    else
        throw ConfigError("fbsde.form must be \"p\" or \"b\"");
    if (fb["epsilon"].is_string()) {
        if (fb["epsilon"].get<std::string>() != "auto")
            throw ConfigError("fbsde.epsilon must be a positive number or \"auto\"");
        rc.epsilon_auto = true;
    } else {
        rc.epsilon = get_as<double>(fb, "fbsde", "epsilon");
        if (!(rc.epsilon > 0.0) || !std::isfinite(rc.epsilon))
            throw ConfigError("fbsde.epsilon must be a positive number or \"auto\"");
    }

    rc.grid = cfg::parse_grid(doc["grid"], rc.quad_nodes);

    if (doc.contains("simulate")) {
        const auto& sj = doc["simulate"];
        cfg::check_keys(sj, "simulate", {"n_paths", "seed"}, {"n_steps", "csv_paths"});
        rc.has_simulate = true;
        rc.sim.n_paths = get_as<long>(sj, "simulate", "n_paths");
        const long long seed = get_as<long long>(sj, "simulate", "seed");
        if (seed < 0) throw ConfigError("simulate.seed must be non-negative");
        rc.sim.seed = static_cast<uint64_t>(seed);
        rc.sim.n_steps = get_or<int>(sj, "simulate", "n_steps", rc.grid.time_steps);
        rc.csv_paths = get_or<long>(sj, "simulate", "csv_paths", 100);
        if (rc.sim.n_paths < 1) throw ConfigError("simulate.n_paths must be positive");
        if (rc.sim.n_steps < 1) throw ConfigError("simulate.n_steps must be positive");
        if (rc.csv_paths < 0) throw ConfigError("simulate.csv_paths must be >= 0");
    }

    if (doc.contains("verify")) {
        const auto& vj = doc["verify"];
        if (!vj.is_array()) throw ConfigError("verify must be an array of check names");
        for (const auto& item : vj) {
            if (!item.is_string()) throw ConfigError("verify entries must be strings");
            const std::string name = item.get<std::string>();
            if (!cfg::known_checks().count(name))
                throw ConfigError("verify lists unknown check '" + name + "'");
            if (std::find(rc.checks.begin(), rc.checks.end(), name) == rc.checks.end())
                rc.checks.push_back(name);
        }
    }

    rc.corrupt_field_shift = get_or<double>(doc, "config", "corrupt_field_shift", 0.0);
    if (!std::isfinite(rc.corrupt_field_shift))
        throw ConfigError("corrupt_field_shift must be finite");

    rc.output_dir = get_or<std::string>(doc, "config", "output", "out");
    if (rc.output_dir.empty()) throw ConfigError("output must be a non-empty directory name");
    return rc;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return parse_config(doc);
}

}  // namespace fbsde
