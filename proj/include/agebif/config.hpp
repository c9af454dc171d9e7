#pragma once

#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "agebif/field.hpp"

namespace agebif {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Fertility profile choice per species.
struct ProfileSpec {
    enum class Kind { constant, exp_decay, table };
    Kind kind = Kind::constant;
    double rate = 1.0;               // exp_decay only
    std::vector<double> table;       // table only, one sample per age node
};

struct RunConfig {
    std::string mode;  // normally set by the CLI subcommand
    std::vector<double> eta_values{1.2, 1.5, 2.0, 3.0};
    std::vector<double> xi_values{1.2, 1.5, 2.0, 3.0};
    std::string branch = "B3_in_xi";
    double fixed_param = 1.3;
    double step0 = 0.02;
    double param_limit = 6.0;
    int point_cap = 200;
    double eta_max = 8.0;
    double xi_max = 8.0;
};

struct ToleranceConfig {
    double newton = 1e-10;
    double spectral_residual = 1e-8;
    double consistency = 1e-6;
    double envelope_slack = 0.05;
};

struct OutputConfig {
    std::string directory = "out";
    bool csv = true;
    bool json = true;
};

/// Full scenario description; defaults give the desk-scale setup
/// (n = 64, M = 128, unit interval, a_m = 1, unit coefficients,
/// constant normalized profiles).
struct ScenarioConfig {
    int n_interior = 64;
    double length = 1.0;
    int age_steps = 128;
    double a_max = 1.0;
    ModelParams params;
    ProfileSpec prey;
    ProfileSpec predator;
    RunConfig run;
    ToleranceConfig tolerances;
    OutputConfig output;
    double prey_scale_factor = 1.0;  // negative-control injection; 1 = off
};

namespace detail {

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
}

inline double parse_number(const std::string& text, int line) {
    try {
        size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw ConfigError("line " + std::to_string(line) + ": not a number: '" + text + "'");
    }
}

inline std::vector<double> parse_number_list(const std::string& text, int line) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(parse_number(item, line));
    }
    return out;
}

inline ProfileSpec parse_profile(const std::string& text, int line) {
    ProfileSpec p;
    if (text == "constant") {
        p.kind = ProfileSpec::Kind::constant;
        return p;
    }
    const auto open = text.find('(');
    if (open != std::string::npos && text.back() == ')') {
        const std::string head = trim(text.substr(0, open));
        const std::string args = text.substr(open + 1, text.size() - open - 2);
        if (head == "exp_decay") {
            p.kind = ProfileSpec::Kind::exp_decay;
            p.rate = parse_number(trim(args), line);
            return p;
        }
        if (head == "table") {
            p.kind = ProfileSpec::Kind::table;
            const std::vector<double> vals = parse_number_list(args, line);
            p.table.assign(vals.begin(), vals.end());
            if (p.table.empty())
                throw ConfigError("line " + std::to_string(line) + ": empty table profile");
            return p;
        }
    }
    throw ConfigError("line " + std::to_string(line) + ": unknown profile '" + text +
                      "' (expected constant, exp_decay(rate), or table(v0, v1, ...))");
}

}  // namespace detail

/// Validation distilled from the module preconditions; throws ConfigError
/// naming the violated invariant.
inline void validate_config(const ScenarioConfig& cfg) {
    if (cfg.n_interior < 3) throw ConfigError("grid.n_interior must be >= 3");
    if (!(cfg.length > 0.0)) throw ConfigError("grid.length must be positive");
    if (cfg.age_steps < 16) throw ConfigError("age.steps must be >= 16");
    if (!(cfg.a_max > 0.0)) throw ConfigError("age.a_max must be positive");
    if (!(cfg.params.alpha1 > 0.0 && cfg.params.alpha2 > 0.0 && cfg.params.beta1 > 0.0 &&
          cfg.params.beta2 > 0.0))
        throw ConfigError("params.alpha1, alpha2, beta1, beta2 must be positive");
    for (const ProfileSpec* p : {&cfg.prey, &cfg.predator}) {
        if (p->kind == ProfileSpec::Kind::table &&
            static_cast<int>(p->table.size()) != cfg.age_steps + 1)
            throw ConfigError("profile table length must be age.steps + 1 = " +
                              std::to_string(cfg.age_steps + 1) + ", got " +
                              std::to_string(p->table.size()));
        if (p->kind == ProfileSpec::Kind::exp_decay && !(p->rate >= 0.0))
            throw ConfigError("exp_decay rate must be nonnegative");
    }
    if (!(cfg.run.step0 > 0.0)) throw ConfigError("run.step0 must be positive");
    if (cfg.run.point_cap < 1) throw ConfigError("run.point_cap must be >= 1");
    if (!(cfg.run.eta_max > 1.0) || !(cfg.run.xi_max > 1.0))
        throw ConfigError("run.eta_max and run.xi_max must exceed 1");
    if (!(cfg.tolerances.newton > 0.0 && cfg.tolerances.spectral_residual > 0.0 &&
          cfg.tolerances.consistency > 0.0 && cfg.tolerances.envelope_slack > 0.0))
        throw ConfigError("tolerances must be positive");
    if (!(cfg.prey_scale_factor > 0.0))
        throw ConfigError("negative_control.prey_scale_factor must be positive");
    if (cfg.run.branch != "B3_in_xi" && cfg.run.branch != "S3_in_eta" &&
        cfg.run.branch != "S4_in_eta")
        throw ConfigError("run.branch must be one of B3_in_xi, S3_in_eta, S4_in_eta");
}

/// Strict key-value parser: sections in brackets, `key = value` lines,
/// `#`/`;` comments. Unknown sections or keys are errors.
inline ScenarioConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);

    ScenarioConfig cfg;
    std::string section;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto comment = line.find_first_of("#;");
        if (comment != std::string::npos) line = line.substr(0, comment);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("line " + std::to_string(lineno) + ": unterminated section");
            section = detail::trim(line.substr(1, line.size() - 2));
            if (section != "grid" && section != "age" && section != "params" &&
                section != "profiles" && section != "run" && section != "tolerances" &&
                section != "output" && section != "negative_control")
                throw ConfigError("line " + std::to_string(lineno) + ": unknown section [" +
                                  section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        const std::string qualified = section.empty() ? key : section + "." + key;

        auto num = [&] { return detail::parse_number(value, lineno); };
        auto numlist = [&] { return detail::parse_number_list(value, lineno); };

        if (qualified == "grid.n_interior") cfg.n_interior = static_cast<int>(num());
        else if (qualified == "grid.length") cfg.length = num();
        else if (qualified == "age.steps") cfg.age_steps = static_cast<int>(num());
        else if (qualified == "age.a_max") cfg.a_max = num();
        else if (qualified == "params.alpha1") cfg.params.alpha1 = num();
        else if (qualified == "params.alpha2") cfg.params.alpha2 = num();
        else if (qualified == "params.beta1") cfg.params.beta1 = num();
        else if (qualified == "params.beta2") cfg.params.beta2 = num();
        else if (qualified == "profiles.prey") cfg.prey = detail::parse_profile(value, lineno);
        else if (qualified == "profiles.predator")
            cfg.predator = detail::parse_profile(value, lineno);
        else if (qualified == "run.mode") cfg.run.mode = value;
        else if (qualified == "run.eta_values") cfg.run.eta_values = numlist();
        else if (qualified == "run.xi_values") cfg.run.xi_values = numlist();
        else if (qualified == "run.branch") cfg.run.branch = value;
        else if (qualified == "run.fixed_param") cfg.run.fixed_param = num();
        else if (qualified == "run.step0") cfg.run.step0 = num();
        else if (qualified == "run.param_limit") cfg.run.param_limit = num();
        else if (qualified == "run.point_cap") cfg.run.point_cap = static_cast<int>(num());
        else if (qualified == "run.eta_max") cfg.run.eta_max = num();
        else if (qualified == "run.xi_max") cfg.run.xi_max = num();
        else if (qualified == "tolerances.newton") cfg.tolerances.newton = num();
        else if (qualified == "tolerances.spectral_residual")
            cfg.tolerances.spectral_residual = num();
        else if (qualified == "tolerances.consistency") cfg.tolerances.consistency = num();
        else if (qualified == "tolerances.envelope_slack")
            cfg.tolerances.envelope_slack = num();
        else if (qualified == "output.directory") cfg.output.directory = value;
        else if (qualified == "output.formats") {
            cfg.output.csv = value.find("csv") != std::string::npos;
            cfg.output.json = value.find("json") != std::string::npos;
            if (!cfg.output.csv && !cfg.output.json)
                throw ConfigError("line " + std::to_string(lineno) +
                                  ": output.formats must mention csv and/or json");
        } else if (qualified == "negative_control.prey_scale_factor")
            cfg.prey_scale_factor = num();
        else
            throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + qualified +
                              "'");
    }
    validate_config(cfg);
    return cfg;
}

}  // namespace agebif
