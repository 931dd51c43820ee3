#include "convect_uq/config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <sstream>

#include "convect_uq/error.hpp"
#include "convect_uq/io.hpp"

namespace convect_uq {

namespace {

struct Entry {
    std::string section;
    std::string key;
    std::string help;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

/// Shortest text that reads back to the same double.
std::string fmt(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}
std::string fmt(bool v) { return v ? "true" : "false"; }
std::string fmt(long long v) { return std::to_string(v); }
std::string fmt_u64(std::uint64_t v) { return std::to_string(v); }

template <typename T>
std::string fmt_list(const std::vector<T>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ", ";
        if constexpr (std::is_floating_point_v<T>) out += fmt(values[i]);
        else out += std::to_string(values[i]);
    }
    return out;
}

double to_double(const std::string& s) { return io::parse_double(s); }

long long to_int(const std::string& s) { return io::parse_int(s); }

int to_int32(const std::string& s) {
    const long long v = to_int(s);
    if (v < -2147483647LL || v > 2147483647LL) throw FormatError("integer out of range: " + s);
    return static_cast<int>(v);
}

std::uint64_t to_u64(const std::string& s) {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
        throw FormatError("expected an unsigned integer, got '" + s + "'");
    try {
        return std::stoull(s);
    } catch (const std::exception&) {
        throw FormatError("unsigned integer out of range: " + s);
    }
}

bool to_bool(const std::string& s) {
    if (s == "true" || s == "yes" || s == "on" || s == "1") return true;
    if (s == "false" || s == "no" || s == "off" || s == "0") return false;
    throw FormatError("expected true or false, got '" + s + "'");
}

std::vector<double> to_double_list(const std::string& s) {
    std::vector<double> out;
    for (const auto& part : io::split(s, ',')) out.push_back(to_double(io::trim(part)));
    return out;
}

std::vector<int> to_int_list(const std::string& s) {
    std::vector<int> out;
    for (const auto& part : io::split(s, ',')) out.push_back(to_int32(io::trim(part)));
    return out;
}

#define CFG_DOUBLE(sec, name, field, text)                                                   \
    Entry {                                                                                   \
        sec, name, text, [](const RunConfig& c) { return fmt(static_cast<double>(c.field)); }, \
            [](RunConfig& c, const std::string& v) { c.field = to_double(v); }                \
    }
#define CFG_INT(sec, name, field, text)                                                          \
    Entry {                                                                                       \
        sec, name, text, [](const RunConfig& c) { return fmt(static_cast<long long>(c.field)); }, \
            [](RunConfig& c, const std::string& v) { c.field = to_int32(v); }                     \
    }
#define CFG_LONG(sec, name, field, text)                                                         \
    Entry {                                                                                       \
        sec, name, text, [](const RunConfig& c) { return fmt(static_cast<long long>(c.field)); }, \
            [](RunConfig& c, const std::string& v) { c.field = to_int(v); }                       \
    }
#define CFG_U64(sec, name, field, text)                                               \
    Entry {                                                                            \
        sec, name, text, [](const RunConfig& c) { return fmt_u64(c.field); },          \
            [](RunConfig& c, const std::string& v) { c.field = to_u64(v); }            \
    }
#define CFG_BOOL(sec, name, field, text)                                              \
    Entry {                                                                            \
        sec, name, text, [](const RunConfig& c) { return fmt(c.field); },              \
            [](RunConfig& c, const std::string& v) { c.field = to_bool(v); }           \
    }
#define CFG_STRING(sec, name, field, text)                                            \
    Entry {                                                                            \
        sec, name, text, [](const RunConfig& c) { return c.field; },                   \
            [](RunConfig& c, const std::string& v) { c.field = v; }                    \
    }

const std::vector<Entry>& entries() {
    static const std::vector<Entry> table{
        CFG_INT("grid", "n", grid_n, "cells per direction"),
        Entry{"grid", "sizes", "grid sizes for verify (three, increasing)",
              [](const RunConfig& c) { return fmt_list(c.grid_sizes); },
              [](RunConfig& c, const std::string& v) { c.grid_sizes = to_int_list(v); }},

        CFG_DOUBLE("solver", "ra", solver.ra, "Rayleigh number"),
        CFG_DOUBLE("solver", "pr", solver.pr, "Prandtl number"),
        CFG_DOUBLE("solver", "dt", solver.dt, "fixed time step; 0 selects CFL control"),
        CFG_DOUBLE("solver", "cfl_target", solver.cfl_target, "target CFL number"),
        CFG_DOUBLE("solver", "u_floor", solver.u_floor, "velocity floor for the CFL time step"),
        CFG_INT("solver", "dt_update_interval", solver.dt_update_interval, "steps between time-step updates"),
        CFG_DOUBLE("solver", "steady_tol", solver.steady_tol, "steady-state relative change threshold"),
        CFG_LONG("solver", "max_steps", solver.max_steps, "time step limit"),
        CFG_DOUBLE("solver", "poisson_tol", solver.poisson_tol, "pressure Poisson tolerance"),
        CFG_DOUBLE("solver", "helmholtz_tol", solver.helmholtz_tol, "implicit diffusion tolerance"),
        CFG_BOOL("solver", "gravity", solver.gravity, "buoyancy on or off"),
        CFG_DOUBLE("solver", "theta_ref", solver.theta_ref, "buoyancy reference temperature"),
        CFG_DOUBLE("solver", "delta_theta", solver.delta_theta, "buoyancy temperature scale"),
        CFG_DOUBLE("solver", "blowup_limit", solver.blowup_limit, "magnitude treated as divergence"),
        CFG_INT("solver", "max_cg_iterations", solver.max_cg_iterations, "conjugate gradient iteration cap"),
        CFG_INT("solver", "workers", workers, "concurrent ensemble samples"),

        CFG_DOUBLE("boundary", "cold", boundary.cold_wall_theta, "cold wall temperature"),
        Entry{"boundary", "hot", "hot wall temperature, or one value per strip",
              [](const RunConfig& c) { return fmt_list(c.boundary.hot_strips); },
              [](RunConfig& c, const std::string& v) { c.boundary.hot_strips = to_double_list(v); }},

        CFG_DOUBLE("case_a", "mu_ra", case_a.mu_ra, "mean Rayleigh number"),
        CFG_DOUBLE("case_a", "ra_sigma_fraction", case_a.ra_sigma_fraction, "Ra std as a fraction of the mean"),
        CFG_DOUBLE("case_a", "mu_pr", case_a.mu_pr, "mean Prandtl number"),
        CFG_DOUBLE("case_a", "pr_sigma_fraction", case_a.pr_sigma_fraction, "Pr std as a fraction of the mean"),
        CFG_INT("case_a", "level", case_a.level, "Gauss-Hermite points per dimension"),
        CFG_INT("case_a", "test_points", case_a.test_points, "LHS test samples"),
        CFG_U64("case_a", "test_seed", case_a.test_seed, "test sample seed"),
        CFG_INT("case_a", "mc_samples", case_a.mc_samples, "Monte Carlo draws through the surrogate"),
        CFG_U64("case_a", "mc_seed", case_a.mc_seed, "Monte Carlo seed"),
        CFG_INT("case_a", "surface_resolution", case_a.surface_resolution, "response surface points per axis"),

        CFG_DOUBLE("case_b", "ra", case_b.ra, "Rayleigh number"),
        CFG_DOUBLE("case_b", "pr", case_b.pr, "Prandtl number"),
        CFG_INT("case_b", "strips", case_b.strips, "hot wall strips"),
        CFG_DOUBLE("case_b", "mean", case_b.mean, "strip temperature mean"),
        CFG_DOUBLE("case_b", "sigma", case_b.sigma, "strip temperature std"),
        CFG_INT("case_b", "n_train", case_b.n_train, "training samples"),
        CFG_INT("case_b", "n_validation", case_b.n_validation, "validation samples"),
        CFG_INT("case_b", "n_test", case_b.n_test, "test samples"),
        CFG_U64("case_b", "train_seed", case_b.train_seed, "training sample seed"),
        CFG_U64("case_b", "validation_seed", case_b.validation_seed, "validation sample seed"),
        CFG_U64("case_b", "test_seed", case_b.test_seed, "test sample seed"),
        CFG_INT("case_b", "mc_samples", case_b.mc_samples, "Monte Carlo draws through the networks"),
        CFG_U64("case_b", "mc_seed", case_b.mc_seed, "Monte Carlo seed"),

        CFG_INT("pce", "order", case_a.order, "total order; -1 selects level - 1"),
        CFG_STRING("pce", "model", pce_model, "model file for sobol; empty uses the fitted case A model"),

        CFG_STRING("dnn", "preset", dnn_preset, "network sizes: desk or full"),
        CFG_DOUBLE("dnn", "learning_rate", train.learning_rate, "Adam step size"),
        CFG_DOUBLE("dnn", "beta1", train.beta1, "Adam first-moment decay"),
        CFG_DOUBLE("dnn", "beta2", train.beta2, "Adam second-moment decay"),
        CFG_BOOL("dnn", "amsgrad", train.amsgrad, "use the running maximum of the second moment"),
        CFG_DOUBLE("dnn", "epsilon", train.epsilon, "Adam denominator offset"),
        CFG_INT("dnn", "epochs", train.epochs, "training epochs"),
        CFG_INT("dnn", "batch_size", train.batch_size, "mini-batch size; 0 for full batch"),
        CFG_U64("dnn", "seed", train.seed, "initialisation and shuffling seed"),

        CFG_STRING("output", "dir", output_dir, "artifact directory"),
    };
    return table;
}

#undef CFG_DOUBLE
#undef CFG_INT
#undef CFG_LONG
#undef CFG_U64
#undef CFG_BOOL
#undef CFG_STRING

const std::vector<std::string>& section_order() {
    static const std::vector<std::string> order{"grid", "solver", "boundary", "case_a", "case_b", "pce", "dnn", "output"};
    return order;
}

bool known_section(const std::string& s) {
    for (const auto& name : section_order())
        if (name == s) return true;
    return false;
}

std::string strip_comment(const std::string& line) {
    const auto hash = line.find('#');
    return hash == std::string::npos ? line : line.substr(0, hash);
}

}  // namespace

void RunConfig::require(const std::vector<std::string>& needed) const {
    for (const auto& s : needed)
        if (!has(s)) throw ConfigError("missing required section [" + s + "]");
}

void RunConfig::validate() const {
    auto wrap = [](const std::string& section, auto&& check) {
        try {
            check();
        } catch (const ConfigError&) {
            throw;
        } catch (const Error& e) {
            throw ConfigError("[" + section + "] " + e.what());
        }
    };
    wrap("grid", [&] {
        if (grid_n < 4) throw ConfigError("[grid] n must be at least 4");
        for (int s : grid_sizes)
            if (s < 4) throw ConfigError("[grid] sizes must all be at least 4");
    });
    wrap("solver", [&] {
        solver.validate();
        if (workers < 1) throw ConfigError("[solver] workers must be at least 1");
    });
    wrap("boundary", [&] {
        boundary.validate();
        if (boundary.strip_count() > grid_n) throw ConfigError("[boundary] more hot strips than cells along y");
    });
    if (has("case_a") || has("pce")) wrap("case_a", [&] { case_a.validate(); });
    if (has("case_b")) wrap("case_b", [&] {
            case_b.validate();
            if (case_b.strips > grid_n) throw ConfigError("[case_b] more strips than cells along y");
        });
    wrap("dnn", [&] {
        train.validate();
        if (dnn_preset != "desk" && dnn_preset != "full") throw ConfigError("[dnn] preset must be desk or full");
    });
    if (output_dir.empty()) throw ConfigError("[output] dir must not be empty");
}

std::vector<ConfigKey> config_keys() {
    const RunConfig defaults;
    std::vector<ConfigKey> out;
    for (const auto& e : entries()) out.push_back({e.section, e.key, e.get(defaults), e.help});
    return out;
}

RunConfig parse_config(const std::string& text, const std::string& source) {
    RunConfig config;
    std::map<std::string, std::map<std::string, const Entry*>> lookup;
    for (const auto& e : entries()) lookup[e.section][e.key] = &e;

    std::istringstream is(text);
    std::string raw;
    std::string section;
    int line_no = 0;
    std::set<std::string> seen_keys;
    auto fail = [&](const std::string& msg) {
        throw ConfigError(source + ":" + std::to_string(line_no) + ": " + msg);
    };
    while (std::getline(is, raw)) {
        ++line_no;
        const std::string line = io::trim(strip_comment(raw));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') fail("malformed section header '" + line + "'");
            section = io::trim(line.substr(1, line.size() - 2));
            if (!known_section(section)) fail("unknown section [" + section + "]");
            config.sections.insert(section);
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail("expected key = value, got '" + line + "'");
        if (section.empty()) fail("key outside of any section");
        const std::string key = io::trim(line.substr(0, eq));
        const std::string value = io::trim(line.substr(eq + 1));
        const auto it = lookup[section].find(key);
        if (it == lookup[section].end()) fail("unknown key '" + key + "' in [" + section + "]");
        if (!seen_keys.insert(section + "." + key).second) fail("duplicate key '" + key + "' in [" + section + "]");
        try {
            it->second->set(config, value);
        } catch (const Error& e) {
            fail("bad value for " + section + "." + key + ": " + e.what());
        } catch (const std::exception& e) {
            fail("bad value for " + section + "." + key + ": " + e.what());
        }
    }
    try {
        config.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(source + ": " + e.what());
    }
    return config;
}

RunConfig load_config(const std::string& path) {
    if (!io::file_exists(path)) throw ConfigError("config file not found: " + path);
    return parse_config(io::read_file(path), path);
}

std::string serialize_config(const RunConfig& config) {
    std::ostringstream os;
    bool first = true;
    for (const auto& section : section_order()) {
        if (!config.has(section)) continue;
        if (!first) os << '\n';
        first = false;
        os << '[' << section << "]\n";
        for (const auto& e : entries())
            if (e.section == section) os << e.key << " = " << e.get(config) << '\n';
    }
    return os.str();
}

void apply_seed_override(RunConfig& config, std::uint64_t seed) {
    config.case_a.test_seed = seed;
    config.case_a.mc_seed = seed + 1;
    config.case_b.train_seed = seed;
    config.case_b.validation_seed = seed + 1;
    config.case_b.test_seed = seed + 2;
    config.case_b.mc_seed = seed + 3;
    config.train.seed = seed;
}

}  // namespace convect_uq
