// Command-line driver: simulate, verify, ensemble, fit-pce, train-dnn, propagate, sobol.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "convect_uq/config.hpp"
#include "convect_uq/error.hpp"
#include "convect_uq/io.hpp"
#include "convect_uq/log.hpp"
#include "convect_uq/pce.hpp"
#include "convect_uq/uq.hpp"

using namespace convect_uq;
namespace fs = std::filesystem;

namespace {

enum ExitCode { Ok = 0, BadConfig = 1, NotConverged = 2, MissingPrerequisite = 3, Failure = 4 };

struct Options {
    std::string config_path;
    std::string out_dir;
    int workers = 0;
    std::optional<std::uint64_t> seed_override;
};

std::string path_in(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

std::string fixed(double v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string sci(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4e", v);
    return buf;
}

RunConfig load(const Options& o) {
    RunConfig c = load_config(o.config_path);
    if (!o.out_dir.empty()) c.output_dir = o.out_dir;
    if (o.workers > 0) c.workers = o.workers;
    if (o.seed_override) apply_seed_override(c, *o.seed_override);
    c.validate();
    return c;
}

std::string keys_help() {
    std::ostringstream os;
    os << "Config keys (INI sections, key = value, # comments) with defaults:\n";
    std::string section;
    for (const auto& k : config_keys()) {
        if (k.section != section) {
            section = k.section;
            os << "  [" << section << "]\n";
        }
        os << "    " << k.key << " = " << k.default_value << "    # " << k.help << '\n';
    }
    os << "Exit codes: 0 ok, 1 bad config, 2 non-convergence, 3 missing prerequisite, 4 other failure.\n";
    return os.str();
}

void write_manifest_summary(const std::string& name, const EnsembleManifest& m) {
    std::cout << "  " << name << ": " << m.rows.size() << " samples, " << m.done_ids().size() << " done, "
              << m.failed_ids().size() << " failed\n";
}

// ---------------------------------------------------------------------------

int cmd_simulate(const Options& o) {
    const RunConfig c = load(o);
    c.require({"solver"});
    const StructuredGrid grid(c.grid_n);
    CavitySolver solver(grid, c.solver, c.boundary);
    FlowState state = solver.initial_state();
    const SteadyDiagnostics diag = solver.run_to_steady(state);

    const std::string dir = path_in(c.output_dir, "simulate");
    write_field_csv(path_in(dir, "theta.csv"), state.theta);
    write_field_csv(path_in(dir, "u.csv"), state.velocity.u);
    write_field_csv(path_in(dir, "v.csv"), state.velocity.v);
    write_field_csv(path_in(dir, "w.csv"), state.velocity.w);
    write_field_csv(path_in(dir, "pressure.csv"), pressure_from_phi(state.phi, c.solver, state.dt));
    const Array2d nu = nusselt_field(state, c.boundary, grid);
    write_array_csv(path_in(dir, "nu_hot.csv"), nu);
    write_array_csv(path_in(dir, "nu_cold.csv"), cold_wall_nusselt_field(state, c.boundary, grid));
    io::write_file(path_in(dir, "diagnostics.json"), diag.to_json() + "\n");
    io::write_file(path_in(dir, "centerlines.csv"), centerline_csv(centerline_profiles(state, grid)));

    std::cout << "mean Nu: " << fixed(mean_nusselt(nu, grid.h())) << '\n'
              << "max Nu: " << fixed(nu.maxCoeff()) << '\n'
              << "steps: " << diag.steps << '\n'
              << "converged: " << (diag.converged ? "yes" : "no") << '\n';
    return diag.converged ? Ok : NotConverged;
}

int cmd_verify(const Options& o) {
    const RunConfig c = load(o);
    c.require({"solver", "grid"});
    if (c.grid_sizes.size() != 3) throw ConfigError("[grid] sizes must list exactly three grid sizes");
    if (!(c.grid_sizes[0] < c.grid_sizes[1] && c.grid_sizes[1] < c.grid_sizes[2]))
        throw ConfigError("[grid] sizes must be strictly increasing");
    const std::string dir = path_in(c.output_dir, "verify");
    std::vector<double> nus;
    bool all_converged = true;
    std::ostringstream table;
    table << "n,mean_nu,max_nu,steps,converged\n";
    std::cout << "grid  mean Nu     max Nu      steps\n";
    for (int n : c.grid_sizes) {
        const StructuredGrid grid(n);
        if (c.boundary.strip_count() > n) throw ConfigError("[boundary] more hot strips than cells along y");
        CavitySolver solver(grid, c.solver, c.boundary);
        FlowState state = solver.initial_state();
        const SteadyDiagnostics diag = solver.run_to_steady(state);
        all_converged = all_converged && diag.converged;
        const Array2d nu = nusselt_field(state, c.boundary, grid);
        const double mean = mean_nusselt(nu, grid.h());
        nus.push_back(mean);
        io::write_file(path_in(dir, "centerlines_n" + std::to_string(n) + ".csv"),
                       centerline_csv(centerline_profiles(state, grid)));
        table << n << ',' << io::fmt17(mean) << ',' << io::fmt17(nu.maxCoeff()) << ',' << diag.steps << ','
              << (diag.converged ? "true" : "false") << '\n';
        std::printf("%-5d %-11s %-11s %ld%s\n", n, fixed(mean).c_str(), fixed(nu.maxCoeff()).c_str(), diag.steps,
                    diag.converged ? "" : " (not converged)");
    }
    io::write_file(path_in(dir, "grid_study.csv"), table.str());
    const RichardsonResult r = richardson(c.grid_sizes, nus);
    std::ostringstream summary;
    if (r.exact) {
        std::cout << "observed order: exact\n";
        summary << "observed_order,exact\n";
    } else if (r.order_defined) {
        std::cout << "observed order: " << fixed(r.observed_order, 3) << '\n';
        summary << "observed_order," << io::fmt17(r.observed_order) << '\n';
    } else {
        std::cout << "observed order: undefined (non-monotone)\n";
        summary << "observed_order,undefined\n";
    }
    std::cout << "extrapolated mean Nu: " << fixed(r.extrapolated) << '\n';
    summary << "extrapolated_mean_nu," << io::fmt17(r.extrapolated) << '\n';
    io::write_file(path_in(dir, "richardson.csv"), summary.str());
    return all_converged ? Ok : NotConverged;
}

int cmd_ensemble(const Options& o) {
    const RunConfig c = load(o);
    c.require({"solver"});
    if (!c.has("case_a") && !c.has("case_b")) throw ConfigError("missing required section [case_a] or [case_b]");
    const StructuredGrid grid(c.grid_n);
    EnsembleOptions opts;
    opts.workers = c.workers;
    std::cout << "ensembles under " << c.output_dir << '\n';
    if (c.has("case_a")) {
        const auto e = run_case_a_ensembles(c.case_a, c.solver, c.boundary, grid, c.output_dir, opts);
        write_manifest_summary("case_a train", e.train);
        write_manifest_summary("case_a test", e.test);
        write_manifest_summary("case_a reference", e.reference);
    }
    if (c.has("case_b")) {
        const auto e = run_case_b_ensembles(c.case_b, c.solver, c.boundary, grid, c.output_dir, opts);
        write_manifest_summary("case_b train", e.train);
        write_manifest_summary("case_b validation", e.validation);
        write_manifest_summary("case_b test", e.test);
        write_manifest_summary("case_b reference", e.reference);
    }
    return Ok;
}

std::string pce_dir(const RunConfig& c) { return path_in(c.output_dir, "case_a/pce"); }
std::string dnn_dir(const RunConfig& c) { return path_in(c.output_dir, "case_b/dnn"); }

int cmd_fit_pce(const Options& o) {
    const RunConfig c = load(o);
    c.require({"case_a"});
    const auto ensembles = load_case_a_ensembles(c.case_a, c.output_dir);
    const CaseAFit fit = fit_case_a(c.case_a, ensembles);
    const std::string dir = pce_dir(c);
    for (const auto& [q, model] : fit.models) write_pce_model(path_in(dir, q + ".pce"), model);

    const PceModel& scalars = fit.models.at("scalars");
    std::ostringstream csv;
    csv << "output,test_error,fit_residual\n";
    std::cout << "PCE order " << scalars.basis.order << ", level " << c.case_a.level << ", "
              << scalars.basis.size() << " terms, condition " << sci(scalars.report.condition_estimate) << '\n';
    std::cout << "output        test error  fit residual\n";
    for (std::size_t k = 0; k < scalar_output_names.size(); ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        csv << scalar_output_names[k] << ',' << io::fmt17(fit.test_error[i]) << ','
            << io::fmt17(scalars.report.relative_rms_residual[i]) << '\n';
        std::printf("%-13s %-11s %s\n", scalar_output_names[k].c_str(), sci(fit.test_error[i]).c_str(),
                    sci(scalars.report.relative_rms_residual[i]).c_str());
    }
    io::write_file(path_in(dir, "test_error.csv"), csv.str());
    write_array_csv(path_in(dir, "response_surface_mean_nu.csv"),
                    response_surface(scalars, 0, c.case_a.surface_resolution));
    return Ok;
}

int cmd_train_dnn(const Options& o) {
    const RunConfig c = load(o);
    c.require({"case_b"});
    const auto ensembles = load_case_b_ensembles(c.output_dir);
    const CaseBTraining t = train_case_b(c.case_b, ensembles, c.dnn_preset, c.train);
    const std::string dir = dnn_dir(c);
    std::ostringstream errors;
    errors << "quantity,train_error_percent,test_error_percent\n";
    std::cout << "quantity  train error %  test error %\n";
    for (const auto& q : field_quantities) {
        write_network(path_in(dir, q + ".mlp"), t.networks.at(q));
        const auto& h = t.histories.at(q);
        std::ostringstream hist;
        hist << "epoch,train_loss,validation_loss\n";
        for (std::size_t e = 0; e < h.train_loss.size(); ++e)
            hist << e + 1 << ',' << io::fmt17(h.train_loss[e]) << ','
                 << (e < h.validation_loss.size() ? io::fmt17(h.validation_loss[e]) : std::string("nan")) << '\n';
        io::write_file(path_in(dir, "history_" + q + ".csv"), hist.str());
        const auto [tr, te] = t.errors.at(q);
        errors << q << ',' << io::fmt17(tr) << ',' << io::fmt17(te) << '\n';
        std::printf("%-9s %-14s %s\n", q.c_str(), fixed(tr, 4).c_str(), fixed(te, 4).c_str());
    }
    io::write_file(path_in(dir, "errors.csv"), errors.str());
    std::string warnings;
    for (const auto& w : t.warnings) {
        warnings += w + "\n";
        std::cout << "warning: " << w << '\n';
    }
    io::write_file(path_in(dir, "warnings.txt"), warnings);
    return Ok;
}

PceModel load_pce(const std::string& path) {
    if (!io::file_exists(path)) throw MissingPrerequisiteError("missing PCE model " + path, path);
    return read_pce_model(path);
}

void print_stats(const StatFields& stats) {
    std::cout << "quantity  shift of mean %  max std       max |difference|\n";
    for (const auto& f : stats.fields)
        std::printf("%-9s %-16s %-13s %s\n", f.quantity.c_str(), fixed(f.relative_shift_percent, 4).c_str(),
                    sci(f.max_std).c_str(), sci(f.max_abs_difference).c_str());
}

int cmd_propagate(const Options& o) {
    const RunConfig c = load(o);
    if (!c.has("case_a") && !c.has("case_b")) throw ConfigError("missing required section [case_a] or [case_b]");
    if (c.has("case_a")) {
        CaseAFit fit;
        for (const auto& q : {std::string("scalars"), std::string("nu"), std::string("theta"), std::string("u"),
                              std::string("v")})
            fit.models.emplace(q, load_pce(path_in(pce_dir(c), q + ".pce")));
        const auto ensembles = load_case_a_ensembles(c.case_a, c.output_dir);
        const CaseAPropagation p = propagate_case_a(c.case_a, fit, ensembles);
        const std::string dir = path_in(c.output_dir, "case_a/stats");
        write_stat_fields(dir, p.stats);
        std::ostringstream m;
        m << "output,mean,variance\n";
        for (std::size_t k = 0; k < scalar_output_names.size(); ++k) {
            const auto i = static_cast<Eigen::Index>(k);
            m << scalar_output_names[k] << ',' << io::fmt17(p.scalar_moments.mean[i]) << ','
              << io::fmt17(p.scalar_moments.variance[i]) << '\n';
        }
        io::write_file(path_in(dir, "pce_moments.csv"), m.str());
        std::cout << "case A (" << c.case_a.mc_samples << " surrogate samples)\n";
        print_stats(p.stats);
    }
    if (c.has("case_b")) {
        std::map<std::string, MlpNetwork> nets;
        for (const auto& q : field_quantities) {
            const std::string path = path_in(dnn_dir(c), q + ".mlp");
            if (!io::file_exists(path)) throw MissingPrerequisiteError("missing network " + path, path);
            nets.emplace(q, read_network(path));
        }
        const auto ensembles = load_case_b_ensembles(c.output_dir);
        const StatFields stats = propagate_case_b(c.case_b, nets, ensembles);
        write_stat_fields(path_in(c.output_dir, "case_b/stats"), stats);
        std::cout << "case B (" << c.case_b.mc_samples << " surrogate samples)\n";
        print_stats(stats);
    }
    return Ok;
}

int cmd_sobol(const Options& o) {
    const RunConfig c = load(o);
    const bool fixture = !c.pce_model.empty();
    const std::string path = fixture ? c.pce_model : path_in(pce_dir(c), "scalars.pce");
    const PceModel model = load_pce(path);
    std::vector<std::string> names;
    if (!fixture && model.basis.dims == 2) names = {"ra", "pr"};
    else
        for (int d = 0; d < model.basis.dims; ++d) names.push_back("xi_" + std::to_string(d + 1));
    const SobolTable t = sobol_table(model, names);

    std::ostringstream csv;
    csv << "output";
    std::cout << "total Sobol indices\noutput       ";
    for (const auto& n : t.inputs) {
        csv << ',' << n;
        std::printf(" %-8s", n.c_str());
    }
    csv << '\n';
    std::cout << '\n';
    for (Eigen::Index k = 0; k < t.total.rows(); ++k) {
        csv << t.outputs[static_cast<std::size_t>(k)];
        std::printf("%-13s", t.outputs[static_cast<std::size_t>(k)].c_str());
        for (Eigen::Index d = 0; d < t.total.cols(); ++d) {
            csv << ',' << io::fmt17(t.total(k, d));
            std::printf(" %-8s", fixed(t.total(k, d), 4).c_str());
        }
        csv << '\n';
        std::cout << '\n';
    }
    io::write_file(path_in(c.output_dir, "sobol/total_sobol.csv"), csv.str());
    return Ok;
}

int run_guarded(int (*fn)(const Options&), const Options& o) {
    try {
        return fn(o);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return BadConfig;
    } catch (const MissingPrerequisiteError& e) {
        std::cerr << "missing prerequisite: " << e.path() << " (" << e.what() << ")\n";
        return MissingPrerequisite;
    } catch (const DivergenceError& e) {
        std::cerr << "non-convergence: " << e.what() << '\n';
        return NotConverged;
    } catch (const LinearSolverError& e) {
        std::cerr << "non-convergence: " << e.what() << '\n';
        return NotConverged;
    } catch (const EnsembleError& e) {
        std::cerr << "ensemble failure: " << e.what() << '\n';
        return NotConverged;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return Failure;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Uncertainty quantification for natural convection in a differentially heated cube"};
    app.require_subcommand(1);
    app.footer(keys_help());

    Options options;
    int (*selected)(const Options&) = nullptr;
    struct Sub {
        const char* name;
        const char* help;
        int (*fn)(const Options&);
    };
    const Sub subs[] = {
        {"simulate", "run one deterministic case to steady state", cmd_simulate},
        {"verify", "grid study on three grids with Richardson extrapolation", cmd_verify},
        {"ensemble", "run the solver ensembles of [case_a] and/or [case_b]", cmd_ensemble},
        {"fit-pce", "fit polynomial chaos surrogates to the case A ensemble", cmd_fit_pce},
        {"train-dnn", "train the four case B networks", cmd_train_dnn},
        {"propagate", "Monte Carlo through the surrogates; shift of mean and std fields", cmd_propagate},
        {"sobol", "total Sobol indices from a PCE model", cmd_sobol},
    };
    for (const auto& s : subs) {
        CLI::App* sub = app.add_subcommand(s.name, s.help);
        sub->footer(keys_help());
        sub->add_option("--config", options.config_path, "INI configuration file")->required();
        sub->add_option("--out-dir", options.out_dir, "overrides [output] dir");
        sub->add_option("--workers", options.workers, "overrides [solver] workers")->check(CLI::PositiveNumber);
        sub->add_option("--seed-override", options.seed_override, "replaces every seed in the config");
        sub->callback([&selected, fn = s.fn] { selected = fn; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? Ok : BadConfig;
    }
    return run_guarded(selected, options);
}
