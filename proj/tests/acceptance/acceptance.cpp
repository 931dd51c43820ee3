// Acceptance criteria runner. With no arguments every criterion runs; otherwise
// only the numbered ones. Prints one PASS/FAIL line per criterion and exits
// non-zero if any selected criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "../common/oracles.hpp"
#include "convect_uq/config.hpp"
#include "convect_uq/dnn.hpp"
#include "convect_uq/io.hpp"
#include "convect_uq/pce.hpp"
#include "convect_uq/sampling.hpp"
#include "convect_uq/solver.hpp"
#include "convect_uq/uq.hpp"

using namespace convect_uq;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string num(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

fs::path work_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / "convect_uq_acceptance" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

double run_mean_nu(int n, const SolverConfig& cfg, const BoundarySpec& bc, double* max_nu = nullptr) {
    const StructuredGrid grid(n);
    CavitySolver solver(grid, cfg, bc);
    FlowState state = solver.initial_state();
    const auto diag = solver.run_to_steady(state);
    if (!diag.converged) throw DivergenceError("no steady state on the " + std::to_string(n) + " grid", "steady",
                                               diag.steps);
    const Array2d nu = nusselt_field(state, bc, grid);
    if (max_nu) *max_nu = nu.maxCoeff();
    return mean_nusselt(nu, grid.h());
}

// 1 ---------------------------------------------------------------------------

Outcome conduction_limit() {
    const auto start = std::chrono::steady_clock::now();
    const StructuredGrid grid(32);
    SolverConfig cfg;
    cfg.gravity = false;
    cfg.steady_tol = 1e-7;
    const BoundarySpec bc = BoundarySpec::uniform(1.05, 0.95);
    CavitySolver solver(grid, cfg, bc);
    FlowState state = solver.initial_state();
    const auto diag = solver.run_to_steady(state);
    const auto linear = ScalarField::from_function(grid, [](double x, double, double) { return 0.95 + 0.1 * x; });
    const double deviation = (state.theta.values() - linear.values()).cwiseAbs().maxCoeff();
    const double nu = mean_nusselt(nusselt_field(state, bc, grid), grid.h());
    const double elapsed = seconds_since(start);
    return {diag.converged && deviation < 1e-3 && std::abs(nu - 1.0) <= 1e-3 && elapsed < 60.0,
            "max deviation " + num(deviation) + ", mean Nu " + num(nu, 7) + ", " + num(elapsed, 3) + " s"};
}

// 2 ---------------------------------------------------------------------------

Outcome poisson_convergence() {
    auto error_at = [](int n) {
        const StructuredGrid g(n);
        const double pi = std::acos(-1.0);
        const auto exact = ScalarField::from_function(
            g, [pi](double x, double y, double z) { return std::cos(pi * x) * std::cos(pi * y) * std::cos(pi * z); });
        const ScalarField rhs(g, Eigen::VectorXd(-3.0 * pi * pi * exact.values()));
        const ScalarField phi = solve_poisson(rhs, 1e-12);
        return (phi.values() - exact.values()).cwiseAbs().maxCoeff();
    };
    const double e16 = error_at(16), e32 = error_at(32);
    const double ratio = e16 / e32;
    return {ratio >= 3.4 && ratio <= 4.6,
            "max error " + num(e16) + " (16) / " + num(e32) + " (32), ratio " + num(ratio)};
}

// 3 ---------------------------------------------------------------------------

Outcome divergence_free() {
    const StructuredGrid grid(32);
    SolverConfig cfg;
    cfg.ra = 1e5;
    cfg.poisson_tol = 1e-8;
    cfg.steady_tol = 1e-5;
    CavitySolver solver(grid, cfg, BoundarySpec::uniform());
    FlowState state = solver.initial_state();
    double worst = 0.0;
    long steps = 0;
    const auto diag = solver.run_to_steady(state, [&](const FlowState& s, const StepReport&) {
        worst = std::max(worst, max_abs_divergence(s.faces));
        ++steps;
    });
    const double bound = 10.0 * cfg.poisson_tol;
    return {diag.converged && steps > 0 && worst <= bound,
            "worst face divergence " + num(worst) + " over " + std::to_string(steps) + " steps (bound " +
                num(bound) + ")"};
}

// 4 ---------------------------------------------------------------------------

Outcome benchmark_trend() {
    const nlohmann::json golden =
        nlohmann::json::parse(io::read_file(std::string(CONVECT_UQ_GOLDEN_DIR) + "/benchmark_ra1e5.json"));
    const auto sizes = golden.at("sizes").get<std::vector<int>>();
    SolverConfig cfg;
    cfg.ra = golden.at("ra").get<double>();
    cfg.pr = golden.at("pr").get<double>();
    cfg.steady_tol = golden.at("steady_tol").get<double>();
    std::vector<double> nus;
    for (int n : sizes) nus.push_back(run_mean_nu(n, cfg, BoundarySpec::uniform()));
    const double d1 = nus[1] - nus[0], d2 = nus[2] - nus[1];
    const bool monotone = (d1 > 0 && d2 > 0) || (d1 < 0 && d2 < 0);
    const double shrink = std::abs(d1) / std::abs(d2);
    const RichardsonResult r = richardson(sizes, nus);
    const double stored = golden.at("extrapolated_mean_nu").get<double>();
    const double rel = std::abs(r.extrapolated - stored) / std::abs(stored);
    return {monotone && shrink >= 2.0 && rel <= 0.05,
            "mean Nu " + num(nus[0], 6) + ", " + num(nus[1], 6) + ", " + num(nus[2], 6) + "; shrink " +
                num(shrink, 3) + "; order " + num(r.observed_order, 3) + "; extrapolated " +
                num(r.extrapolated, 17) + " vs golden " + num(stored, 6)};
}

// 5 ---------------------------------------------------------------------------

Outcome max_nu_direction() {
    SolverConfig cfg;
    cfg.ra = 1e6;
    cfg.steady_tol = 1e-5;
    double max32 = 0.0, max48 = 0.0;
    run_mean_nu(32, cfg, BoundarySpec::uniform(), &max32);
    run_mean_nu(48, cfg, BoundarySpec::uniform(), &max48);
    const double reference = 18.71;
    const double rel = std::abs(max48 - reference) / reference;
    return {max48 > max32 && rel <= 0.25, "max Nu " + num(max32, 5) + " (32), " + num(max48, 5) +
                                              " (48); distance from 18.71 is " + num(100.0 * rel, 3) + "%"};
}

// 6 ---------------------------------------------------------------------------

Outcome pce_exactness() {
    const SampleMatrix grid = tensor_grid(4, 2, {0.0, 0.0}, {1.0, 1.0});
    Eigen::MatrixXd y(grid.rows(), 1);
    y.col(0) = grid.values.col(0).array() + grid.values.col(0).array() * grid.values.col(1).array();
    const PceModel model = fit_collocation(grid, y, make_basis(2, 3));
    double coeff_err = 0.0;
    for (Eigen::Index i = 0; i < model.basis.size(); ++i) {
        const auto& a = model.basis.terms[static_cast<std::size_t>(i)];
        const double expected = (a[0] == 1 && (a[1] == 0 || a[1] == 1)) ? 1.0 : 0.0;
        coeff_err = std::max(coeff_err, std::abs(model.coefficients(i, 0) - expected));
    }
    const PceMoments m = moments(model);
    const double mean_err = std::abs(m.mean[0]);
    const double var_err = std::abs(m.variance[0] - 2.0);
    const double s1 = total_sobol(model, 0)[0], s2 = total_sobol(model, 1)[0];
    const double sobol_err = std::max(std::abs(s1 - 1.0), std::abs(s2 - 0.5));
    const Eigen::Vector2d mc = oracles::jansen_total_sobol(1000000, 6);
    const double mc_err = std::max(std::abs(mc[0] - s1), std::abs(mc[1] - s2));
    return {coeff_err <= 1e-10 && mean_err <= 1e-10 && var_err <= 1e-10 && sobol_err <= 1e-10 && mc_err <= 0.02,
            "coefficient error " + num(coeff_err) + ", variance " + num(m.variance[0], 12) + ", S1 " + num(s1, 6) +
                ", S2 " + num(s2, 6) + ", MC check " + num(mc[0], 4) + "/" + num(mc[1], 4)};
}

// 7 ---------------------------------------------------------------------------

Outcome collocation_trend() {
    const fs::path root = work_dir("collocation");
    const StructuredGrid grid(16);
    SolverConfig solver;
    solver.dt = 0.1;
    solver.steady_tol = 1e-9;
    solver.poisson_tol = 1e-11;
    solver.helmholtz_tol = 1e-12;
    std::vector<double> errors;
    std::string detail = "mean Nu test error by level:";
    for (int level = 4; level <= 7; ++level) {
        CaseASpec spec;
        spec.level = level;
        spec.test_points = 30;
        const auto ensembles = run_case_a_ensembles(spec, solver, BoundarySpec::uniform(), grid, root.string());
        const CaseAFit fit = fit_case_a(spec, ensembles);
        errors.push_back(fit.test_error[0]);
        detail += " " + std::to_string(level) + ":" + num(fit.test_error[0], 3);
    }
    bool non_increasing = true;
    for (std::size_t i = 2; i < errors.size(); ++i) non_increasing = non_increasing && errors[i] <= errors[i - 1];
    return {non_increasing, detail};
}

// 8 ---------------------------------------------------------------------------

Outcome gradient_check() {
    std::mt19937_64 gen(8);
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) worst = std::max(worst, oracles::random_gradient_check(gen).max_relative_error);
    return {worst < 1e-6, "worst relative error over 20 networks " + num(worst)};
}

// 9 ---------------------------------------------------------------------------

Outcome metric_fidelity() {
    Eigen::MatrixXd truth(1, 3), pred(1, 3);
    truth << 0, 1, 2;
    pred << 0, 1, 1;
    const double metric = relative_average_percent_error(truth, pred);

    const std::vector<NormalMarginal> strips(4, {1.05, 0.01 / 3.0});
    auto draw = [&](int n, std::uint64_t seed) { return to_normal(latin_hypercube(n, 4, seed), strips).values; };
    const int outputs = 64;
    const Eigen::MatrixXd xt = draw(60, 1), xv = draw(10, 2), xs = draw(10, 3);
    const Eigen::MatrixXd yt = oracles::strip_response(xt, outputs), yv = oracles::strip_response(xv, outputs),
                          ys = oracles::strip_response(xs, outputs);
    MlpNetwork net = make_network({4, 32, 32, 32, 32, outputs}, 9);
    net.input_scaling = Standardizer<double>::fit(xt);
    net.output_scaling = Standardizer<double>::fit(yt);
    TrainConfig cfg;
    cfg.epochs = 300;
    cfg.lambda = 1e-3;
    const TrainResult r = train(net, {net.input_scaling.apply(xt), net.output_scaling.apply(yt)},
                                {net.input_scaling.apply(xv), net.output_scaling.apply(yv)}, cfg);
    const double test_error = relative_average_percent_error(ys, predict(r.network, xs));
    return {std::abs(metric - 100.0 / 6.0) <= 1e-9 && test_error < 2.0,
            "metric example " + num(metric, 12) + ", 4x32 network test error " + num(test_error, 3) + "%"};
}

// 10 --------------------------------------------------------------------------

Outcome mc_convergence() {
    const double slope = oracles::mc_error_slope({100, 1000, 10000, 100000}, 40);
    return {slope >= -0.6 && slope <= -0.4, "log-log slope " + num(slope, 4)};
}

// 11 --------------------------------------------------------------------------

Outcome case_b_smoke() {
    RunConfig c = load_config(std::string(CONVECT_UQ_SOURCE_DIR) + "/configs/case_b_desk.ini");
    const fs::path root = work_dir("case_b");
    const StructuredGrid grid(c.grid_n);
    EnsembleOptions opts;
    opts.workers = c.workers;
    const CaseBResult r =
        case_b_pipeline(c.case_b, c.solver, c.boundary, grid, root.string(), c.dnn_preset, c.train, opts);
    const bool complete = static_cast<int>(r.ensembles.train.done_ids().size()) == c.case_b.n_train &&
                          r.training.networks.size() == 4 && r.stats.fields.size() == 4;
    const StatField& nu = r.stats.get("nu");
    const double ratio = strip_structure_ratio(nu.as_array(nu.difference), c.case_b.strips);
    std::string errors;
    for (const auto& [q, e] : r.training.errors) errors += " " + q + ":" + num(e.second, 3) + "%";
    return {complete && ratio > 2.0 && nu.max_std < nu.max_abs_difference,
            "strip ratio " + num(ratio, 3) + ", Nu max std " + num(nu.max_std, 3) + " vs max |difference| " +
                num(nu.max_abs_difference, 3) + "; test errors" + errors};
}

// 12 --------------------------------------------------------------------------

int run_cli(const std::string& args) {
    const std::string cmd = std::string(CONVECT_UQ_CLI) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = io::read_file(e.path().string());
    return out;
}

Outcome reproducibility() {
    const fs::path root = work_dir("reproducibility");
    const fs::path cfg = root / "run.ini";
    std::ofstream(cfg) << "[grid]\nn = 8\nsizes = 8, 10, 12\n"
                          "[solver]\nsteady_tol = 1e-5\n"
                          "[case_a]\nlevel = 2\ntest_points = 3\nmc_samples = 500\nsurface_resolution = 5\n"
                          "[case_b]\nra = 1e5\nstrips = 2\nn_train = 6\nn_validation = 2\nn_test = 2\n"
                          "mc_samples = 500\n"
                          "[dnn]\nepochs = 20\n";
    const std::vector<std::string> commands{"simulate", "verify", "ensemble", "fit-pce",
                                            "train-dnn", "propagate", "sobol"};
    std::vector<std::string> diverged;
    std::map<std::string, std::string> first_fresh;
    for (const char* name : {"a", "b"}) {
        const fs::path out = root / name;
        for (const auto& sub : commands) {
            const std::string args = sub + " --config " + cfg.string() + " --out-dir " + out.string();
            if (run_cli(args) != 0) return {false, sub + " failed"};
            const auto before = snapshot(out);
            if (run_cli(args) != 0) return {false, sub + " rerun failed"};
            if (snapshot(out) != before) diverged.push_back(sub + " (rerun)");
        }
        const auto fresh = snapshot(out);
        if (first_fresh.empty()) first_fresh = fresh;
        else if (fresh != first_fresh) diverged.push_back("fresh directory");
    }
    std::string detail = std::to_string(commands.size()) + " subcommands, " + std::to_string(first_fresh.size()) +
                         " artifacts";
    for (const auto& d : diverged) detail += "; differs: " + d;
    return {diverged.empty(), detail};
}

struct Criterion {
    int number;
    const char* name;
    std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all{
        {1, "conduction limit", conduction_limit},
        {2, "Poisson convergence", poisson_convergence},
        {3, "divergence-free steps", divergence_free},
        {4, "benchmark grid trend", benchmark_trend},
        {5, "Ra=1e6 max Nu direction", max_nu_direction},
        {6, "PCE exactness", pce_exactness},
        {7, "collocation error trend", collocation_trend},
        {8, "DNN gradient check", gradient_check},
        {9, "DNN metric fidelity", metric_fidelity},
        {10, "MC convergence", mc_convergence},
        {11, "case B smoke pipeline", case_b_smoke},
        {12, "reproducibility", reproducibility},
    };
    std::vector<int> selected;
    for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
    if (selected.empty())
        for (const auto& c : all) selected.push_back(c.number);

    bool ok = true;
    for (int n : selected) {
        const Criterion* c = nullptr;
        for (const auto& k : all)
            if (k.number == n) c = &k;
        if (!c) {
            std::cerr << "no criterion " << n << '\n';
            return 2;
        }
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c->run();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        ok = ok && o.pass;
        std::printf("criterion %2d %s  %s: %s [%.1f s]\n", n, o.pass ? "PASS" : "FAIL", c->name, o.detail.c_str(),
                    seconds_since(start));
        std::fflush(stdout);
    }
    return ok ? 0 : 1;
}
