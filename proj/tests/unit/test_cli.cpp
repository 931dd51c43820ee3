#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "convect_uq/pce.hpp"

#ifndef CONVECT_UQ_CLI
#error "CONVECT_UQ_CLI must name the command-line binary"
#endif

using namespace convect_uq;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out;
};

Run run(const std::string& args) {
    const std::string cmd = std::string(CONVECT_UQ_CLI) + " " + args + " 2>/dev/null";
    Run r;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    char buf[4096];
    std::size_t got;
    while ((got = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, got);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

struct Workspace {
    fs::path root;

    explicit Workspace(const std::string& name) : root(fs::temp_directory_path() / ("convect_uq_cli_" + name)) {
        fs::remove_all(root);
        fs::create_directories(root);
    }

    /// Writes an INI file whose [output] dir points into the workspace.
    std::string config(const std::string& body, const std::string& file = "run.ini") const {
        const fs::path p = root / file;
        std::ofstream(p) << body << "\n[output]\ndir = " << (root / "out").string() << '\n';
        return p.string();
    }
};

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

const char* conduction = "[grid]\nn = 8\nsizes = 8, 12, 16\n[solver]\ngravity = false\nsteady_tol = 1e-9\n";

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("simulate conduction") {
    Workspace w("simulate");
    const auto r = run("simulate --config " + w.config(conduction));
    CHECK(r.code == 0);
    CHECK(r.out.find("mean Nu: 1.000") != std::string::npos);
    CHECK(r.out.find("converged: yes") != std::string::npos);
    for (const char* f : {"theta.csv", "u.csv", "pressure.csv", "nu_hot.csv", "diagnostics.json", "centerlines.csv"})
        CHECK(fs::exists(w.root / "out/simulate" / f));
}

TEST_CASE("simulate reports non-convergence") {
    Workspace w("simulate_cap");
    const auto r = run("simulate --config " + w.config("[grid]\nn = 8\n[solver]\nmax_steps = 1\n"));
    CHECK(r.code == 2);
    CHECK(r.out.find("converged: no") != std::string::npos);
}

TEST_CASE("configuration errors exit with code 1") {
    Workspace w("bad_config");
    CHECK(run("simulate --config " + w.config("[grid]\nn = 8\n")).code == 1);
    CHECK(run("simulate --config " + w.config("[solver]\nbogus = 1\n")).code == 1);
    CHECK(run("simulate --config " + (w.root / "absent.ini").string()).code == 1);
    CHECK(run("simulate").code == 1);
    CHECK(run("nonsense --config x").code == 1);
}

TEST_CASE("verify conduction is exact") {
    Workspace w("verify");
    const auto r = run("verify --config " + w.config(conduction));
    CHECK(r.code == 0);
    CHECK(r.out.find("observed order: exact") != std::string::npos);
    CHECK(r.out.find("extrapolated mean Nu: 1.000") != std::string::npos);

    const auto single = run("verify --config " + w.config("[grid]\nsizes = 8\n[solver]\n", "single.ini"));
    CHECK(single.code == 1);
}

TEST_CASE("fitting before the ensemble is a missing prerequisite") {
    Workspace w("fit_first");
    CHECK(run("fit-pce --config " + w.config("[case_a]\nlevel = 2\n")).code == 3);
    CHECK(run("train-dnn --config " + w.config("[case_b]\n", "b.ini")).code == 3);
    CHECK(run("propagate --config " + w.config("[case_a]\nlevel = 2\n", "p.ini")).code == 3);
}

TEST_CASE("sobol of a model file") {
    Workspace w("sobol");
    // y = xi_1 + xi_1 xi_2 in standard coordinates
    PceModel m;
    m.basis = make_basis(2, 2);
    m.standardization = {{0.0, 1.0}, {0.0, 1.0}};
    m.coefficients = Eigen::MatrixXd::Zero(m.basis.size(), 1);
    m.report.relative_rms_residual = Eigen::VectorXd::Zero(1);
    for (Eigen::Index t = 0; t < m.basis.size(); ++t) {
        const auto& a = m.basis.terms[static_cast<std::size_t>(t)];
        if (a[0] == 1 && a[1] == 0) m.coefficients(t, 0) = 1.0;
        if (a[0] == 1 && a[1] == 1) m.coefficients(t, 0) = 1.0;
    }
    const std::string model = (w.root / "fixture.pce").string();
    write_pce_model(model, m);
    const auto r = run("sobol --config " + w.config("[pce]\nmodel = " + model + "\n"));
    CHECK(r.code == 0);
    CHECK(r.out.find("output_1      1.0000   0.5000") != std::string::npos);
    CHECK(fs::exists(w.root / "out/sobol/total_sobol.csv"));
}

TEST_CASE("help lists the configuration keys") {
    const auto r = run("--help");
    CHECK(r.code == 0);
    for (const char* k : {"[solver]", "steady_tol", "[case_b]", "n_train", "[dnn]", "amsgrad"})
        CHECK(r.out.find(k) != std::string::npos);
}

TEST_CASE("case A pipeline through the command line is reproducible") {
    const std::string body =
        "[grid]\nn = 8\n[solver]\nsteady_tol = 1e-5\n[case_a]\nlevel = 2\ntest_points = 2\nmc_samples = 2\n"
        "surface_resolution = 3\n";
    std::string first;
    for (const char* name : {"pipeline_a", "pipeline_b"}) {
        Workspace w(name);
        const std::string cfg = w.config(body);
        CHECK(run("ensemble --config " + cfg).code == 0);
        CHECK(run("fit-pce --config " + cfg).code == 0);
        const auto p = run("propagate --config " + cfg);
        CHECK(p.code == 0);
        CHECK(p.out.find("case A (2 surrogate samples)") != std::string::npos);
        CHECK(run("sobol --config " + cfg).code == 0);
        std::map<std::string, std::string> files;
        for (const auto& e : fs::recursive_directory_iterator(w.root / "out"))
            if (e.is_regular_file()) files[fs::relative(e.path(), w.root).string()] = slurp(e.path());
        std::string all;
        for (const auto& [name, bytes] : files) all += name + "\n" + bytes;
        if (first.empty()) first = all;
        else CHECK(all == first);
    }
}

}
