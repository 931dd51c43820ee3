#include "convect_uq/uq.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "convect_uq/error.hpp"
#include "convect_uq/io.hpp"
#include "convect_uq/log.hpp"

namespace convect_uq {

namespace fs = std::filesystem;

namespace {

std::string join_path(const std::string& a, const std::string& b) { return (fs::path(a) / b).string(); }

std::string sample_dir_name(int id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "sample_%05d", id);
    return buf;
}

const char* status_name(SampleStatus s) {
    switch (s) {
    case SampleStatus::Pending: return "pending";
    case SampleStatus::Done: return "done";
    case SampleStatus::Failed: return "failed";
    }
    return "pending";
}

SampleStatus parse_status(const std::string& s) {
    if (s == "pending") return SampleStatus::Pending;
    if (s == "done") return SampleStatus::Done;
    if (s == "failed") return SampleStatus::Failed;
    throw FormatError("unknown sample status '" + s + "'");
}

std::string hex64(std::uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

double mean_abs(const Array2d& a) { return a.size() ? a.cwiseAbs().mean() : 0.0; }

Eigen::VectorXd flatten(const Array2d& a) { return Eigen::Map<const Eigen::VectorXd>(a.data(), a.size()); }

std::uint64_t ensemble_hash(CaseKind kind, const SampleMatrix& samples, const SolverConfig& s,
                            const BoundarySpec& bc, const StructuredGrid& grid) {
    std::ostringstream os;
    os << (kind == CaseKind::A ? "A" : "B") << ' ' << grid.n();
    for (double v : {s.ra, s.pr, s.dt, s.cfl_target, s.u_floor, s.steady_tol, s.poisson_tol, s.helmholtz_tol,
                     s.theta_ref, s.delta_theta, s.blowup_limit})
        os << ' ' << io::fmt17(v);
    os << ' ' << s.dt_update_interval << ' ' << s.max_steps << ' ' << s.gravity << ' ' << s.max_cg_iterations;
    os << " cold " << io::fmt17(bc.cold_wall_theta) << " hot";
    for (double t : bc.hot_strips) os << ' ' << io::fmt17(t);
    os << " samples " << samples.rows() << 'x' << samples.cols();
    for (Eigen::Index i = 0; i < samples.rows(); ++i)
        for (Eigen::Index j = 0; j < samples.cols(); ++j) os << ' ' << io::fmt17(samples.values(i, j));
    return io::fnv1a(os.str());
}

SampleOutputs reference_outputs(const EnsembleManifest& manifest, const std::string& dir) {
    if (manifest.rows.empty() || manifest.rows.front().status != SampleStatus::Done)
        throw EnsembleError("deterministic reference run in " + dir + " did not complete");
    const std::string sample_dir = join_path(dir, manifest.rows.front().output_dir);
    try {
        return read_sample_outputs(sample_dir);
    } catch (const std::exception& e) {
        throw MissingPrerequisiteError("reference outputs unreadable in " + sample_dir + ": " + e.what(), sample_dir);
    }
}

bool outputs_parse(const std::string& dir) {
    try {
        read_sample_outputs(dir);
        return true;
    } catch (const std::exception&) {
        return false;
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Specs

std::vector<NormalMarginal> CaseASpec::marginals() const {
    return {{mu_ra, ra_sigma_fraction * mu_ra}, {mu_pr, pr_sigma_fraction * mu_pr}};
}

void CaseASpec::validate() const {
    if (!(mu_ra > 0) || !(mu_pr > 0)) throw ConfigError("case_a: mean Ra and Pr must be positive");
    if (!(ra_sigma_fraction >= 0) || !(pr_sigma_fraction >= 0))
        throw ConfigError("case_a: sigma fractions must be non-negative");
    if (level < 1 || level > 64) throw ConfigError("case_a: level must lie in [1, 64]");
    if (pce_order() < 0) throw ConfigError("case_a: order must be non-negative");
    const long terms = static_cast<long>(make_basis(2, pce_order()).size());
    if (static_cast<long>(level) * level < terms)
        throw ConfigError("case_a: level^2 collocation points cannot determine an order " +
                          std::to_string(pce_order()) + " expansion");
    if (test_points < 1) throw ConfigError("case_a: test_points must be at least 1");
    if (mc_samples < 2) throw ConfigError("case_a: mc_samples must be at least 2");
    if (surface_resolution < 2) throw ConfigError("case_a: surface_resolution must be at least 2");
}

std::vector<NormalMarginal> CaseBSpec::marginals() const {
    return std::vector<NormalMarginal>(static_cast<std::size_t>(strips), NormalMarginal{mean, sigma});
}

void CaseBSpec::validate() const {
    if (!(ra > 0) || !(pr > 0)) throw ConfigError("case_b: Ra and Pr must be positive");
    if (strips < 1) throw ConfigError("case_b: strips must be at least 1");
    if (!std::isfinite(mean) || !(sigma >= 0) || !std::isfinite(sigma))
        throw ConfigError("case_b: strip mean must be finite and sigma non-negative");
    if (n_train < 2 || n_validation < 1 || n_test < 1)
        throw ConfigError("case_b: need at least 2 training, 1 validation and 1 test sample");
    if (train_seed == validation_seed || train_seed == test_seed || validation_seed == test_seed)
        throw ConfigError("case_b: training, validation and test seeds must be distinct");
    if (mc_samples < 2) throw ConfigError("case_b: mc_samples must be at least 2");
}

BoundarySpec make_strip_boundary(const std::vector<double>& temps, double cold) {
    if (temps.empty()) throw DomainError("strip boundary needs at least one strip");
    for (double t : temps)
        if (!std::isfinite(t)) throw DomainError("strip temperatures must be finite");
    return BoundarySpec::strips(temps, cold);
}

// ---------------------------------------------------------------------------
// Per-sample outputs

const Array2d& SampleOutputs::field(const std::string& quantity) const {
    if (quantity == "nu") return nu;
    if (quantity == "theta") return theta;
    if (quantity == "u") return u;
    if (quantity == "v") return v;
    throw DomainError("unknown output quantity '" + quantity + "'");
}

SampleOutputs extract_outputs(const FlowState& state, const BoundarySpec& bc, const StructuredGrid& grid,
                              const SteadyDiagnostics& diagnostics) {
    SampleOutputs out;
    out.nu = nusselt_field(state, bc, grid);
    out.theta = midplane_slice(state.theta, Axis::Z, 0.5);
    out.u = midplane_slice(state.velocity.u, Axis::Z, 0.5);
    out.v = midplane_slice(state.velocity.v, Axis::Z, 0.5);
    out.scalars.resize(6);
    out.scalars << mean_nusselt(out.nu, grid.h()), out.nu.maxCoeff(), mean_abs(out.u), out.u.cwiseAbs().maxCoeff(),
        mean_abs(out.v), out.v.cwiseAbs().maxCoeff();
    out.diagnostics = diagnostics;
    return out;
}

CaseSetup setup_for_sample(CaseKind kind, const Eigen::VectorXd& inputs, const SolverConfig& base_solver,
                           const BoundarySpec& base_boundary) {
    CaseSetup setup{base_solver, base_boundary};
    if (kind == CaseKind::A) {
        if (inputs.size() != 2) throw ShapeError("case A samples carry (Ra, Pr)");
        setup.solver.ra = inputs[0];
        setup.solver.pr = inputs[1];
    } else {
        setup.boundary = make_strip_boundary(std::vector<double>(inputs.data(), inputs.data() + inputs.size()),
                                             base_boundary.cold_wall_theta);
    }
    return setup;
}

SampleOutputs run_case(const CaseSetup& setup, const StructuredGrid& grid) {
    CavitySolver solver(grid, setup.solver, setup.boundary);
    FlowState state = solver.initial_state();
    const SteadyDiagnostics diag = solver.run_to_steady(state);
    if (!diag.converged)
        throw DivergenceError("no steady state within " + std::to_string(setup.solver.max_steps) + " steps",
                              "steady", diag.steps);
    return extract_outputs(state, setup.boundary, grid, diag);
}

void write_sample_outputs(const std::string& dir, const SampleOutputs& outputs) {
    write_array_csv(join_path(dir, "nu_hot.csv"), outputs.nu);
    write_array_csv(join_path(dir, "theta_mid.csv"), outputs.theta);
    write_array_csv(join_path(dir, "u_mid.csv"), outputs.u);
    write_array_csv(join_path(dir, "v_mid.csv"), outputs.v);
    std::ostringstream os;
    os << "name,value\n";
    for (std::size_t k = 0; k < scalar_output_names.size(); ++k)
        os << scalar_output_names[k] << ',' << io::fmt17(outputs.scalars[static_cast<Eigen::Index>(k)]) << '\n';
    io::write_file(join_path(dir, "scalars.csv"), os.str());
    io::write_file(join_path(dir, "diagnostics.json"), outputs.diagnostics.to_json() + "\n");
}

SampleOutputs read_sample_outputs(const std::string& dir) {
    SampleOutputs out;
    out.nu = read_array_csv(join_path(dir, "nu_hot.csv"));
    out.theta = read_array_csv(join_path(dir, "theta_mid.csv"));
    out.u = read_array_csv(join_path(dir, "u_mid.csv"));
    out.v = read_array_csv(join_path(dir, "v_mid.csv"));

    std::istringstream is(io::read_file(join_path(dir, "scalars.csv")));
    std::string line;
    if (!std::getline(is, line) || io::trim(line) != "name,value") throw FormatError(dir + ": bad scalars header");
    out.scalars.resize(static_cast<Eigen::Index>(scalar_output_names.size()));
    for (std::size_t k = 0; k < scalar_output_names.size(); ++k) {
        if (!std::getline(is, line)) throw FormatError(dir + ": truncated scalars.csv");
        const auto parts = io::split(io::trim(line), ',');
        if (parts.size() != 2 || parts[0] != scalar_output_names[k])
            throw FormatError(dir + ": unexpected scalar row '" + line + "'");
        out.scalars[static_cast<Eigen::Index>(k)] = io::parse_double(parts[1]);
    }

    try {
        const auto j = nlohmann::json::parse(io::read_file(join_path(dir, "diagnostics.json")));
        out.diagnostics.converged = j.at("converged").get<bool>();
        out.diagnostics.steps = j.at("steps").get<long>();
        for (const auto& [name, value] : j.at("errors_per_field").items())
            out.diagnostics.errors[name] = value.get<double>();
        out.diagnostics.max_divergence = j.at("max_divergence").get<double>();
        out.diagnostics.final_dt = j.at("final_dt").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(dir + ": bad diagnostics.json: " + e.what());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Manifest

std::vector<int> EnsembleManifest::done_ids() const {
    std::vector<int> ids;
    for (const auto& r : rows)
        if (r.status == SampleStatus::Done) ids.push_back(r.sample_id);
    return ids;
}

std::vector<int> EnsembleManifest::failed_ids() const {
    std::vector<int> ids;
    for (const auto& r : rows)
        if (r.status == SampleStatus::Failed) ids.push_back(r.sample_id);
    return ids;
}

void write_manifest(const std::string& path, const EnsembleManifest& manifest) {
    std::ostringstream os;
    os << "# convect_uq-manifest 1 seed=" << manifest.seed << " spec_hash=" << hex64(manifest.spec_hash) << '\n';
    const Eigen::Index d = manifest.rows.empty() ? 0 : manifest.rows.front().inputs.size();
    os << "sample_id";
    for (Eigen::Index j = 0; j < d; ++j) os << ",xi_" << j + 1;
    os << ",status,output_dir\n";
    for (const auto& r : manifest.rows) {
        if (r.inputs.size() != d) throw ShapeError("manifest rows differ in input dimension");
        os << r.sample_id;
        for (Eigen::Index j = 0; j < d; ++j) os << ',' << io::fmt17(r.inputs[j]);
        os << ',' << status_name(r.status) << ',' << r.output_dir << '\n';
    }
    io::write_file(path, os.str());
}

EnsembleManifest read_manifest(const std::string& path) {
    if (!io::file_exists(path)) throw MissingPrerequisiteError("missing ensemble manifest " + path, path);
    std::istringstream is(io::read_file(path));
    std::string line;
    EnsembleManifest m;
    if (!std::getline(is, line) || line.rfind("# convect_uq-manifest 1", 0) != 0)
        throw FormatError(path + ": not a manifest");
    for (const auto& tok : io::split(line.substr(std::string("# convect_uq-manifest 1").size()), ' ')) {
        if (tok.empty()) continue;
        const auto eq = tok.find('=');
        if (eq == std::string::npos) throw FormatError(path + ": bad metadata token '" + tok + "'");
        const std::string key = tok.substr(0, eq), value = tok.substr(eq + 1);
        if (key == "seed") m.seed = std::stoull(value);
        else if (key == "spec_hash") m.spec_hash = std::stoull(value, nullptr, 16);
        else throw FormatError(path + ": unknown metadata key '" + key + "'");
    }
    if (!std::getline(is, line)) throw FormatError(path + ": missing header");
    const auto header = io::split(io::trim(line), ',');
    if (header.size() < 3 || header.front() != "sample_id" || header[header.size() - 2] != "status" ||
        header.back() != "output_dir")
        throw FormatError(path + ": bad header");
    const std::size_t d = header.size() - 3;
    while (std::getline(is, line)) {
        if (io::trim(line).empty()) continue;
        const auto parts = io::split(io::trim(line), ',');
        if (parts.size() != d + 3) throw FormatError(path + ": bad row '" + line + "'");
        ManifestRow r;
        r.sample_id = static_cast<int>(io::parse_int(parts[0]));
        r.inputs.resize(static_cast<Eigen::Index>(d));
        for (std::size_t j = 0; j < d; ++j) r.inputs[static_cast<Eigen::Index>(j)] = io::parse_double(parts[1 + j]);
        r.status = parse_status(parts[d + 1]);
        r.output_dir = parts[d + 2];
        if (r.sample_id != static_cast<int>(m.rows.size()))
            throw FormatError(path + ": sample ids must be dense and ordered");
        m.rows.push_back(std::move(r));
    }
    return m;
}

// ---------------------------------------------------------------------------
// Ensemble execution

EnsembleManifest run_ensemble(CaseKind kind, const SampleMatrix& samples, const SolverConfig& solver,
                              const BoundarySpec& base_boundary, const StructuredGrid& grid, const std::string& dir,
                              const EnsembleOptions& options) {
    if (samples.rows() < 1) throw ShapeError("ensemble needs at least one sample");
    if (kind == CaseKind::A && samples.cols() != 2) throw ShapeError("case A samples must have two columns");
    if (kind == CaseKind::B && samples.cols() < 1) throw ShapeError("case B samples need one column per strip");
    if (kind == CaseKind::B && samples.cols() > grid.n())
        throw ShapeError("more strips than cell layers along the hot wall");
    solver.validate();

    const std::string manifest_path = join_path(dir, "manifest.csv");
    EnsembleManifest manifest;
    manifest.seed = samples.seed;
    manifest.spec_hash = ensemble_hash(kind, samples, solver, base_boundary, grid);
    for (Eigen::Index i = 0; i < samples.rows(); ++i)
        manifest.rows.push_back(
            {static_cast<int>(i), samples.values.row(i).transpose(), SampleStatus::Pending,
             sample_dir_name(static_cast<int>(i))});

    if (io::file_exists(manifest_path)) {
        try {
            const auto old = read_manifest(manifest_path);
            if (old.spec_hash == manifest.spec_hash && old.rows.size() == manifest.rows.size()) {
                for (std::size_t i = 0; i < old.rows.size(); ++i)
                    if (old.rows[i].status == SampleStatus::Done &&
                        outputs_parse(join_path(dir, old.rows[i].output_dir)))
                        manifest.rows[i].status = SampleStatus::Done;
            } else {
                logger().info("ensemble {}: specification changed, starting afresh", dir);
            }
        } catch (const FormatError& e) {
            logger().warn("ensemble {}: ignoring unreadable manifest ({})", dir, e.what());
        }
    }

    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < manifest.rows.size(); ++i)
        if (manifest.rows[i].status != SampleStatus::Done) todo.push_back(i);
    logger().info("ensemble {}: {} of {} samples to run", dir, todo.size(), manifest.rows.size());
    write_manifest(manifest_path, manifest);

    std::mutex writer;
    std::atomic<std::size_t> next{0};
    std::exception_ptr fatal;
    auto worker = [&]() {
        for (;;) {
            const std::size_t t = next.fetch_add(1);
            if (t >= todo.size()) return;
            const std::size_t i = todo[t];
            ManifestRow row;
            {
                std::lock_guard lock(writer);
                if (fatal) return;
                row = manifest.rows[i];
            }
            SampleStatus status = SampleStatus::Done;
            try {
                const auto setup = setup_for_sample(kind, row.inputs, solver, base_boundary);
                const auto outputs = run_case(setup, grid);
                write_sample_outputs(join_path(dir, row.output_dir), outputs);
            } catch (const DivergenceError& e) {
                logger().warn("ensemble {}: sample {} failed: {}", dir, row.sample_id, e.what());
                status = SampleStatus::Failed;
            } catch (const LinearSolverError& e) {
                logger().warn("ensemble {}: sample {} failed: {}", dir, row.sample_id, e.what());
                status = SampleStatus::Failed;
            } catch (...) {
                std::lock_guard lock(writer);
                if (!fatal) fatal = std::current_exception();
                return;
            }
            std::lock_guard lock(writer);
            manifest.rows[i].status = status;
            write_manifest(manifest_path, manifest);
        }
    };
    const int workers = std::max(1, std::min<int>(options.workers, static_cast<int>(todo.size())));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (fatal) std::rethrow_exception(fatal);

    const auto failed = manifest.failed_ids();
    if (static_cast<double>(failed.size()) > options.max_failure_fraction * static_cast<double>(manifest.rows.size()))
        throw EnsembleError("ensemble " + dir + ": " + std::to_string(failed.size()) + " of " +
                            std::to_string(manifest.rows.size()) + " samples failed");
    return manifest;
}

EnsembleData gather_outputs(const EnsembleManifest& manifest, const std::string& dir, const std::string& quantity) {
    EnsembleData data;
    std::vector<Eigen::VectorXd> rows;
    std::vector<Eigen::VectorXd> inputs;
    for (const auto& r : manifest.rows) {
        if (r.status != SampleStatus::Done) {
            data.excluded.push_back(r.sample_id);
            continue;
        }
        const std::string sample_dir = join_path(dir, r.output_dir);
        SampleOutputs out;
        try {
            out = read_sample_outputs(sample_dir);
        } catch (const std::exception& e) {
            throw MissingPrerequisiteError("sample outputs unreadable in " + sample_dir + ": " + e.what(),
                                           sample_dir);
        }
        rows.push_back(quantity == "scalars" ? out.scalars : flatten(out.field(quantity)));
        inputs.push_back(r.inputs);
        data.sample_ids.push_back(r.sample_id);
    }
    if (rows.empty()) throw EnsembleError("ensemble " + dir + " has no completed samples");
    data.outputs.resize(static_cast<Eigen::Index>(rows.size()), rows.front().size());
    data.inputs.resize(static_cast<Eigen::Index>(rows.size()), inputs.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != data.outputs.cols()) throw ShapeError("sample outputs differ in size in " + dir);
        data.outputs.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
        data.inputs.row(static_cast<Eigen::Index>(i)) = inputs[i].transpose();
    }
    return data;
}

// ---------------------------------------------------------------------------
// Statistics

RunningMoments::RunningMoments(Eigen::Index size)
    : mean_(Eigen::VectorXd::Zero(size)), m2_(Eigen::VectorXd::Zero(size)) {}

void RunningMoments::add(const Eigen::Ref<const Eigen::VectorXd>& x) {
    if (count_ == 0 && mean_.size() == 0) {
        mean_ = Eigen::VectorXd::Zero(x.size());
        m2_ = Eigen::VectorXd::Zero(x.size());
    }
    if (x.size() != mean_.size()) throw ShapeError("sample length changed during accumulation");
    ++count_;
    const Eigen::VectorXd delta = x - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_ += delta.cwiseProduct(x - mean_);
}

Eigen::VectorXd RunningMoments::variance() const {
    if (count_ < 2) throw DomainError("variance needs at least two samples");
    return m2_ / static_cast<double>(count_ - 1);
}

MonteCarloMoments monte_carlo_stats(const Surrogate& surrogate, const std::vector<NormalMarginal>& marginals, long n,
                                    std::uint64_t seed, long chunk) {
    if (n < 2) throw DomainError("Monte Carlo needs at least two samples");
    if (n > std::numeric_limits<int>::max()) throw SizeError("too many Monte Carlo samples");
    if (chunk < 1) chunk = n;
    const SampleMatrix draws = normal_samples(static_cast<int>(n), marginals, seed);
    RunningMoments acc;
    for (long start = 0; start < n; start += chunk) {
        const long len = std::min(chunk, n - start);
        const Eigen::MatrixXd y = surrogate(draws.values.middleRows(start, len));
        if (y.rows() != len) throw ShapeError("surrogate must return one row per input row");
        for (Eigen::Index r = 0; r < y.rows(); ++r) acc.add(y.row(r).transpose());
    }
    MonteCarloMoments out;
    out.mean = acc.mean();
    out.stddev = acc.variance().cwiseMax(0.0).cwiseSqrt();
    out.samples = n;
    return out;
}

MeanShift shift_of_mean(const Eigen::VectorXd& stochastic_mean, const Eigen::VectorXd& deterministic) {
    if (stochastic_mean.size() != deterministic.size()) throw ShapeError("mean and deterministic fields differ in size");
    const double scale = deterministic.size() ? deterministic.cwiseAbs().maxCoeff() : 0.0;
    if (!(scale > 0.0)) throw UndefinedMetricError("relative shift of mean undefined for a zero deterministic field");
    MeanShift out;
    out.difference = stochastic_mean - deterministic;
    out.relative_shift_percent = 100.0 * out.difference.cwiseAbs().maxCoeff() / scale;
    return out;
}

Array2d StatField::as_array(const Eigen::VectorXd& flat) const {
    if (flat.size() != rows * cols) throw ShapeError("flat field does not match the stat field shape");
    return Eigen::Map<const Array2d>(flat.data(), rows, cols);
}

StatField make_stat_field(const std::string& quantity, Eigen::Index rows, Eigen::Index cols,
                          const MonteCarloMoments& moments, const Eigen::VectorXd& deterministic) {
    if (moments.mean.size() != rows * cols || deterministic.size() != rows * cols)
        throw ShapeError("stat field '" + quantity + "' has inconsistent sizes");
    StatField f;
    f.quantity = quantity;
    f.rows = rows;
    f.cols = cols;
    f.mean = moments.mean;
    f.stddev = moments.stddev;
    f.deterministic = deterministic;
    const MeanShift shift = shift_of_mean(moments.mean, deterministic);
    f.difference = shift.difference;
    f.relative_shift_percent = shift.relative_shift_percent;
    f.ratio = Eigen::VectorXd::Zero(f.mean.size());
    for (Eigen::Index i = 0; i < f.mean.size(); ++i)
        if (f.mean[i] != 0.0) f.ratio[i] = f.stddev[i] / std::abs(f.mean[i]);
    f.max_std = f.stddev.size() ? f.stddev.maxCoeff() : 0.0;
    f.max_abs_difference = f.difference.size() ? f.difference.cwiseAbs().maxCoeff() : 0.0;
    return f;
}

const StatField& StatFields::get(const std::string& quantity) const {
    for (const auto& f : fields)
        if (f.quantity == quantity) return f;
    throw DomainError("no statistics for quantity '" + quantity + "'");
}

void write_stat_fields(const std::string& dir, const StatFields& stats) {
    nlohmann::ordered_json summary = nlohmann::ordered_json::object();
    for (const auto& f : stats.fields) {
        write_array_csv(join_path(dir, f.quantity + "_mean.csv"), f.as_array(f.mean));
        write_array_csv(join_path(dir, f.quantity + "_std.csv"), f.as_array(f.stddev));
        write_array_csv(join_path(dir, f.quantity + "_deterministic.csv"), f.as_array(f.deterministic));
        write_array_csv(join_path(dir, f.quantity + "_difference.csv"), f.as_array(f.difference));
        write_array_csv(join_path(dir, f.quantity + "_ratio.csv"), f.as_array(f.ratio));
        summary[f.quantity] = {{"relative_shift_percent", f.relative_shift_percent},
                               {"max_std", f.max_std},
                               {"max_abs_difference", f.max_abs_difference}};
    }
    io::write_file(join_path(dir, "summary.json"), summary.dump() + "\n");
}

double strip_structure_ratio(const Array2d& field, int strips) {
    if (strips < 2) throw DomainError("strip structure needs at least two strips");
    const Eigen::Index n = field.rows();
    if (n < strips) throw ShapeError("fewer rows than strips");
    const BoundarySpec bands = BoundarySpec::strips(std::vector<double>(static_cast<std::size_t>(strips), 0.0));
    std::vector<RunningMoments> per_band(static_cast<std::size_t>(strips), RunningMoments(1));
    for (Eigen::Index j = 0; j < n; ++j) {
        const int s = bands.strip_index((static_cast<double>(j) + 0.5) / static_cast<double>(n));
        for (Eigen::Index k = 0; k < field.cols(); ++k)
            per_band[static_cast<std::size_t>(s)].add(Eigen::VectorXd::Constant(1, std::abs(field(j, k))));
    }
    Eigen::VectorXd means(strips);
    double within = 0.0;
    for (int s = 0; s < strips; ++s) {
        const auto& b = per_band[static_cast<std::size_t>(s)];
        means[s] = b.mean()[0];
        within += b.count() > 1 ? b.variance()[0] * (b.count() - 1) / b.count() : 0.0;
    }
    within /= strips;
    const double between = (means.array() - means.mean()).square().mean();
    if (within == 0.0) return between > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    return between / within;
}

// ---------------------------------------------------------------------------
// Case A

namespace {

CaseAEnsembles case_a_dirs(const CaseASpec& spec, const std::string& root) {
    CaseAEnsembles e;
    e.train_dir = join_path(root, "case_a/train_level" + std::to_string(spec.level));
    e.test_dir = join_path(root, "case_a/test");
    e.reference_dir = join_path(root, "case_a/reference");
    return e;
}

CaseBEnsembles case_b_dirs(const std::string& root) {
    CaseBEnsembles e;
    e.train_dir = join_path(root, "case_b/train");
    e.validation_dir = join_path(root, "case_b/validation");
    e.test_dir = join_path(root, "case_b/test");
    e.reference_dir = join_path(root, "case_b/reference");
    return e;
}

}  // namespace

CaseAEnsembles load_case_a_ensembles(const CaseASpec& spec, const std::string& root) {
    CaseAEnsembles e = case_a_dirs(spec, root);
    e.train = read_manifest(join_path(e.train_dir, "manifest.csv"));
    e.test = read_manifest(join_path(e.test_dir, "manifest.csv"));
    e.reference = read_manifest(join_path(e.reference_dir, "manifest.csv"));
    return e;
}

CaseBEnsembles load_case_b_ensembles(const std::string& root) {
    CaseBEnsembles e = case_b_dirs(root);
    e.train = read_manifest(join_path(e.train_dir, "manifest.csv"));
    e.validation = read_manifest(join_path(e.validation_dir, "manifest.csv"));
    e.test = read_manifest(join_path(e.test_dir, "manifest.csv"));
    e.reference = read_manifest(join_path(e.reference_dir, "manifest.csv"));
    return e;
}

CaseAEnsembles run_case_a_ensembles(const CaseASpec& spec, const SolverConfig& solver, const BoundarySpec& boundary,
                                    const StructuredGrid& grid, const std::string& root,
                                    const EnsembleOptions& options) {
    spec.validate();
    const auto marg = spec.marginals();
    CaseAEnsembles e = case_a_dirs(spec, root);

    const SampleMatrix train = tensor_grid(spec.level, 2, {marg[0].mean, marg[1].mean},
                                           {marg[0].stddev, marg[1].stddev});
    const SampleMatrix test = to_normal(latin_hypercube(spec.test_points, 2, spec.test_seed), marg);
    SampleMatrix reference;
    reference.values = Eigen::MatrixXd(1, 2);
    reference.values << marg[0].mean, marg[1].mean;
    reference.marginals = marg;
    reference.kind = "reference";

    e.train = run_ensemble(CaseKind::A, train, solver, boundary, grid, e.train_dir, options);
    e.test = run_ensemble(CaseKind::A, test, solver, boundary, grid, e.test_dir, options);
    e.reference = run_ensemble(CaseKind::A, reference, solver, boundary, grid, e.reference_dir, options);
    return e;
}

Eigen::VectorXd normalized_rms_error(const PceModel& scalars, const EnsembleData& test) {
    const Eigen::MatrixXd pred = scalars.predict_rows(test.inputs);
    if (pred.cols() != test.outputs.cols()) throw ShapeError("model and test outputs differ in count");
    Eigen::VectorXd err(pred.cols());
    for (Eigen::Index k = 0; k < pred.cols(); ++k) {
        const double scale = test.outputs.col(k).cwiseAbs().maxCoeff();
        if (!(scale > 0.0)) throw UndefinedMetricError("normalised error undefined for an all-zero output");
        const double rms = std::sqrt((pred.col(k) - test.outputs.col(k)).squaredNorm() / pred.rows());
        err[k] = rms / scale;
    }
    return err;
}

CaseAFit fit_case_a(const CaseASpec& spec, const CaseAEnsembles& ensembles) {
    spec.validate();
    const PceBasis basis = make_basis(2, spec.pce_order());
    CaseAFit fit;
    std::vector<std::string> quantities{"scalars"};
    quantities.insert(quantities.end(), field_quantities.begin(), field_quantities.end());
    for (const auto& q : quantities) {
        const EnsembleData data = gather_outputs(ensembles.train, ensembles.train_dir, q);
        SampleMatrix sm;
        sm.values = data.inputs;
        sm.marginals = spec.marginals();
        sm.seed = ensembles.train.seed;
        sm.kind = "tensor";
        fit.models.emplace(q, fit_collocation(sm, data.outputs, basis));
    }
    const EnsembleData test = gather_outputs(ensembles.test, ensembles.test_dir, "scalars");
    fit.test_error = normalized_rms_error(fit.models.at("scalars"), test);
    return fit;
}

SobolTable sobol_table(const PceModel& scalars, const std::vector<std::string>& input_names) {
    if (static_cast<int>(input_names.size()) != scalars.basis.dims)
        throw ShapeError("one name per input dimension required");
    SobolTable t;
    t.inputs = input_names;
    for (Eigen::Index k = 0; k < scalars.outputs(); ++k)
        t.outputs.push_back(static_cast<std::size_t>(k) < scalar_output_names.size() &&
                                    scalars.outputs() == static_cast<Eigen::Index>(scalar_output_names.size())
                                ? scalar_output_names[static_cast<std::size_t>(k)]
                                : "output_" + std::to_string(k + 1));
    t.total.resize(scalars.outputs(), scalars.basis.dims);
    for (int d = 0; d < scalars.basis.dims; ++d) t.total.col(d) = total_sobol(scalars, d);
    return t;
}

CaseAPropagation propagate_case_a(const CaseASpec& spec, const CaseAFit& fit, const CaseAEnsembles& ensembles) {
    CaseAPropagation out;
    const SampleOutputs ref = reference_outputs(ensembles.reference, ensembles.reference_dir);
    const auto marg = spec.marginals();
    auto stats_for = [&](const std::string& q, Eigen::Index rows, Eigen::Index cols, const Eigen::VectorXd& det) {
        const PceModel& model = fit.models.at(q);
        const auto mc = monte_carlo_stats([&](const Eigen::MatrixXd& x) { return model.predict_rows(x); }, marg,
                                          spec.mc_samples, spec.mc_seed);
        return make_stat_field(q, rows, cols, mc, det);
    };
    for (const auto& q : field_quantities) {
        const Array2d& f = ref.field(q);
        out.stats.fields.push_back(stats_for(q, f.rows(), f.cols(), flatten(f)));
    }
    out.stats.fields.push_back(stats_for("scalars", ref.scalars.size(), 1, ref.scalars));
    out.scalar_moments = moments(fit.models.at("scalars"));
    try {
        out.sobol = sobol_table(fit.models.at("scalars"), {"ra", "pr"});
    } catch (const UndefinedSensitivityError& e) {
        logger().warn("case A: Sobol indices undefined ({})", e.what());
    }
    out.mean_nu_surface = response_surface(fit.models.at("scalars"), 0, spec.surface_resolution);
    return out;
}

CaseAResult case_a_pipeline(const CaseASpec& spec, const SolverConfig& solver, const BoundarySpec& boundary,
                            const StructuredGrid& grid, const std::string& root, const EnsembleOptions& options) {
    CaseAResult r;
    r.ensembles = run_case_a_ensembles(spec, solver, boundary, grid, root, options);
    r.fit = fit_case_a(spec, r.ensembles);
    r.propagation = propagate_case_a(spec, r.fit, r.ensembles);
    return r;
}

// ---------------------------------------------------------------------------
// Case B

CaseBEnsembles run_case_b_ensembles(const CaseBSpec& spec, const SolverConfig& solver, const BoundarySpec& boundary,
                                    const StructuredGrid& grid, const std::string& root,
                                    const EnsembleOptions& options) {
    spec.validate();
    SolverConfig s = solver;
    s.ra = spec.ra;
    s.pr = spec.pr;
    const auto marg = spec.marginals();
    CaseBEnsembles e = case_b_dirs(root);

    SampleMatrix reference;
    reference.values = Eigen::MatrixXd::Constant(1, spec.strips, spec.mean);
    reference.marginals = marg;
    reference.kind = "reference";

    e.train = run_ensemble(CaseKind::B, to_normal(latin_hypercube(spec.n_train, spec.strips, spec.train_seed), marg),
                           s, boundary, grid, e.train_dir, options);
    e.validation = run_ensemble(CaseKind::B,
                                to_normal(latin_hypercube(spec.n_validation, spec.strips, spec.validation_seed), marg),
                                s, boundary, grid, e.validation_dir, options);
    e.test = run_ensemble(CaseKind::B, to_normal(latin_hypercube(spec.n_test, spec.strips, spec.test_seed), marg), s,
                          boundary, grid, e.test_dir, options);
    e.reference = run_ensemble(CaseKind::B, reference, s, boundary, grid, e.reference_dir, options);
    return e;
}

CaseBTraining train_case_b(const CaseBSpec& spec, const CaseBEnsembles& ensembles, const std::string& preset,
                           const TrainConfig& base) {
    spec.validate();
    CaseBTraining out;
    for (const auto& q : field_quantities) {
        const EnsembleData train_data = gather_outputs(ensembles.train, ensembles.train_dir, q);
        const EnsembleData val_data = gather_outputs(ensembles.validation, ensembles.validation_dir, q);
        const EnsembleData test_data = gather_outputs(ensembles.test, ensembles.test_dir, q);
        if (!train_data.excluded.empty())
            logger().warn("case B {}: {} failed training samples excluded", q, train_data.excluded.size());

        const NetworkPreset p = network_preset(q, preset);
        std::vector<int> sizes{static_cast<int>(train_data.inputs.cols())};
        for (int l = 0; l < p.hidden_layers; ++l) sizes.push_back(p.width);
        sizes.push_back(static_cast<int>(train_data.outputs.cols()));
        MlpNetwork net = make_network(sizes, base.seed);
        net.input_scaling = Standardizer<double>::fit(train_data.inputs);
        net.output_scaling = Standardizer<double>::fit(train_data.outputs);

        const Dataset train_set{net.input_scaling.apply(train_data.inputs),
                                net.output_scaling.apply(train_data.outputs)};
        const Dataset val_set{net.input_scaling.apply(val_data.inputs), net.output_scaling.apply(val_data.outputs)};
        TrainConfig cfg = base;
        cfg.lambda = p.lambda;
        TrainResult result = train(std::move(net), train_set, val_set, cfg);

        const double train_err = relative_average_percent_error(train_data.outputs,
                                                                predict(result.network, train_data.inputs));
        const double test_err = relative_average_percent_error(test_data.outputs,
                                                               predict(result.network, test_data.inputs));
        out.errors[q] = {train_err, test_err};
        if (test_err > 5.0 * train_err) {
            out.warnings.push_back("overfit: " + q + " test error " + io::fmt17(test_err) +
                                   "% exceeds five times the training error " + io::fmt17(train_err) + "%");
            logger().warn("case B: {}", out.warnings.back());
        }
        out.histories.emplace(q, std::move(result.history));
        out.networks.emplace(q, std::move(result.network));
    }
    return out;
}

StatFields propagate_case_b(const CaseBSpec& spec, const std::map<std::string, MlpNetwork>& networks,
                            const CaseBEnsembles& ensembles) {
    spec.validate();
    const SampleOutputs ref = reference_outputs(ensembles.reference, ensembles.reference_dir);
    StatFields stats;
    for (const auto& q : field_quantities) {
        const auto it = networks.find(q);
        if (it == networks.end()) throw DomainError("no trained network for '" + q + "'");
        const MlpNetwork& net = it->second;
        const auto mc = monte_carlo_stats([&](const Eigen::MatrixXd& x) { return predict(net, x); }, spec.marginals(),
                                          spec.mc_samples, spec.mc_seed);
        const Array2d& f = ref.field(q);
        stats.fields.push_back(make_stat_field(q, f.rows(), f.cols(), mc, flatten(f)));
    }
    return stats;
}

CaseBResult case_b_pipeline(const CaseBSpec& spec, const SolverConfig& solver, const BoundarySpec& boundary,
                            const StructuredGrid& grid, const std::string& root, const std::string& preset,
                            const TrainConfig& train_config, const EnsembleOptions& options) {
    CaseBResult r;
    r.ensembles = run_case_b_ensembles(spec, solver, boundary, grid, root, options);
    r.training = train_case_b(spec, r.ensembles, preset, train_config);
    r.stats = propagate_case_b(spec, r.training.networks, r.ensembles);
    return r;
}

}  // namespace convect_uq
