#include "convect_uq/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "convect_uq/error.hpp"
#include "convect_uq/io.hpp"
#include "convect_uq/log.hpp"

namespace convect_uq {

namespace {

constexpr WallTypes theta_walls{WallType::Dirichlet, WallType::Dirichlet, WallType::Neumann,
                                WallType::Neumann,   WallType::Neumann,   WallType::Neumann};

double relative_change(const Eigen::VectorXd& now, const Eigen::VectorXd& before) {
    const double diff = (now - before).cwiseAbs().maxCoeff();
    const double scale = now.cwiseAbs().maxCoeff();
    if (diff == 0.0) return 0.0;
    if (scale == 0.0) return std::numeric_limits<double>::infinity();
    return diff / scale;
}

SparseMatrix helmholtz(const SparseMatrix& laplacian, double coefficient) {
    SparseMatrix identity(laplacian.rows(), laplacian.cols());
    identity.setIdentity();
    SparseMatrix out = identity - coefficient * laplacian;
    out.makeCompressed();
    return out;
}

}  // namespace

double SolverConfig::viscosity() const { return pr / std::sqrt(ra); }
double SolverConfig::diffusivity() const { return 1.0 / std::sqrt(ra); }
double SolverConfig::buoyancy_coefficient() const { return gravity ? pr / delta_theta : 0.0; }

void SolverConfig::validate() const {
    if (!(ra > 0.0) || !std::isfinite(ra)) throw DomainError("Ra must be positive");
    if (!(pr > 0.0) || !std::isfinite(pr)) throw DomainError("Pr must be positive");
    if (dt < 0.0 || !std::isfinite(dt)) throw DomainError("dt must be positive (or 0 for CFL control)");
    if (dt == 0.0 && !(cfl_target > 0.0)) throw DomainError("cfl_target must be positive");
    if (!(u_floor > 0.0)) throw DomainError("u_floor must be positive");
    if (dt_update_interval < 1) throw DomainError("dt_update_interval must be >= 1");
    if (!(steady_tol > 0.0)) throw DomainError("steady_tol must be positive");
    if (max_steps < 1) throw DomainError("max_steps must be >= 1");
    if (!(poisson_tol > 0.0) || !(helmholtz_tol > 0.0)) throw DomainError("solver tolerances must be positive");
    if (!(delta_theta > 0.0)) throw DomainError("delta_theta must be positive");
}

BoundarySpec BoundarySpec::uniform(double hot, double cold) {
    BoundarySpec bc;
    bc.cold_wall_theta = cold;
    bc.hot_strips = {hot};
    return bc;
}

BoundarySpec BoundarySpec::strips(std::vector<double> temps, double cold) {
    BoundarySpec bc;
    bc.cold_wall_theta = cold;
    bc.hot_strips = std::move(temps);
    bc.validate();
    return bc;
}

int BoundarySpec::strip_index(double y) const {
    const int k = strip_count();
    const int s = static_cast<int>(std::floor(y * k));
    return std::clamp(s, 0, k - 1);
}

double BoundarySpec::hot_wall_mean() const {
    double sum = 0.0;
    for (double t : hot_strips) sum += t;
    return sum / static_cast<double>(hot_strips.size());
}

void BoundarySpec::validate() const {
    if (hot_strips.empty()) throw DomainError("hot wall needs at least one strip");
    if (!std::isfinite(cold_wall_theta)) throw DomainError("cold wall temperature must be finite");
    for (double t : hot_strips)
        if (!std::isfinite(t)) throw DomainError("strip temperatures must be finite");
}

FaceVelocities::FaceVelocities(int n_cells)
    : n(n_cells),
      x(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_cells + 1) * n_cells * n_cells)),
      y(Eigen::VectorXd::Zero(x.size())),
      z(Eigen::VectorXd::Zero(x.size())) {}

Eigen::Index FaceVelocities::index(int i, int j, int k, int axis) const {
    const Eigen::Index nn = n;
    switch (axis) {
    case 0: return i + (nn + 1) * (j + nn * k);
    case 1: return i + nn * (j + (nn + 1) * k);
    default: return i + nn * (j + nn * k);
    }
}

double& FaceVelocities::at(int axis, int i, int j, int k) {
    auto& v = axis == 0 ? x : (axis == 1 ? y : z);
    return v[index(i, j, k, axis)];
}

double FaceVelocities::at(int axis, int i, int j, int k) const {
    const auto& v = axis == 0 ? x : (axis == 1 ? y : z);
    return v[index(i, j, k, axis)];
}

FlowState::FlowState(const StructuredGrid& grid)
    : velocity(grid),
      theta(grid),
      phi(grid),
      faces(grid.n()),
      prev_convection(grid),
      prev_theta_convection(grid) {}

std::string SteadyDiagnostics::to_json() const {
    std::ostringstream os;
    os << "{\"converged\": " << (converged ? "true" : "false") << ", \"steps\": " << steps
       << ", \"errors_per_field\": {";
    bool first = true;
    for (const auto& [name, value] : errors) {
        if (!first) os << ", ";
        first = false;
        os << '"' << name << "\": " << io::fmt17(value);
    }
    os << "}, \"max_divergence\": " << io::fmt17(max_divergence)
       << ", \"final_dt\": " << io::fmt17(final_dt) << "}";
    return os.str();
}

CavitySolver::CavitySolver(const StructuredGrid& grid, SolverConfig config, BoundarySpec bc)
    : grid_(grid),
      config_(std::move(config)),
      bc_(std::move(bc)),
      poisson_(grid, config_.max_cg_iterations),
      velocity_laplacian_(laplacian_matrix(grid, all_dirichlet)),
      theta_laplacian_(laplacian_matrix(grid, theta_walls)),
      theta_wall_source_(Eigen::VectorXd::Zero(grid.cells())) {
    config_.validate();
    bc_.validate();
    if (bc_.strip_count() > grid_.n())
        throw DomainError("more hot-wall strips than cells along y");
    const int n = grid_.n();
    const double inv_h2 = 1.0 / (grid_.h() * grid_.h());
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j) {
            theta_wall_source_[grid_.index(0, j, k)] += 2.0 * bc_.cold_wall_theta * inv_h2;
            theta_wall_source_[grid_.index(n - 1, j, k)] +=
                2.0 * bc_.hot_wall_theta(grid_.center(j)) * inv_h2;
        }
}

FlowState CavitySolver::initial_state() const {
    FlowState state(grid_);
    state.theta = ScalarField(grid_, 0.5 * (bc_.cold_wall_theta + bc_.hot_wall_mean()));
    return state;
}

ScalarField CavitySolver::convection(const FaceVelocities& faces, const ScalarField& phi) const {
    const int n = grid_.n();
    const double inv_h = 1.0 / grid_.h();
    ScalarField out(grid_);
    auto& o = out.values();
    const auto& p = phi.values();
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                const auto c = grid_.index(i, j, k);
                if (i + 1 < n) {
                    const auto e = grid_.index(i + 1, j, k);
                    const double f = faces.at(0, i + 1, j, k) * 0.5 * (p[c] + p[e]) * inv_h;
                    o[c] += f;
                    o[e] -= f;
                }
                if (j + 1 < n) {
                    const auto e = grid_.index(i, j + 1, k);
                    const double f = faces.at(1, i, j + 1, k) * 0.5 * (p[c] + p[e]) * inv_h;
                    o[c] += f;
                    o[e] -= f;
                }
                if (k + 1 < n) {
                    const auto e = grid_.index(i, j, k + 1);
                    const double f = faces.at(2, i, j, k + 1) * 0.5 * (p[c] + p[e]) * inv_h;
                    o[c] += f;
                    o[e] -= f;
                }
            }
    return out;
}

void CavitySolver::rebuild_helmholtz(double dt) const {
    if (dt == helmholtz_dt_) return;
    velocity_helmholtz_ = PcgSolver(helmholtz(velocity_laplacian_, 0.5 * dt * config_.viscosity()),
                                    config_.max_cg_iterations);
    theta_helmholtz_ = PcgSolver(helmholtz(theta_laplacian_, 0.5 * dt * config_.diffusivity()),
                                 config_.max_cg_iterations);
    helmholtz_dt_ = dt;
}

VectorField CavitySolver::predictor(const FlowState& state, double dt,
                                    VectorField* convection_out) const {
    rebuild_helmholtz(dt);
    const double nu = config_.viscosity();
    VectorField conv(grid_);
    VectorField u_star(grid_);
    for (int c = 0; c < 3; ++c) {
        conv[c] = convection(state.faces, state.velocity[c]);
        Eigen::VectorXd advective = conv[c].values();
        if (state.has_history)
            advective = 1.5 * conv[c].values() - 0.5 * state.prev_convection[c].values();
        const auto& u = state.velocity[c].values();
        Eigen::VectorXd rhs = u - dt * advective + (0.5 * dt * nu) * (velocity_laplacian_ * u);
        if (c == 1 && config_.gravity)
            rhs.array() += dt * config_.buoyancy_coefficient() *
                           (state.theta.values().array() - config_.theta_ref);
        Eigen::VectorXd x = u;
        velocity_helmholtz_.solve(rhs, x, config_.helmholtz_tol);
        u_star[c] = ScalarField(grid_, std::move(x));
    }
    if (convection_out) *convection_out = std::move(conv);
    return u_star;
}

FaceVelocities CavitySolver::interpolate_to_faces(const VectorField& u) const {
    const int n = grid_.n();
    FaceVelocities faces(n);
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                if (i > 0) faces.at(0, i, j, k) = 0.5 * (u.u(i - 1, j, k) + u.u(i, j, k));
                if (j > 0) faces.at(1, i, j, k) = 0.5 * (u.v(i, j - 1, k) + u.v(i, j, k));
                if (k > 0) faces.at(2, i, j, k) = 0.5 * (u.w(i, j, k - 1) + u.w(i, j, k));
            }
    return faces;
}

ScalarField CavitySolver::face_divergence(const FaceVelocities& faces) const {
    const int n = grid_.n();
    const double inv_h = 1.0 / grid_.h();
    ScalarField out(grid_);
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i)
                out(i, j, k) = ((faces.at(0, i + 1, j, k) - faces.at(0, i, j, k)) +
                                (faces.at(1, i, j + 1, k) - faces.at(1, i, j, k)) +
                                (faces.at(2, i, j, k + 1) - faces.at(2, i, j, k))) *
                               inv_h;
    return out;
}

ScalarField CavitySolver::pressure_potential(const FaceVelocities& u_star_faces, double dt,
                                             const ScalarField& phi_guess, int* iterations) const {
    Eigen::VectorXd rhs = face_divergence(u_star_faces).values() / dt;
    Eigen::VectorXd x = phi_guess.values();
    // dt * residual is the divergence left after the correction
    const auto report = poisson_.solve(rhs, x, config_.poisson_tol, config_.poisson_tol / dt);
    if (iterations) *iterations = report.iterations;
    return ScalarField(grid_, std::move(x));
}

ScalarField CavitySolver::energy(const FlowState& state, const FaceVelocities& faces, double dt,
                                 ScalarField* convection_out) const {
    rebuild_helmholtz(dt);
    const double kappa = config_.diffusivity();
    ScalarField conv = convection(faces, state.theta);
    Eigen::VectorXd advective = conv.values();
    if (state.has_history)
        advective = 1.5 * conv.values() - 0.5 * state.prev_theta_convection.values();
    const auto& t = state.theta.values();
    Eigen::VectorXd rhs = t + (0.5 * dt * kappa) * (theta_laplacian_ * t) +
                          (dt * kappa) * theta_wall_source_ - dt * advective;
    Eigen::VectorXd x = t;
    theta_helmholtz_.solve(rhs, x, config_.helmholtz_tol);
    if (convection_out) *convection_out = std::move(conv);
    return ScalarField(grid_, std::move(x));
}

double CavitySolver::choose_dt(const FlowState& state) const {
    if (config_.dt > 0.0) return config_.dt;
    const auto speed = (state.velocity.u.values().array().square() +
                        state.velocity.v.values().array().square() +
                        state.velocity.w.values().array().square())
                           .sqrt()
                           .maxCoeff();
    return config_.cfl_target * grid_.h() / std::max(speed, config_.u_floor);
}

StepReport CavitySolver::step(FlowState& state, double dt) const {
    StepReport report;
    VectorField conv;
    VectorField u_star = predictor(state, dt, &conv);
    const FaceVelocities star_faces = interpolate_to_faces(u_star);
    ScalarField phi = pressure_potential(star_faces, dt, state.phi, &report.poisson_iterations);
    state.faces = correct_faces(star_faces, phi, dt);
    state.velocity = correct_velocity(u_star, phi, dt);
    state.phi = std::move(phi);

    ScalarField theta_conv;
    state.theta = energy(state, state.faces, dt, &theta_conv);

    state.prev_convection = std::move(conv);
    state.prev_theta_convection = std::move(theta_conv);
    state.has_history = true;
    ++state.step_count;
    state.time += dt;
    state.dt = dt;
    report.divergence = max_abs_divergence(state.faces);
    return report;
}

SteadyDiagnostics CavitySolver::run_to_steady(FlowState& state, const StepObserver& observer) const {
    SteadyDiagnostics diag;
    double dt = config_.dt > 0.0 ? config_.dt : 0.0;
    const std::array<std::string, 5> names{"phi", "theta", "u", "v", "w"};
    for (long s = 0; s < config_.max_steps; ++s) {
        if (config_.dt <= 0.0 && s % config_.dt_update_interval == 0) dt = choose_dt(state);
        const std::array<Eigen::VectorXd, 5> before{state.phi.values(), state.theta.values(),
                                                    state.velocity.u.values(), state.velocity.v.values(),
                                                    state.velocity.w.values()};
        const StepReport report = step(state, dt);
        diag.max_divergence = std::max(diag.max_divergence, report.divergence);
        diag.steps = s + 1;
        diag.final_dt = dt;

        const std::array<const Eigen::VectorXd*, 5> after{&state.phi.values(), &state.theta.values(),
                                                          &state.velocity.u.values(),
                                                          &state.velocity.v.values(),
                                                          &state.velocity.w.values()};
        bool steady = true;
        for (std::size_t f = 0; f < names.size(); ++f) {
            const auto& now = *after[f];
            if (!now.allFinite() || now.cwiseAbs().maxCoeff() > config_.blowup_limit)
                throw DivergenceError("solution blew up in field '" + names[f] + "' at step " +
                                          std::to_string(s + 1),
                                      names[f], s + 1);
            const double err = relative_change(now, before[f]);
            diag.errors[names[f]] = err;
            if (!(err < config_.steady_tol)) steady = false;
        }
        if (observer) observer(state, report);
        if (steady) {
            diag.converged = true;
            break;
        }
        if ((s + 1) % 500 == 0)
            logger().debug("step {} dt {:.4g} errors theta {:.3e} u {:.3e} v {:.3e} phi {:.3e}", s + 1, dt,
                           diag.errors["theta"], diag.errors["u"], diag.errors["v"], diag.errors["phi"]);
    }
    return diag;
}

VectorField predictor_step(const FlowState& state, const SolverConfig& config, const BoundarySpec& bc,
                           double dt) {
    CavitySolver solver(state.theta.grid(), config, bc);
    return solver.predictor(state, dt);
}

ScalarField solve_poisson(const ScalarField& rhs, double tol) {
    if (!rhs.all_finite()) throw DomainError("Poisson right-hand side is not finite");
    PoissonSolver poisson(rhs.grid());
    Eigen::VectorXd x = Eigen::VectorXd::Zero(rhs.values().size());
    poisson.solve(rhs.values(), x, tol);
    return ScalarField(rhs.grid(), std::move(x));
}

VectorField correct_velocity(const VectorField& u_star, const ScalarField& phi, double dt) {
    const auto& grid = phi.grid();
    const int n = grid.n();
    const double scale = dt / (2.0 * grid.h());
    VectorField out = u_star;
    if (dt == 0.0) return out;
    auto clamp = [n](int i) { return std::clamp(i, 0, n - 1); };
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                out.u(i, j, k) -= scale * (phi(clamp(i + 1), j, k) - phi(clamp(i - 1), j, k));
                out.v(i, j, k) -= scale * (phi(i, clamp(j + 1), k) - phi(i, clamp(j - 1), k));
                out.w(i, j, k) -= scale * (phi(i, j, clamp(k + 1)) - phi(i, j, clamp(k - 1)));
            }
    return out;
}

FaceVelocities correct_faces(const FaceVelocities& u_star_faces, const ScalarField& phi, double dt) {
    const auto& grid = phi.grid();
    const int n = grid.n();
    const double scale = dt / grid.h();
    FaceVelocities out = u_star_faces;
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                if (i > 0) out.at(0, i, j, k) -= scale * (phi(i, j, k) - phi(i - 1, j, k));
                if (j > 0) out.at(1, i, j, k) -= scale * (phi(i, j, k) - phi(i, j - 1, k));
                if (k > 0) out.at(2, i, j, k) -= scale * (phi(i, j, k) - phi(i, j, k - 1));
            }
    return out;
}

ScalarField energy_step(const FlowState& state, const SolverConfig& config, const BoundarySpec& bc,
                        double dt) {
    CavitySolver solver(state.theta.grid(), config, bc);
    return solver.energy(state, state.faces, dt);
}

SteadyResult run_to_steady(const SolverConfig& config, const BoundarySpec& bc,
                           const StructuredGrid& grid) {
    CavitySolver solver(grid, config, bc);
    SteadyResult result{solver.initial_state(), {}};
    result.diagnostics = solver.run_to_steady(result.state);
    return result;
}

Array2d nusselt_field(const FlowState& state, const BoundarySpec& bc, const StructuredGrid& grid) {
    const int n = grid.n();
    const double scale = 1.0 / (3.0 * grid.h() * nusselt_reference_delta);
    Array2d nu(n, n);
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j) {
            const double wall = bc.hot_wall_theta(grid.center(j));
            nu(j, k) = (8.0 * wall - 9.0 * state.theta(n - 1, j, k) + state.theta(n - 2, j, k)) * scale;
        }
    return nu;
}

Array2d cold_wall_nusselt_field(const FlowState& state, const BoundarySpec& bc,
                                const StructuredGrid& grid) {
    const int n = grid.n();
    const double scale = 1.0 / (3.0 * grid.h() * nusselt_reference_delta);
    Array2d nu(n, n);
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
            nu(j, k) = (-8.0 * bc.cold_wall_theta + 9.0 * state.theta(0, j, k) - state.theta(1, j, k)) * scale;
    return nu;
}

double mean_nusselt(const Array2d& nu, double h) {
    if (!nu.allFinite()) throw DomainError("Nusselt field is not finite");
    return h * h * nu.sum();
}

ScalarField pressure_from_phi(const ScalarField& phi, const SolverConfig& config, double dt) {
    Eigen::VectorXd lap = apply_laplacian(phi.grid(), all_neumann, phi.values());
    return ScalarField(phi.grid(), phi.values() - config.viscosity() * dt * lap);
}

double max_abs_divergence(const FaceVelocities& faces) {
    const int n = faces.n;
    const double inv_h = n;
    double worst = 0.0;
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                const double d = ((faces.at(0, i + 1, j, k) - faces.at(0, i, j, k)) +
                                  (faces.at(1, i, j + 1, k) - faces.at(1, i, j, k)) +
                                  (faces.at(2, i, j, k + 1) - faces.at(2, i, j, k))) *
                                 inv_h;
                worst = std::max(worst, std::abs(d));
            }
    return worst;
}

}  // namespace convect_uq

namespace convect_uq {

CenterlineProfiles centerline_profiles(const FlowState& state, const StructuredGrid& grid) {
    const int n = grid.n();
    const int hi = n / 2;
    const int lo = n % 2 ? hi : hi - 1;
    auto mid = [&](const ScalarField& f, int axis, int s) {
        // average over the middle layers of the two axes other than `axis`
        double sum = 0.0;
        for (int a : {lo, hi})
            for (int b : {lo, hi}) {
                if (axis == 0) sum += f(s, a, b);
                else sum += f(a, s, b);
            }
        return 0.25 * sum;
    };
    CenterlineProfiles p;
    p.coordinate.resize(n);
    p.theta_along_x.resize(n);
    p.u_along_y.resize(n);
    p.v_along_x.resize(n);
    for (int s = 0; s < n; ++s) {
        p.coordinate[s] = grid.center(s);
        p.theta_along_x[s] = mid(state.theta, 0, s);
        p.u_along_y[s] = mid(state.velocity.u, 1, s);
        p.v_along_x[s] = mid(state.velocity.v, 0, s);
    }
    return p;
}

std::string centerline_csv(const CenterlineProfiles& p) {
    std::ostringstream os;
    os << "s,theta_along_x,u_along_y,v_along_x\n";
    for (Eigen::Index s = 0; s < p.coordinate.size(); ++s)
        os << io::fmt17(p.coordinate[s]) << ',' << io::fmt17(p.theta_along_x[s]) << ',' << io::fmt17(p.u_along_y[s])
           << ',' << io::fmt17(p.v_along_x[s]) << '\n';
    return os.str();
}

RichardsonResult richardson(const std::vector<int>& sizes, const std::vector<double>& values, double exact_tol) {
    if (sizes.size() != 3 || values.size() != 3) throw DomainError("Richardson extrapolation needs three grids");
    if (!(sizes[0] < sizes[1] && sizes[1] < sizes[2]) || sizes[0] < 1)
        throw DomainError("grid sizes must be positive and strictly increasing");
    RichardsonResult r;
    const double f1 = values[0], f2 = values[1], f3 = values[2];
    const double scale = std::max(1.0, std::abs(f3));
    if (std::abs(f1 - f3) <= exact_tol * scale && std::abs(f2 - f3) <= exact_tol * scale) {
        r.exact = true;
        r.extrapolated = f3;
        return r;
    }
    r.extrapolated = f3;
    const double d12 = f1 - f2, d23 = f2 - f3;
    if (d23 == 0.0 || d12 * d23 <= 0.0) return r;
    const double ratio = d12 / d23;
    const double h1 = 1.0 / sizes[0], h2 = 1.0 / sizes[1], h3 = 1.0 / sizes[2];
    auto g = [&](double p) {
        return (std::pow(h1, p) - std::pow(h2, p)) / (std::pow(h2, p) - std::pow(h3, p)) - ratio;
    };
    double a = 1e-6, b = 20.0;
    if (g(a) > 0.0 || g(b) < 0.0) return r;
    for (int it = 0; it < 200; ++it) {
        const double m = 0.5 * (a + b);
        (g(m) < 0.0 ? a : b) = m;
    }
    const double p = 0.5 * (a + b);
    r.order_defined = true;
    r.observed_order = p;
    const double c = d23 / (std::pow(h2, p) - std::pow(h3, p));
    r.extrapolated = f3 - c * std::pow(h3, p);
    return r;
}

}  // namespace convect_uq
