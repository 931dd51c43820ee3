#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "convect_uq/grid.hpp"
#include "convect_uq/linear_solvers.hpp"

namespace convect_uq {

/// Conduction reference for the Nusselt number (hot 1.05 minus cold 0.95).
inline constexpr double nusselt_reference_delta = 0.1;

struct SolverConfig {
    double ra = 1e5;
    double pr = 7.5;
    /// Fixed time step when > 0; otherwise chosen from cfl_target.
    double dt = 0.0;
    double cfl_target = 0.5;
    double u_floor = 0.1;
    int dt_update_interval = 10;
    double steady_tol = 1e-4;
    long max_steps = 20000;
    double poisson_tol = 1e-8;
    double helmholtz_tol = 1e-9;
    /// Test hook: switches the buoyancy source off.
    bool gravity = true;
    /// Buoyancy source is pr * (theta - theta_ref) / delta_theta in +y.
    double theta_ref = 1.0;
    double delta_theta = 0.1;
    double blowup_limit = 1e6;
    int max_cg_iterations = 20000;

    double viscosity() const;
    double diffusivity() const;
    double buoyancy_coefficient() const;
    void validate() const;
};

/// Wall temperatures. Cold wall at x = 0, hot wall at x = 1 split into K bands
/// stacked along y (K = 1 is a uniform wall). Other walls adiabatic, all no-slip.
struct BoundarySpec {
    double cold_wall_theta = 0.95;
    std::vector<double> hot_strips{1.05};

    static BoundarySpec uniform(double hot = 1.05, double cold = 0.95);
    static BoundarySpec strips(std::vector<double> temps, double cold = 0.95);

    int strip_count() const { return static_cast<int>(hot_strips.size()); }
    int strip_index(double y) const;
    double hot_wall_theta(double y) const { return hot_strips[strip_index(y)]; }
    double hot_wall_mean() const;
    void validate() const;
};

/// Normal velocity on every cell face, walls included (always zero there).
/// x-faces are indexed (i_face, j, k) with i_face in [0, n], and so on.
struct FaceVelocities {
    int n = 0;
    Eigen::VectorXd x, y, z;

    FaceVelocities() = default;
    explicit FaceVelocities(int n_cells);

    Eigen::Index index(int a, int b, int c, int axis) const;
    double& at(int axis, int i, int j, int k);
    double at(int axis, int i, int j, int k) const;
};

struct FlowState {
    VectorField velocity;
    ScalarField theta;
    ScalarField phi;
    FaceVelocities faces;
    VectorField prev_convection;
    ScalarField prev_theta_convection;
    bool has_history = false;
    long step_count = 0;
    double time = 0.0;
    double dt = 0.0;

    FlowState() = default;
    explicit FlowState(const StructuredGrid& grid);
};

struct SteadyDiagnostics {
    std::map<std::string, double> errors;
    bool converged = false;
    long steps = 0;
    double max_divergence = 0.0;
    double final_dt = 0.0;

    /// `{"converged": ..., "steps": ..., "errors_per_field": {...}, ...}` on one line.
    std::string to_json() const;
};

struct StepReport {
    double divergence = 0.0;
    int poisson_iterations = 0;
};

/// Fractional-step integrator for one cavity configuration. Owns the assembled
/// operators so the time loop does not rebuild them.
class CavitySolver {
public:
    CavitySolver(const StructuredGrid& grid, SolverConfig config, BoundarySpec bc);

    const StructuredGrid& grid() const { return grid_; }
    const SolverConfig& config() const { return config_; }
    const BoundarySpec& boundary() const { return bc_; }

    /// Fluid at rest, theta at the mean of the two wall means.
    FlowState initial_state() const;

    /// Conservative central convection sum_f U_f phi_f / h using face velocities.
    ScalarField convection(const FaceVelocities& faces, const ScalarField& phi) const;

    /// Intermediate velocity from AB2 convection, CN diffusion and buoyancy.
    /// `convection_out`, when given, receives the convection of the current step.
    VectorField predictor(const FlowState& state, double dt,
                          VectorField* convection_out = nullptr) const;

    FaceVelocities interpolate_to_faces(const VectorField& u) const;
    ScalarField face_divergence(const FaceVelocities& faces) const;

    /// Solves L phi = div(U*)/dt starting from `phi_guess`; divergence after the
    /// correction is held below poisson_tol as well.
    ScalarField pressure_potential(const FaceVelocities& u_star_faces, double dt,
                                   const ScalarField& phi_guess, int* iterations = nullptr) const;

    ScalarField energy(const FlowState& state, const FaceVelocities& faces, double dt,
                       ScalarField* convection_out = nullptr) const;

    double choose_dt(const FlowState& state) const;

    /// Advances `state` by one step of size dt.
    StepReport step(FlowState& state, double dt) const;

    using StepObserver = std::function<void(const FlowState&, const StepReport&)>;

    /// Marches from `state` until every field's relative change per step drops
    /// below steady_tol or max_steps is reached.
    SteadyDiagnostics run_to_steady(FlowState& state, const StepObserver& observer = {}) const;

private:
    void rebuild_helmholtz(double dt) const;

    StructuredGrid grid_;
    SolverConfig config_;
    BoundarySpec bc_;
    PoissonSolver poisson_;
    SparseMatrix velocity_laplacian_;
    SparseMatrix theta_laplacian_;
    Eigen::VectorXd theta_wall_source_;  // 2*theta_wall/h^2 next to the x walls
    mutable double helmholtz_dt_ = -1.0;
    mutable PcgSolver velocity_helmholtz_;
    mutable PcgSolver theta_helmholtz_;
};

// Free-function forms of the individual stages.

VectorField predictor_step(const FlowState& state, const SolverConfig& config,
                           const BoundarySpec& bc, double dt);

ScalarField solve_poisson(const ScalarField& rhs, double tol);

/// Cell-centred correction u* - dt grad(phi); zero-gradient ghosts at the walls.
VectorField correct_velocity(const VectorField& u_star, const ScalarField& phi, double dt);

/// Face-velocity correction U* - dt dphi/dn; this is the field whose divergence vanishes.
FaceVelocities correct_faces(const FaceVelocities& u_star_faces, const ScalarField& phi, double dt);

ScalarField energy_step(const FlowState& state, const SolverConfig& config, const BoundarySpec& bc,
                        double dt);

struct SteadyResult {
    FlowState state;
    SteadyDiagnostics diagnostics;
};

SteadyResult run_to_steady(const SolverConfig& config, const BoundarySpec& bc,
                           const StructuredGrid& grid);

/// Local Nu(y, z) on the hot wall from a one-sided three-point wall gradient,
/// divided by nusselt_reference_delta. Indexed (j, k).
Array2d nusselt_field(const FlowState& state, const BoundarySpec& bc, const StructuredGrid& grid);

/// Same on the cold wall (x = 0), sign chosen so conduction gives +1.
Array2d cold_wall_nusselt_field(const FlowState& state, const BoundarySpec& bc,
                                const StructuredGrid& grid);

double mean_nusselt(const Array2d& nu, double h);

ScalarField pressure_from_phi(const ScalarField& phi, const SolverConfig& config, double dt);

double max_abs_divergence(const FaceVelocities& faces);

/// Profiles along the three lines through the cavity centre, sampled at cell
/// centres (the two middle layers are averaged on even grids):
/// theta and v along x at y = z = 0.5, u along y at x = z = 0.5.
struct CenterlineProfiles {
    Eigen::VectorXd coordinate;
    Eigen::VectorXd theta_along_x;
    Eigen::VectorXd u_along_y;
    Eigen::VectorXd v_along_x;
};

CenterlineProfiles centerline_profiles(const FlowState& state, const StructuredGrid& grid);

/// Header `s,theta_along_x,u_along_y,v_along_x`.
std::string centerline_csv(const CenterlineProfiles& profiles);

struct RichardsonResult {
    /// All three values agree to round-off, so no order can be observed.
    bool exact = false;
    /// False when the differences change sign (no asymptotic convergence).
    bool order_defined = false;
    double observed_order = 0.0;
    double extrapolated = 0.0;
};

/// Observed order and extrapolated value from three grids of increasing size
/// n1 < n2 < n3 (h = 1/n); the refinement ratios need not be equal.
RichardsonResult richardson(const std::vector<int>& sizes, const std::vector<double>& values,
                            double exact_tol = 1e-6);

}  // namespace convect_uq
