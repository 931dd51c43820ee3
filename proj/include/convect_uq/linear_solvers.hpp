#pragma once

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>

#include <array>
#include <limits>

#include "convect_uq/grid.hpp"

namespace convect_uq {

using SparseMatrix = Eigen::SparseMatrix<double>;

enum class WallType { Neumann, Dirichlet };

/// Wall type per face in the order x-, x+, y-, y+, z-, z+.
using WallTypes = std::array<WallType, 6>;

inline constexpr WallTypes all_neumann{WallType::Neumann, WallType::Neumann, WallType::Neumann,
                                       WallType::Neumann, WallType::Neumann, WallType::Neumann};
inline constexpr WallTypes all_dirichlet{WallType::Dirichlet, WallType::Dirichlet, WallType::Dirichlet,
                                         WallType::Dirichlet, WallType::Dirichlet, WallType::Dirichlet};

/// Finite-volume 7-point Laplacian. A Dirichlet wall contributes -2/h^2 to the
/// diagonal of the adjacent cell (wall value sits half a cell away); the matching
/// constant term is the caller's business. Neumann walls contribute nothing.
SparseMatrix laplacian_matrix(const StructuredGrid& grid, const WallTypes& walls);

/// Matrix-free application of the same operator with zero wall values.
Eigen::VectorXd apply_laplacian(const StructuredGrid& grid, const WallTypes& walls,
                                const Eigen::VectorXd& x);

struct CgReport {
    int iterations = 0;
    double relative_residual = 0.0;
};

/// Diagonally preconditioned conjugate gradient on a fixed SPD (or consistent
/// semidefinite) matrix.
class PcgSolver {
public:
    PcgSolver() = default;
    explicit PcgSolver(const SparseMatrix& a, int max_iterations = 20000);

    /// Iterates from the initial content of `x` until ||r|| <= tol*||b|| and, when
    /// given, ||r|| <= abs_tol. Throws LinearSolverError when the cap is hit.
    CgReport solve(const Eigen::VectorXd& b, Eigen::VectorXd& x, double tol,
                   double abs_tol = std::numeric_limits<double>::infinity()) const;

    const SparseMatrix& matrix() const { return a_; }

private:
    SparseMatrix a_;
    int max_iterations_ = 20000;
};

/// Pure-Neumann Poisson solve with zero-mean nullspace pinning.
class PoissonSolver {
public:
    explicit PoissonSolver(const StructuredGrid& grid, int max_iterations = 20000);

    /// Solves L x = rhs - mean(rhs); `x` holds the initial guess on entry and is
    /// returned mean-free.
    CgReport solve(const Eigen::VectorXd& rhs, Eigen::VectorXd& x, double tol,
                   double abs_tol = std::numeric_limits<double>::infinity()) const;

private:
    StructuredGrid grid_;
    PcgSolver pcg_;  // on -L, which is positive semidefinite
};

}  // namespace convect_uq
