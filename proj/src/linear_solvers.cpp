#include "convect_uq/linear_solvers.hpp"

#include <string>
#include <vector>

#include "convect_uq/error.hpp"

namespace convect_uq {

namespace {

struct Neighbour {
    int di, dj, dk;
    int face;
};

constexpr std::array<Neighbour, 6> neighbours{{{-1, 0, 0, 0},
                                               {1, 0, 0, 1},
                                               {0, -1, 0, 2},
                                               {0, 1, 0, 3},
                                               {0, 0, -1, 4},
                                               {0, 0, 1, 5}}};

}  // namespace

SparseMatrix laplacian_matrix(const StructuredGrid& grid, const WallTypes& walls) {
    const int n = grid.n();
    const double inv_h2 = 1.0 / (grid.h() * grid.h());
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>(grid.cells()) * 7);
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                const auto p = grid.index(i, j, k);
                double diag = 0.0;
                for (const auto& nb : neighbours) {
                    const int ii = i + nb.di, jj = j + nb.dj, kk = k + nb.dk;
                    if (ii < 0 || ii >= n || jj < 0 || jj >= n || kk < 0 || kk >= n) {
                        if (walls[nb.face] == WallType::Dirichlet) diag -= 2.0 * inv_h2;
                        continue;
                    }
                    triplets.emplace_back(p, grid.index(ii, jj, kk), inv_h2);
                    diag -= inv_h2;
                }
                triplets.emplace_back(p, p, diag);
            }
    SparseMatrix a(grid.cells(), grid.cells());
    a.setFromTriplets(triplets.begin(), triplets.end());
    a.makeCompressed();
    return a;
}

Eigen::VectorXd apply_laplacian(const StructuredGrid& grid, const WallTypes& walls,
                                const Eigen::VectorXd& x) {
    const int n = grid.n();
    const double inv_h2 = 1.0 / (grid.h() * grid.h());
    Eigen::VectorXd out(x.size());
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                const auto p = grid.index(i, j, k);
                double acc = 0.0;
                for (const auto& nb : neighbours) {
                    const int ii = i + nb.di, jj = j + nb.dj, kk = k + nb.dk;
                    if (ii < 0 || ii >= n || jj < 0 || jj >= n || kk < 0 || kk >= n) {
                        if (walls[nb.face] == WallType::Dirichlet) acc -= 2.0 * x[p];
                        continue;
                    }
                    acc += x[grid.index(ii, jj, kk)] - x[p];
                }
                out[p] = acc * inv_h2;
            }
    return out;
}

PcgSolver::PcgSolver(const SparseMatrix& a, int max_iterations)
    : a_(a), max_iterations_(max_iterations) {}

CgReport PcgSolver::solve(const Eigen::VectorXd& b, Eigen::VectorXd& x, double tol,
                          double abs_tol) const {
    const double b_norm = b.norm();
    if (b_norm == 0.0) {
        x.setZero();
        return {};
    }
    double effective = tol;
    if (abs_tol < effective * b_norm) effective = abs_tol / b_norm;

    Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper,
                             Eigen::DiagonalPreconditioner<double>>
        cg;
    cg.setMaxIterations(max_iterations_);
    cg.setTolerance(effective);
    cg.compute(a_);
    Eigen::VectorXd guess = x;
    x = cg.solveWithGuess(b, guess);
    CgReport report{static_cast<int>(cg.iterations()), cg.error()};
    if (cg.info() != Eigen::Success) {
        const double residual = (b - a_ * x).norm() / b_norm;
        throw LinearSolverError("conjugate gradient did not converge: relative residual " +
                                    std::to_string(residual) + " after " +
                                    std::to_string(report.iterations) + " iterations",
                                residual, report.iterations);
    }
    return report;
}

PoissonSolver::PoissonSolver(const StructuredGrid& grid, int max_iterations)
    : grid_(grid), pcg_(SparseMatrix(-laplacian_matrix(grid, all_neumann)), max_iterations) {}

CgReport PoissonSolver::solve(const Eigen::VectorXd& rhs, Eigen::VectorXd& x, double tol,
                              double abs_tol) const {
    if (x.size() != rhs.size()) x = Eigen::VectorXd::Zero(rhs.size());
    Eigen::VectorXd b = -(rhs.array() - rhs.mean()).matrix();
    auto report = pcg_.solve(b, x, tol, abs_tol);
    x.array() -= x.mean();
    return report;
}

}  // namespace convect_uq
