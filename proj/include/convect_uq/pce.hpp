#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <iosfwd>
#include <string>
#include <vector>

#include "convect_uq/grid.hpp"
#include "convect_uq/sampling.hpp"

namespace convect_uq {

/// Normalised probabilists' Hermite polynomial He_n(z) / sqrt(n!), orthonormal
/// under the standard normal density.
template <typename Scalar>
Scalar hermite_normalized(int n, Scalar z) {
    if (n == 0) return Scalar(1);
    // psi_{k+1} = (z psi_k - sqrt(k) psi_{k-1}) / sqrt(k+1)
    Scalar prev(1), cur = z;
    for (int k = 1; k < n; ++k) {
        Scalar next = (z * cur - std::sqrt(Scalar(k)) * prev) / std::sqrt(Scalar(k + 1));
        prev = cur;
        cur = next;
    }
    return cur;
}

double hermite_eval(int order, double z);

using MultiIndex = std::vector<int>;

inline int total_order(const MultiIndex& alpha) {
    int s = 0;
    for (int a : alpha) s += a;
    return s;
}

/// Total-order basis in graded lexicographic order; term 0 is the constant.
struct PceBasis {
    int dims = 0;
    int order = 0;
    std::vector<MultiIndex> terms;

    Eigen::Index size() const { return static_cast<Eigen::Index>(terms.size()); }
};

PceBasis make_basis(int dims, int order);

/// Entry (m, i) = prod_j psi_{alpha_i,j}(z_mj) for standardised inputs z.
Eigen::MatrixXd basis_matrix(const PceBasis& basis, const Eigen::MatrixXd& z);

struct FitReport {
    Eigen::VectorXd relative_rms_residual;
    double condition_estimate = 1.0;
};

struct PceModel {
    PceBasis basis;
    std::vector<NormalMarginal> standardization;
    /// basis size x n_outputs
    Eigen::MatrixXd coefficients;
    FitReport report;

    Eigen::Index outputs() const { return coefficients.cols(); }
    Eigen::MatrixXd standardize(const Eigen::MatrixXd& xi) const;
    Eigen::VectorXd predict(const Eigen::VectorXd& xi) const;
    /// One row per input row.
    Eigen::MatrixXd predict_rows(const Eigen::MatrixXd& xi) const;
};

/// Least-squares collocation fit through a column-equilibrated, column-pivoted
/// Householder QR. Inputs are standardised with the sample marginals (standard
/// normal when the matrix carries none); a dimension with zero spread maps to z = 0
/// and every term that involves it gets a zero coefficient.
PceModel fit_collocation(const SampleMatrix& samples, const Eigen::MatrixXd& outputs, const PceBasis& basis);

struct PceMoments {
    Eigen::VectorXd mean;
    Eigen::VectorXd variance;
};

PceMoments moments(const PceModel& model);

/// Total Sobol index of input `input` for every output.
Eigen::VectorXd total_sobol(const PceModel& model, int input);

/// r x r predictions of output k over (mu1 +- 3 sigma1) x (mu2 +- 3 sigma2);
/// entry (a, b) sits at input-1 position a and input-2 position b.
Array2d response_surface(const PceModel& model, int output, int resolution);

void write_pce_model(std::ostream& os, const PceModel& model);
void write_pce_model(const std::string& path, const PceModel& model);
PceModel read_pce_model(std::istream& is);
PceModel read_pce_model(const std::string& path);

}  // namespace convect_uq
