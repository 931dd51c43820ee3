#include "convect_uq/pce.hpp"

#include <Eigen/QR>

#include <fstream>
#include <functional>
#include <sstream>

#include "convect_uq/io.hpp"

namespace convect_uq {

double hermite_eval(int order, double z) {
    if (order < 0) throw DomainError("Hermite order must be non-negative");
    return hermite_normalized(order, z);
}

PceBasis make_basis(int dims, int order) {
    if (dims < 1) throw DomainError("PCE basis needs at least one dimension");
    if (order < 0) throw DomainError("PCE order must be non-negative");
    PceBasis basis;
    basis.dims = dims;
    basis.order = order;
    MultiIndex alpha(dims, 0);
    // Within one total degree, lexicographically descending: (2,0), (1,1), (0,2).
    std::function<void(int, int)> fill = [&](int pos, int remaining) {
        if (pos == dims - 1) {
            alpha[pos] = remaining;
            basis.terms.push_back(alpha);
            return;
        }
        for (int a = remaining; a >= 0; --a) {
            alpha[pos] = a;
            fill(pos + 1, remaining - a);
        }
    };
    for (int t = 0; t <= order; ++t) fill(0, t);
    return basis;
}

Eigen::MatrixXd basis_matrix(const PceBasis& basis, const Eigen::MatrixXd& z) {
    if (z.cols() != basis.dims) throw ShapeError("sample dimension does not match the PCE basis");
    const Eigen::Index m = z.rows();
    const int p = basis.order;
    // psi[j](row, n) = psi_n(z(row, j))
    std::vector<Eigen::MatrixXd> psi(basis.dims, Eigen::MatrixXd(m, p + 1));
    for (int j = 0; j < basis.dims; ++j)
        for (Eigen::Index r = 0; r < m; ++r)
            for (int n = 0; n <= p; ++n) psi[j](r, n) = hermite_normalized(n, z(r, j));
    Eigen::MatrixXd a(m, basis.size());
    for (Eigen::Index i = 0; i < basis.size(); ++i) {
        const auto& alpha = basis.terms[i];
        for (Eigen::Index r = 0; r < m; ++r) {
            double v = 1.0;
            for (int j = 0; j < basis.dims; ++j) v *= psi[j](r, alpha[j]);
            a(r, i) = v;
        }
    }
    return a;
}

Eigen::MatrixXd PceModel::standardize(const Eigen::MatrixXd& xi) const {
    if (xi.cols() != basis.dims) throw ShapeError("input dimension does not match the PCE model");
    Eigen::MatrixXd z(xi.rows(), xi.cols());
    for (Eigen::Index j = 0; j < xi.cols(); ++j) {
        const auto& s = standardization[j];
        if (s.stddev == 0.0) z.col(j).setZero();
        else z.col(j) = (xi.col(j).array() - s.mean) / s.stddev;
    }
    return z;
}

Eigen::VectorXd PceModel::predict(const Eigen::VectorXd& xi) const {
    return predict_rows(xi.transpose()).row(0).transpose();
}

Eigen::MatrixXd PceModel::predict_rows(const Eigen::MatrixXd& xi) const {
    return basis_matrix(basis, standardize(xi)) * coefficients;
}

PceModel fit_collocation(const SampleMatrix& samples, const Eigen::MatrixXd& outputs, const PceBasis& basis) {
    if (samples.cols() != basis.dims) throw ShapeError("sample dimension does not match the PCE basis");
    if (outputs.rows() != samples.rows()) throw ShapeError("one output row per sample is required");
    if (samples.rows() < basis.size())
        throw UnderdeterminedError("collocation needs at least as many samples (" +
                                   std::to_string(samples.rows()) + ") as basis functions (" +
                                   std::to_string(basis.size()) + ")");
    if (!outputs.allFinite()) throw DomainError("collocation outputs must be finite");

    PceModel model;
    model.basis = basis;
    if (samples.marginals.empty()) model.standardization.assign(basis.dims, NormalMarginal{});
    else model.standardization = samples.marginals;
    if (static_cast<int>(model.standardization.size()) != basis.dims)
        throw ShapeError("one marginal per input dimension is required");

    const Eigen::MatrixXd a = basis_matrix(basis, model.standardize(samples.values));
    // a zero-spread input carries no information, so only terms constant in it are fitted
    std::vector<Eigen::Index> active;
    for (Eigen::Index i = 0; i < a.cols(); ++i) {
        bool degenerate = false;
        for (int j = 0; j < basis.dims; ++j)
            if (model.standardization[j].stddev == 0.0 && basis.terms[i][j] > 0) degenerate = true;
        if (!degenerate && a.col(i).norm() > 0.0) active.push_back(i);
    }

    Eigen::MatrixXd reduced(a.rows(), static_cast<Eigen::Index>(active.size()));
    Eigen::VectorXd scale(reduced.cols());
    for (Eigen::Index c = 0; c < reduced.cols(); ++c) {
        scale[c] = a.col(active[c]).norm();
        reduced.col(c) = a.col(active[c]) / scale[c];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(reduced);
    const auto r_diag = qr.matrixR().diagonal().cwiseAbs();
    const double largest = r_diag.size() ? r_diag.maxCoeff() : 1.0;
    const double smallest = r_diag.size() ? r_diag.minCoeff() : 1.0;
    model.report.condition_estimate = smallest > 0.0 ? largest / smallest : std::numeric_limits<double>::infinity();
    if (qr.rank() < reduced.cols())
        throw ConditioningError("collocation matrix is rank deficient (condition estimate " +
                                    io::fmt17(model.report.condition_estimate) + ")",
                                model.report.condition_estimate);

    const Eigen::MatrixXd solution = qr.solve(outputs);
    model.coefficients = Eigen::MatrixXd::Zero(basis.size(), outputs.cols());
    for (Eigen::Index c = 0; c < reduced.cols(); ++c)
        model.coefficients.row(active[c]) = solution.row(c) / scale[c];

    const Eigen::MatrixXd residual = a * model.coefficients - outputs;
    model.report.relative_rms_residual.resize(outputs.cols());
    for (Eigen::Index k = 0; k < outputs.cols(); ++k) {
        const double denom = outputs.col(k).norm();
        const double num = residual.col(k).norm();
        model.report.relative_rms_residual[k] = denom > 0.0 ? num / denom : num;
    }
    return model;
}

PceMoments moments(const PceModel& model) {
    PceMoments m;
    m.mean = model.coefficients.row(0).transpose();
    m.variance = model.coefficients.bottomRows(model.coefficients.rows() - 1).colwise().squaredNorm().transpose();
    return m;
}

Eigen::VectorXd total_sobol(const PceModel& model, int input) {
    if (input < 0 || input >= model.basis.dims) throw DomainError("Sobol input index out of range");
    const auto& c = model.coefficients;
    Eigen::VectorXd partial = Eigen::VectorXd::Zero(c.cols());
    Eigen::VectorXd total = Eigen::VectorXd::Zero(c.cols());
    for (Eigen::Index i = 1; i < model.basis.size(); ++i) {
        const Eigen::VectorXd sq = c.row(i).transpose().array().square();
        total += sq;
        if (model.basis.terms[i][input] > 0) partial += sq;
    }
    for (Eigen::Index k = 0; k < total.size(); ++k)
        if (!(total[k] > 0.0))
            throw UndefinedSensitivityError("output " + std::to_string(k) + " has zero variance");
    return partial.cwiseQuotient(total);
}

Array2d response_surface(const PceModel& model, int output, int resolution) {
    if (model.basis.dims != 2) throw ShapeError("response surfaces need exactly two inputs");
    if (output < 0 || output >= model.outputs()) throw DomainError("output index out of range");
    if (resolution < 2) throw DomainError("response surface resolution must be >= 2");
    const auto& s1 = model.standardization[0];
    const auto& s2 = model.standardization[1];
    Eigen::MatrixXd xi(static_cast<Eigen::Index>(resolution) * resolution, 2);
    for (int b = 0; b < resolution; ++b)
        for (int a = 0; a < resolution; ++a) {
            const double fa = static_cast<double>(a) / (resolution - 1);
            const double fb = static_cast<double>(b) / (resolution - 1);
            xi(a + resolution * b, 0) = s1.mean - 3.0 * s1.stddev + 6.0 * s1.stddev * fa;
            xi(a + resolution * b, 1) = s2.mean - 3.0 * s2.stddev + 6.0 * s2.stddev * fb;
        }
    const Eigen::MatrixXd values = model.predict_rows(xi);
    Array2d out(resolution, resolution);
    for (int b = 0; b < resolution; ++b)
        for (int a = 0; a < resolution; ++a) out(a, b) = values(a + resolution * b, output);
    return out;
}

void write_pce_model(std::ostream& os, const PceModel& model) {
    if (model.report.relative_rms_residual.size() != model.outputs())
        throw ShapeError("PCE model needs one fit residual per output");
    os << "convect_uq-pce 1\n";
    os << "dims " << model.basis.dims << "\norder " << model.basis.order << "\noutputs " << model.outputs()
       << "\n";
    os << "standardization\n";
    for (const auto& s : model.standardization) os << io::fmt17(s.mean) << ' ' << io::fmt17(s.stddev) << '\n';
    os << "terms " << model.basis.size() << '\n';
    for (const auto& alpha : model.basis.terms) {
        for (std::size_t j = 0; j < alpha.size(); ++j) os << (j ? " " : "") << alpha[j];
        os << '\n';
    }
    os << "coefficients\n";
    for (Eigen::Index i = 0; i < model.coefficients.rows(); ++i) {
        for (Eigen::Index k = 0; k < model.coefficients.cols(); ++k)
            os << (k ? " " : "") << io::fmt17(model.coefficients(i, k));
        os << '\n';
    }
    os << "residuals\n";
    for (Eigen::Index k = 0; k < model.report.relative_rms_residual.size(); ++k)
        os << (k ? " " : "") << io::fmt17(model.report.relative_rms_residual[k]);
    os << "\ncondition " << io::fmt17(model.report.condition_estimate) << '\n';
}

void write_pce_model(const std::string& path, const PceModel& model) {
    std::ostringstream ss;
    write_pce_model(ss, model);
    io::write_file(path, ss.str());
}

namespace {

std::vector<std::string> next_tokens(std::istream& is) {
    std::string line;
    while (std::getline(is, line)) {
        const auto t = io::trim(line);
        if (!t.empty()) return io::split(t, ' ');
    }
    throw FormatError("PCE model: unexpected end of file");
}

long long keyed_int(std::istream& is, const std::string& key) {
    const auto tok = next_tokens(is);
    if (tok.size() != 2 || tok[0] != key) throw FormatError("PCE model: expected '" + key + "'");
    return io::parse_int(tok[1]);
}

void expect(std::istream& is, const std::string& key) {
    const auto tok = next_tokens(is);
    if (tok.size() != 1 || tok[0] != key) throw FormatError("PCE model: expected '" + key + "'");
}

}  // namespace

PceModel read_pce_model(std::istream& is) {
    const auto header = next_tokens(is);
    if (header.size() != 2 || header[0] != "convect_uq-pce" || header[1] != "1")
        throw FormatError("PCE model: unsupported header");
    PceModel model;
    const int dims = static_cast<int>(keyed_int(is, "dims"));
    const int order = static_cast<int>(keyed_int(is, "order"));
    const auto outputs = static_cast<Eigen::Index>(keyed_int(is, "outputs"));
    model.basis = make_basis(dims, order);
    expect(is, "standardization");
    for (int j = 0; j < dims; ++j) {
        const auto tok = next_tokens(is);
        if (tok.size() != 2) throw FormatError("PCE model: bad standardization row");
        model.standardization.push_back({io::parse_double(tok[0]), io::parse_double(tok[1])});
    }
    const auto terms = keyed_int(is, "terms");
    if (terms != model.basis.size()) throw FormatError("PCE model: term count mismatch");
    for (Eigen::Index i = 0; i < model.basis.size(); ++i) {
        const auto tok = next_tokens(is);
        if (static_cast<int>(tok.size()) != dims) throw FormatError("PCE model: bad multi-index row");
        for (int j = 0; j < dims; ++j)
            if (io::parse_int(tok[j]) != model.basis.terms[i][j])
                throw FormatError("PCE model: multi-index table is not in graded lexicographic order");
    }
    expect(is, "coefficients");
    model.coefficients.resize(model.basis.size(), outputs);
    for (Eigen::Index i = 0; i < model.basis.size(); ++i) {
        const auto tok = next_tokens(is);
        if (static_cast<Eigen::Index>(tok.size()) != outputs) throw FormatError("PCE model: bad coefficient row");
        for (Eigen::Index k = 0; k < outputs; ++k) model.coefficients(i, k) = io::parse_double(tok[k]);
    }
    expect(is, "residuals");
    const auto tok = next_tokens(is);
    if (static_cast<Eigen::Index>(tok.size()) != outputs) throw FormatError("PCE model: bad residual row");
    model.report.relative_rms_residual.resize(outputs);
    for (Eigen::Index k = 0; k < outputs; ++k) model.report.relative_rms_residual[k] = io::parse_double(tok[k]);
    const auto cond = next_tokens(is);
    if (cond.size() != 2 || cond[0] != "condition") throw FormatError("PCE model: expected 'condition'");
    model.report.condition_estimate = io::parse_double(cond[1]);
    return model;
}

PceModel read_pce_model(const std::string& path) {
    std::istringstream ss(io::read_file(path));
    return read_pce_model(ss);
}

}  // namespace convect_uq
