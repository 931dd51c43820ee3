#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstddef>
#include <iosfwd>
#include <string>

#include "convect_uq/error.hpp"

namespace convect_uq {

template <typename Scalar>
using Array2 = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
using Array2d = Array2<double>;

enum class Axis { X = 0, Y = 1, Z = 2 };

/// Uniform n x n x n cell-centred grid on the unit cube.
class StructuredGrid {
public:
    explicit StructuredGrid(int n);

    int n() const { return n_; }
    double h() const { return h_; }
    Eigen::Index cells() const { return static_cast<Eigen::Index>(n_) * n_ * n_; }

    double center(int i) const { return (i + 0.5) * h_; }

    /// Linear index, i fastest.
    Eigen::Index index(int i, int j, int k) const {
        return i + static_cast<Eigen::Index>(n_) * (j + static_cast<Eigen::Index>(n_) * k);
    }

    /// Index of the cell layer whose centre is nearest to `coordinate`; ties go to the lower index.
    int nearest_layer(double coordinate) const;

    bool operator==(const StructuredGrid& other) const { return n_ == other.n_; }

private:
    int n_;
    double h_;
};

StructuredGrid make_grid(int n);

template <typename Scalar>
class Field {
public:
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    Field() : grid_(4), values_(Vector::Zero(grid_.cells())) {}
    explicit Field(const StructuredGrid& grid, Scalar value = Scalar(0))
        : grid_(grid), values_(Vector::Constant(grid.cells(), value)) {}
    Field(const StructuredGrid& grid, Vector values) : grid_(grid), values_(std::move(values)) {
        if (values_.size() != grid_.cells())
            throw ShapeError("field value count does not match grid");
    }

    const StructuredGrid& grid() const { return grid_; }
    int n() const { return grid_.n(); }

    Scalar& operator()(int i, int j, int k) { return values_[grid_.index(i, j, k)]; }
    Scalar operator()(int i, int j, int k) const { return values_[grid_.index(i, j, k)]; }

    Vector& values() { return values_; }
    const Vector& values() const { return values_; }

    Scalar max_abs() const { return values_.size() ? values_.cwiseAbs().maxCoeff() : Scalar(0); }
    bool all_finite() const { return values_.allFinite(); }

    template <typename F>
    static Field from_function(const StructuredGrid& grid, F&& f) {
        Field out(grid);
        for (int k = 0; k < grid.n(); ++k)
            for (int j = 0; j < grid.n(); ++j)
                for (int i = 0; i < grid.n(); ++i)
                    out(i, j, k) = f(grid.center(i), grid.center(j), grid.center(k));
        return out;
    }

private:
    StructuredGrid grid_;
    Vector values_;
};

using ScalarField = Field<double>;

template <typename Scalar>
struct VectorFieldT {
    Field<Scalar> u, v, w;

    VectorFieldT() = default;
    explicit VectorFieldT(const StructuredGrid& grid) : u(grid), v(grid), w(grid) {}

    Field<Scalar>& operator[](int c) { return c == 0 ? u : (c == 1 ? v : w); }
    const Field<Scalar>& operator[](int c) const { return c == 0 ? u : (c == 1 ? v : w); }
    const StructuredGrid& grid() const { return u.grid(); }
};

using VectorField = VectorFieldT<double>;

/// One layer of `field` perpendicular to `axis`. For Z the result is indexed (i, j),
/// for Y it is (i, k) and for X it is (j, k).
template <typename Scalar>
Array2<Scalar> slice_layer(const Field<Scalar>& field, Axis axis, int layer) {
    const int n = field.n();
    if (layer < 0 || layer >= n) throw DomainError("slice layer out of range");
    Array2<Scalar> out(n, n);
    for (int b = 0; b < n; ++b)
        for (int a = 0; a < n; ++a) {
            switch (axis) {
            case Axis::X: out(a, b) = field(layer, a, b); break;
            case Axis::Y: out(a, b) = field(a, layer, b); break;
            case Axis::Z: out(a, b) = field(a, b, layer); break;
            }
        }
    return out;
}

template <typename Scalar>
Array2<Scalar> midplane_slice(const Field<Scalar>& field, Axis axis, double coordinate) {
    if (!(coordinate > 0.0 && coordinate < 1.0))
        throw DomainError("slice coordinate must lie strictly inside (0, 1)");
    return slice_layer(field, axis, field.grid().nearest_layer(coordinate));
}

/// Field CSV: header `i,j,k,x,y,z,value`, i fastest, 17 significant digits.
void write_field_csv(std::ostream& os, const ScalarField& field);
void write_field_csv(const std::string& path, const ScalarField& field);
ScalarField read_field_csv(std::istream& is);
ScalarField read_field_csv(const std::string& path);

/// 2D array CSV: header `a,b,value`, a fastest.
void write_array_csv(std::ostream& os, const Array2d& array);
void write_array_csv(const std::string& path, const Array2d& array);
Array2d read_array_csv(std::istream& is);
Array2d read_array_csv(const std::string& path);

}  // namespace convect_uq
