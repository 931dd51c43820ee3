#include "convect_uq/grid.hpp"

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "convect_uq/io.hpp"

namespace convect_uq {

StructuredGrid::StructuredGrid(int n) : n_(n), h_(n > 0 ? 1.0 / n : 0.0) {
    if (n < 4) throw GridError("grid needs at least 4 cells per axis, got " + std::to_string(n));
}

int StructuredGrid::nearest_layer(double coordinate) const {
    const double t = coordinate * n_ - 0.5;
    int lower = static_cast<int>(std::floor(t));
    if (lower < 0) return 0;
    if (lower >= n_ - 1) return n_ - 1;
    // lower index wins ties
    return (t - lower) <= 0.5 ? lower : lower + 1;
}

StructuredGrid make_grid(int n) { return StructuredGrid(n); }

void write_field_csv(std::ostream& os, const ScalarField& field) {
    const auto& g = field.grid();
    os << "i,j,k,x,y,z,value\n";
    for (int k = 0; k < g.n(); ++k)
        for (int j = 0; j < g.n(); ++j)
            for (int i = 0; i < g.n(); ++i)
                os << i << ',' << j << ',' << k << ',' << io::fmt17(g.center(i)) << ','
                   << io::fmt17(g.center(j)) << ',' << io::fmt17(g.center(k)) << ','
                   << io::fmt17(field(i, j, k)) << '\n';
}

void write_field_csv(const std::string& path, const ScalarField& field) {
    std::ostringstream ss;
    write_field_csv(ss, field);
    io::write_file(path, ss.str());
}

ScalarField read_field_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || io::trim(line) != "i,j,k,x,y,z,value")
        throw FormatError("field CSV: bad header");
    std::vector<double> values;
    while (std::getline(is, line)) {
        if (io::trim(line).empty()) continue;
        const auto cols = io::split(line, ',');
        if (cols.size() != 7) throw FormatError("field CSV: expected 7 columns");
        values.push_back(io::parse_double(cols[6]));
    }
    const int n = static_cast<int>(std::lround(std::cbrt(static_cast<double>(values.size()))));
    if (static_cast<std::size_t>(n) * n * n != values.size())
        throw FormatError("field CSV: row count is not a cube");
    StructuredGrid grid(n);
    return ScalarField(grid, Eigen::Map<Eigen::VectorXd>(values.data(), values.size()));
}

ScalarField read_field_csv(const std::string& path) {
    std::istringstream ss(io::read_file(path));
    return read_field_csv(ss);
}

void write_array_csv(std::ostream& os, const Array2d& array) {
    os << "a,b,value\n";
    for (Eigen::Index b = 0; b < array.cols(); ++b)
        for (Eigen::Index a = 0; a < array.rows(); ++a)
            os << a << ',' << b << ',' << io::fmt17(array(a, b)) << '\n';
}

void write_array_csv(const std::string& path, const Array2d& array) {
    std::ostringstream ss;
    write_array_csv(ss, array);
    io::write_file(path, ss.str());
}

Array2d read_array_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || io::trim(line) != "a,b,value")
        throw FormatError("array CSV: bad header");
    std::vector<std::array<double, 3>> rows;
    Eigen::Index na = 0, nb = 0;
    while (std::getline(is, line)) {
        if (io::trim(line).empty()) continue;
        const auto cols = io::split(line, ',');
        if (cols.size() != 3) throw FormatError("array CSV: expected 3 columns");
        const auto a = io::parse_int(cols[0]);
        const auto b = io::parse_int(cols[1]);
        if (a < 0 || b < 0) throw FormatError("array CSV: negative index");
        na = std::max<Eigen::Index>(na, a + 1);
        nb = std::max<Eigen::Index>(nb, b + 1);
        rows.push_back({static_cast<double>(a), static_cast<double>(b), io::parse_double(cols[2])});
    }
    if (static_cast<std::size_t>(na * nb) != rows.size())
        throw FormatError("array CSV: incomplete array");
    Array2d out(na, nb);
    for (const auto& r : rows)
        out(static_cast<Eigen::Index>(r[0]), static_cast<Eigen::Index>(r[1])) = r[2];
    return out;
}

Array2d read_array_csv(const std::string& path) {
    std::istringstream ss(io::read_file(path));
    return read_array_csv(ss);
}

}  // namespace convect_uq
