#include "convect_uq/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "convect_uq/io.hpp"

namespace convect_uq {

std::uint64_t CounterRng::hash(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
    auto mix = [](std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    std::uint64_t key = mix(seed + 0x9e3779b97f4a7c15ULL);
    key = mix(key ^ (stream * 0xd1b54a32d192ed03ULL + 0x8cb92ba72f3d8dd7ULL));
    return mix(key + counter * 0x9e3779b97f4a7c15ULL);
}

std::uint64_t CounterRng::below(std::uint64_t bound) {
    const unsigned __int128 product = static_cast<unsigned __int128>(next_u64()) * bound;
    return static_cast<std::uint64_t>(product >> 64);
}

SampleMatrix latin_hypercube(int n_samples, int dims, std::uint64_t seed) {
    if (n_samples < 1 || dims < 1) throw DomainError("latin_hypercube needs n_samples >= 1 and dims >= 1");
    SampleMatrix out;
    out.values.resize(n_samples, dims);
    out.seed = seed;
    out.kind = "lhs";
    std::vector<int> perm(n_samples);
    for (int j = 0; j < dims; ++j) {
        CounterRng rng(seed, static_cast<std::uint64_t>(j));
        std::iota(perm.begin(), perm.end(), 0);
        for (int i = n_samples - 1; i > 0; --i)
            std::swap(perm[i], perm[rng.below(static_cast<std::uint64_t>(i) + 1)]);
        for (int i = 0; i < n_samples; ++i)
            out.values(i, j) = (perm[i] + rng.uniform()) / n_samples;
    }
    return out;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

namespace {

// Acklam's rational approximation followed by one Halley step; valid for p <= 0.5.
double lower_tail_quantile(double p) {
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01, -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    double x;
    if (p < 0.02425) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    }
    const double e = normal_cdf(x) - p;
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
    return x - u / (1.0 + 0.5 * x * u);
}

}  // namespace

double normal_inverse_cdf(double p) {
    if (!(p > 0.0 && p < 1.0)) throw DomainError("normal_inverse_cdf needs p in (0, 1)");
    if (p == 0.5) return 0.0;
    // 1 - p is exact for p >= 0.5
    return p < 0.5 ? lower_tail_quantile(p) : -lower_tail_quantile(1.0 - p);
}

SampleMatrix to_normal(const SampleMatrix& uniform, const std::vector<NormalMarginal>& marginals) {
    if (static_cast<Eigen::Index>(marginals.size()) != uniform.cols())
        throw ShapeError("one marginal per sample column is required");
    SampleMatrix out = uniform;
    out.marginals = marginals;
    for (Eigen::Index j = 0; j < uniform.cols(); ++j)
        for (Eigen::Index i = 0; i < uniform.rows(); ++i)
            out.values(i, j) = marginals[j].mean + marginals[j].stddev * normal_inverse_cdf(uniform.values(i, j));
    return out;
}

SampleMatrix normal_samples(int n_samples, const std::vector<NormalMarginal>& marginals,
                            std::uint64_t seed) {
    if (n_samples < 1) throw DomainError("normal_samples needs n_samples >= 1");
    SampleMatrix out;
    out.values.resize(n_samples, static_cast<Eigen::Index>(marginals.size()));
    out.marginals = marginals;
    out.seed = seed;
    out.kind = "mc";
    for (std::size_t j = 0; j < marginals.size(); ++j) {
        CounterRng rng(seed, j);
        for (int i = 0; i < n_samples; ++i)
            out.values(i, static_cast<Eigen::Index>(j)) =
                marginals[j].mean + marginals[j].stddev * normal_inverse_cdf(rng.uniform());
    }
    return out;
}

QuadratureRule1D<double> gauss_hermite(int level) {
    if (level < 1 || level > 64) throw DomainError("Gauss-Hermite level must be in [1, 64]");
    // Newton on the orthonormal physicists' recurrence, then rescale to the
    // standard normal weight: x = sqrt(2) t, w = w_t / sqrt(pi).
    const int n = level;
    const int m = (n + 1) / 2;
    const double pim4 = 1.0 / std::pow(std::numbers::pi, 0.25);
    std::vector<double> t(n), wt(n);
    double z = 0.0;
    for (int i = 0; i < m; ++i) {
        if (i == 0)
            z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -0.16667);
        else if (i == 1)
            z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
        else if (i == 2)
            z = 1.86 * z - 0.86 * t[0];
        else if (i == 3)
            z = 1.91 * z - 0.91 * t[1];
        else
            z = 2.0 * z - t[i - 2];
        double pp = 0.0;
        bool converged = false;
        for (int iter = 0; iter < 100; ++iter) {
            double p1 = pim4, p2 = 0.0;
            for (int j = 1; j <= n; ++j) {
                const double p3 = p2;
                p2 = p1;
                p1 = z * std::sqrt(2.0 / j) * p2 - std::sqrt(static_cast<double>(j - 1) / j) * p3;
            }
            pp = std::sqrt(2.0 * n) * p2;
            const double z1 = z;
            z = z1 - p1 / pp;
            if (std::abs(z - z1) <= 1e-15 * std::max(1.0, std::abs(z))) {
                converged = true;
                // one more evaluation at the converged root for the weight
                p1 = pim4;
                p2 = 0.0;
                for (int j = 1; j <= n; ++j) {
                    const double p3 = p2;
                    p2 = p1;
                    p1 = z * std::sqrt(2.0 / j) * p2 - std::sqrt(static_cast<double>(j - 1) / j) * p3;
                }
                pp = std::sqrt(2.0 * n) * p2;
                break;
            }
        }
        if (!converged) throw Error("Gauss-Hermite Newton iteration failed to converge");
        t[i] = z;
        t[n - 1 - i] = -z;
        wt[i] = wt[n - 1 - i] = 2.0 / (pp * pp);
    }
    QuadratureRule1D<double> rule;
    rule.level = level;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        // ascending order
        rule.nodes[i] = std::numbers::sqrt2 * t[n - 1 - i];
        rule.weights[i] = wt[n - 1 - i] / std::sqrt(std::numbers::pi);
    }
    if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
    return rule;
}

SampleMatrix tensor_grid(int level, int dims, const std::vector<double>& means,
                         const std::vector<double>& sigmas) {
    if (dims < 1 || dims > 4) throw SizeError("tensor grids are limited to 1..4 dimensions");
    if (static_cast<int>(means.size()) != dims || static_cast<int>(sigmas.size()) != dims)
        throw ShapeError("means and sigmas must have one entry per dimension");
    const double count = std::pow(static_cast<double>(level), dims);
    if (count > 1e6) throw SizeError("tensor grid would have more than 1e6 points");
    const auto rule = gauss_hermite(level);
    const Eigen::Index rows = static_cast<Eigen::Index>(std::llround(count));
    SampleMatrix out;
    out.values.resize(rows, dims);
    out.kind = "tensor";
    for (int j = 0; j < dims; ++j) out.marginals.push_back({means[j], sigmas[j]});
    for (Eigen::Index r = 0; r < rows; ++r) {
        Eigen::Index rem = r;
        for (int j = dims - 1; j >= 0; --j) {
            const auto idx = rem % level;
            rem /= level;
            out.values(r, j) = means[j] + sigmas[j] * rule.nodes[idx];
        }
    }
    return out;
}

void write_sample_csv(std::ostream& os, const SampleMatrix& samples) {
    os << "# kind=" << samples.kind << " seed=" << samples.seed << " marginals=";
    if (samples.marginals.empty()) os << "uniform";
    for (std::size_t j = 0; j < samples.marginals.size(); ++j) {
        if (j) os << '|';
        os << "normal(" << io::fmt17(samples.marginals[j].mean) << ';'
           << io::fmt17(samples.marginals[j].stddev) << ')';
    }
    os << "\nsample_id";
    for (Eigen::Index j = 0; j < samples.cols(); ++j) os << ",xi_" << (j + 1);
    os << '\n';
    for (Eigen::Index i = 0; i < samples.rows(); ++i) {
        os << i;
        for (Eigen::Index j = 0; j < samples.cols(); ++j) os << ',' << io::fmt17(samples.values(i, j));
        os << '\n';
    }
}

void write_sample_csv(const std::string& path, const SampleMatrix& samples) {
    std::ostringstream ss;
    write_sample_csv(ss, samples);
    io::write_file(path, ss.str());
}

SampleMatrix read_sample_csv(std::istream& is) {
    SampleMatrix out;
    std::string line;
    if (!std::getline(is, line) || line.rfind("# ", 0) != 0) throw FormatError("sample CSV: missing metadata line");
    for (const auto& token : io::split(line.substr(2), ' ')) {
        const auto eq = token.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = token.substr(0, eq), value = token.substr(eq + 1);
        if (key == "kind") out.kind = value;
        else if (key == "seed") out.seed = std::stoull(value);
        else if (key == "marginals" && value != "uniform") {
            for (const auto& m : io::split(value, '|')) {
                if (m.rfind("normal(", 0) != 0 || m.back() != ')') throw FormatError("sample CSV: bad marginal " + m);
                const auto parts = io::split(m.substr(7, m.size() - 8), ';');
                if (parts.size() != 2) throw FormatError("sample CSV: bad marginal " + m);
                out.marginals.push_back({io::parse_double(parts[0]), io::parse_double(parts[1])});
            }
        }
    }
    if (!std::getline(is, line)) throw FormatError("sample CSV: missing header");
    const auto header = io::split(io::trim(line), ',');
    if (header.empty() || header[0] != "sample_id") throw FormatError("sample CSV: bad header");
    const auto dims = static_cast<Eigen::Index>(header.size() - 1);
    std::vector<std::vector<double>> rows;
    while (std::getline(is, line)) {
        if (io::trim(line).empty()) continue;
        const auto cols = io::split(io::trim(line), ',');
        if (static_cast<Eigen::Index>(cols.size()) != dims + 1) throw FormatError("sample CSV: ragged row");
        if (io::parse_int(cols[0]) != static_cast<long long>(rows.size()))
            throw FormatError("sample CSV: sample ids must be dense and ordered");
        std::vector<double> row;
        for (Eigen::Index j = 0; j < dims; ++j) row.push_back(io::parse_double(cols[j + 1]));
        rows.push_back(std::move(row));
    }
    out.values.resize(static_cast<Eigen::Index>(rows.size()), dims);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (Eigen::Index j = 0; j < dims; ++j) out.values(static_cast<Eigen::Index>(i), j) = rows[i][j];
    return out;
}

SampleMatrix read_sample_csv(const std::string& path) {
    std::istringstream ss(io::read_file(path));
    return read_sample_csv(ss);
}

}  // namespace convect_uq
