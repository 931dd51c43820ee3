#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "convect_uq/error.hpp"

namespace convect_uq {

/// Counter-based generator: output k of stream s is a SplitMix64-style hash of
/// (seed, s, k). Streams are independent and any draw can be regenerated alone.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

    static std::uint64_t hash(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter);

    std::uint64_t next_u64() { return hash(seed_, stream_, counter_++); }
    /// Uniform on the open interval (0, 1).
    double uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }
    /// Uniform integer in [0, bound).
    std::uint64_t below(std::uint64_t bound);

    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
};

struct NormalMarginal {
    double mean = 0.0;
    double stddev = 1.0;
};

/// Rows are samples, columns stochastic dimensions.
struct SampleMatrix {
    Eigen::MatrixXd values;
    /// Empty for uniform (0, 1) samples.
    std::vector<NormalMarginal> marginals;
    std::uint64_t seed = 0;
    std::string kind = "lhs";

    Eigen::Index rows() const { return values.rows(); }
    Eigen::Index cols() const { return values.cols(); }
};

SampleMatrix latin_hypercube(int n_samples, int dims, std::uint64_t seed);

double normal_cdf(double z);
double normal_inverse_cdf(double p);

/// Maps uniform (0, 1) samples through the inverse normal CDF of each marginal.
SampleMatrix to_normal(const SampleMatrix& uniform, const std::vector<NormalMarginal>& marginals);

/// i.i.d. draws for plain Monte Carlo, inverse-CDF transformed from stream j per column.
SampleMatrix normal_samples(int n_samples, const std::vector<NormalMarginal>& marginals,
                            std::uint64_t seed);

/// Probabilists' Hermite polynomial He_n by the three-term recurrence.
template <typename Scalar>
Scalar hermite_he(int n, Scalar x) {
    if (n == 0) return Scalar(1);
    Scalar prev(1), cur = x;
    for (int k = 1; k < n; ++k) {
        Scalar next = x * cur - Scalar(k) * prev;
        prev = cur;
        cur = next;
    }
    return cur;
}

template <typename Scalar>
struct QuadratureRule1D {
    int level = 0;
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> nodes;
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> weights;
};

/// Gauss rule for the standard normal weight, weights summing to one.
QuadratureRule1D<double> gauss_hermite(int level);

/// level^dims points, entry (r, j) = means[j] + sigmas[j] * node; the last
/// dimension varies fastest.
SampleMatrix tensor_grid(int level, int dims, const std::vector<double>& means,
                         const std::vector<double>& sigmas);

/// CSV with a `#` metadata line, then `sample_id,xi_1,...,xi_d`.
void write_sample_csv(std::ostream& os, const SampleMatrix& samples);
void write_sample_csv(const std::string& path, const SampleMatrix& samples);
SampleMatrix read_sample_csv(std::istream& is);
SampleMatrix read_sample_csv(const std::string& path);

}  // namespace convect_uq
