#pragma once

// Independent reference computations shared by the unit and acceptance tests.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "convect_uq/dnn.hpp"
#include "convect_uq/sampling.hpp"
#include "convect_uq/uq.hpp"

namespace oracles {

using convect_uq::MlpNetwork;

/// Random network with layers of the given sizes, weights uniform in (-1, 1).
inline MlpNetwork random_network(const std::vector<int>& sizes, std::mt19937_64& gen) {
    std::uniform_real_distribution<double> ud(-1.0, 1.0);
    MlpNetwork net = MlpNetwork::zeros(sizes);
    for (int l = 0; l < net.layers(); ++l) {
        net.weights[l] = net.weights[l].unaryExpr([&](double) { return ud(gen); });
        net.biases[l] = net.biases[l].unaryExpr([&](double) { return 0.5 * ud(gen); });
    }
    return net;
}

/// Smallest |pre-activation| of any rectifier unit over the batch.
inline double kink_distance(const MlpNetwork& net, const Eigen::MatrixXd& inputs) {
    const auto pass = convect_uq::forward_batch(net, Eigen::MatrixXd(inputs.transpose()));
    double d = std::numeric_limits<double>::infinity();
    for (int l = 0; l < net.layers(); ++l)
        if (net.activations[l] == convect_uq::Activation::Relu)
            d = std::min(d, pass.preactivations[l].cwiseAbs().minCoeff());
    return d;
}

struct GradientCheck {
    double max_relative_error = 0.0;
    bool away_from_kinks = true;
};

/// Copy of a network in another scalar type.
template <typename To, typename From>
convect_uq::MlpNetworkT<To> cast_network(const convect_uq::MlpNetworkT<From>& net) {
    auto out = convect_uq::MlpNetworkT<To>::zeros(net.sizes);
    for (int l = 0; l < net.layers(); ++l) {
        out.weights[l] = net.weights[l].template cast<To>();
        out.biases[l] = net.biases[l].template cast<To>();
        out.activations[l] = net.activations[l];
    }
    return out;
}

/// Central differences of the unregularised loss, step 1e-6, against backprop.
/// The differences are taken in long double so that cancellation in the loss
/// does not swamp small derivatives. The relative error of each entry is
/// |a - b| / max(|a| + |b|, 1e-6) so that entries whose true derivative
/// vanishes are judged on an absolute scale.
inline GradientCheck gradient_check(const MlpNetwork& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& z,
                                    long double step = 1e-6L) {
    using Wide = long double;
    using WideMatrix = Eigen::Matrix<Wide, Eigen::Dynamic, Eigen::Dynamic>;
    GradientCheck out;
    out.away_from_kinks = kink_distance(net, x) > 1e-4;
    const auto g = convect_uq::backprop(net, x, z);
    auto wide = cast_network<Wide>(net);
    const WideMatrix xw = x.cast<Wide>(), zw = z.cast<Wide>();
    auto rel = [](double a, double b) { return std::abs(a - b) / std::max(std::abs(a) + std::abs(b), 1e-6); };
    auto fd = [&](Wide& p) {
        const Wide keep = p;
        p = keep + step;
        const Wide up = convect_uq::loss(wide, xw, zw, Wide(0));
        p = keep - step;
        const Wide down = convect_uq::loss(wide, xw, zw, Wide(0));
        p = keep;
        return static_cast<double>((up - down) / (2 * step));
    };
    for (int l = 0; l < net.layers(); ++l) {
        for (Eigen::Index i = 0; i < net.weights[l].size(); ++i)
            out.max_relative_error =
                std::max(out.max_relative_error, rel(fd(wide.weights[l].data()[i]), g.weights[l].data()[i]));
        for (Eigen::Index i = 0; i < net.biases[l].size(); ++i)
            out.max_relative_error = std::max(out.max_relative_error, rel(fd(wide.biases[l][i]), g.biases[l][i]));
    }
    return out;
}

/// Draws a random network (2 to 5 layers, widths up to 8) and a batch placed
/// at least 1e-4 away from every rectifier kink; returns the gradient check.
inline GradientCheck random_gradient_check(std::mt19937_64& gen) {
    std::uniform_int_distribution<int> layers(2, 5), width(1, 8);
    std::normal_distribution<double> nd;
    for (;;) {
        std::vector<int> sizes(static_cast<std::size_t>(layers(gen)));
        for (auto& s : sizes) s = width(gen);
        const MlpNetwork net = random_network(sizes, gen);
        const int m = 1 + width(gen) / 2;
        Eigen::MatrixXd x(m, sizes.front()), z(m, sizes.back());
        for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = nd(gen);
        for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = nd(gen);
        if (kink_distance(net, x) <= 1e-4) continue;
        return gradient_check(net, x, z);
    }
}

/// Mean of the surrogate f(x) = x1 + x2^2 over independent N(0, 1) inputs is 1.
inline double analytic_mean_error(int n, std::uint64_t seed) {
    const auto stats = convect_uq::monte_carlo_stats(
        [](const Eigen::MatrixXd& x) {
            Eigen::MatrixXd y(x.rows(), 1);
            y.col(0) = x.col(0).array() + x.col(1).array().square();
            return y;
        },
        {{0.0, 1.0}, {0.0, 1.0}}, n, seed);
    return std::abs(stats.mean[0] - 1.0);
}

/// Least-squares slope of log RMS error against log n, the RMS taken over
/// independent seeds at each n.
inline double mc_error_slope(const std::vector<int>& ns, int trials) {
    Eigen::VectorXd lx(static_cast<Eigen::Index>(ns.size())), ly(lx.size());
    for (std::size_t i = 0; i < ns.size(); ++i) {
        double sq = 0.0;
        for (int t = 0; t < trials; ++t) {
            const double e = analytic_mean_error(ns[i], 1000 + 7919 * static_cast<std::uint64_t>(t) + i);
            sq += e * e;
        }
        lx[static_cast<Eigen::Index>(i)] = std::log(static_cast<double>(ns[i]));
        ly[static_cast<Eigen::Index>(i)] = 0.5 * std::log(sq / trials);
    }
    const double mx = lx.mean(), my = ly.mean();
    return ((lx.array() - mx) * (ly.array() - my)).sum() / (lx.array() - mx).square().sum();
}

/// Jansen estimator of both total Sobol indices of f = x1 + x1 x2 over
/// independent standard normal inputs (exact values 1 and 1/2).
inline Eigen::Vector2d jansen_total_sobol(int n, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> nd;
    auto f = [](double a, double b) { return a + a * b; };
    double sum = 0.0, sum_sq = 0.0;
    Eigen::Vector2d acc = Eigen::Vector2d::Zero();
    for (int i = 0; i < n; ++i) {
        const double a1 = nd(gen), a2 = nd(gen), b1 = nd(gen), b2 = nd(gen);
        const double fa = f(a1, a2);
        sum += fa;
        sum_sq += fa * fa;
        acc[0] += std::pow(fa - f(b1, a2), 2);
        acc[1] += std::pow(fa - f(a1, b2), 2);
    }
    const double var = sum_sq / n - std::pow(sum / n, 2);
    return acc / (2.0 * n * var);
}

/// Smooth stand-in for a strip-wall response: each of `outputs` entries
/// depends on the four strip temperatures through a distance-weighted sum and
/// a mild quadratic interaction, as a wall field would.
inline Eigen::MatrixXd strip_response(const Eigen::MatrixXd& temps, int outputs) {
    Eigen::MatrixXd y(temps.rows(), outputs);
    for (Eigen::Index r = 0; r < temps.rows(); ++r)
        for (int k = 0; k < outputs; ++k) {
            const double pos = (k + 0.5) / outputs;
            double acc = 1.0;
            for (int s = 0; s < temps.cols(); ++s) {
                const double centre = (s + 0.5) / temps.cols();
                const double w = std::exp(-std::pow((pos - centre) / 0.2, 2));
                acc += 5.0 * w * (temps(r, s) - 1.0);
            }
            const double d = temps(r, 0) - temps(r, temps.cols() - 1);
            y(r, k) = acc + 200.0 * d * d * pos;
        }
    return y;
}

}  // namespace oracles
