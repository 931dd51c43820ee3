#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "convect_uq/error.hpp"

namespace convect_uq {

enum class Activation { Relu, Identity };

template <typename Scalar>
struct Standardizer {
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    Vector mean;
    Vector stddev;

    bool empty() const { return mean.size() == 0; }

    /// Rows are samples.
    template <typename Derived>
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> apply(const Eigen::MatrixBase<Derived>& rows) const {
        if (empty()) return rows;
        return (rows.rowwise() - mean.transpose()).array().rowwise() / stddev.transpose().array();
    }
    template <typename Derived>
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> invert(const Eigen::MatrixBase<Derived>& rows) const {
        if (empty()) return rows;
        return (rows.array().rowwise() * stddev.transpose().array()).matrix().rowwise() + mean.transpose();
    }

    /// Column mean and population std; a column with zero spread keeps std 1.
    static Standardizer fit(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& rows) {
        Standardizer s;
        s.mean = rows.colwise().mean().transpose();
        s.stddev = ((rows.rowwise() - s.mean.transpose()).array().square().colwise().mean().sqrt()).transpose();
        for (Eigen::Index j = 0; j < s.stddev.size(); ++j)
            if (!(s.stddev[j] > Scalar(1e-300))) s.stddev[j] = Scalar(1);
        return s;
    }
};

/// Fully connected network; layer l maps sizes[l] -> sizes[l+1] with
/// weights[l] of shape sizes[l+1] x sizes[l]. Hidden layers use the rectifier,
/// the output layer the identity.
template <typename Scalar>
struct MlpNetworkT {
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    std::vector<int> sizes;
    std::vector<Matrix> weights;
    std::vector<Vector> biases;
    std::vector<Activation> activations;
    Standardizer<Scalar> input_scaling;
    Standardizer<Scalar> output_scaling;

    int layers() const { return static_cast<int>(weights.size()); }
    int inputs() const { return sizes.front(); }
    int outputs() const { return sizes.back(); }

    static MlpNetworkT zeros(const std::vector<int>& layer_sizes) {
        if (layer_sizes.size() < 2) throw ShapeError("a network needs at least an input and an output layer");
        MlpNetworkT net;
        net.sizes = layer_sizes;
        for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
            if (layer_sizes[l] < 1 || layer_sizes[l + 1] < 1) throw ShapeError("layer sizes must be positive");
            net.weights.push_back(Matrix::Zero(layer_sizes[l + 1], layer_sizes[l]));
            net.biases.push_back(Vector::Zero(layer_sizes[l + 1]));
            net.activations.push_back(l + 2 == layer_sizes.size() ? Activation::Identity : Activation::Relu);
        }
        return net;
    }

    bool all_finite() const {
        for (int l = 0; l < layers(); ++l)
            if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
        return true;
    }
};

using MlpNetwork = MlpNetworkT<double>;

/// Layer values of one forward pass; columns are samples. values[0] is the input.
template <typename Scalar>
struct ForwardPass {
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    std::vector<Matrix> values;
    std::vector<Matrix> preactivations;

    const Matrix& output() const { return values.back(); }
};

template <typename Scalar>
ForwardPass<Scalar> forward_batch(const MlpNetworkT<Scalar>& net,
                                  const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& x) {
    if (x.rows() != net.inputs()) throw ShapeError("input size does not match the network");
    ForwardPass<Scalar> pass;
    pass.values.push_back(x);
    for (int l = 0; l < net.layers(); ++l) {
        auto z = ((net.weights[l] * pass.values.back()).colwise() + net.biases[l]).eval();
        pass.preactivations.push_back(z);
        if (net.activations[l] == Activation::Relu) z = z.cwiseMax(Scalar(0));
        pass.values.push_back(std::move(z));
    }
    return pass;
}

template <typename Scalar>
ForwardPass<Scalar> forward(const MlpNetworkT<Scalar>& net, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& x) {
    return forward_batch(net, Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>(x));
}

template <typename Scalar>
Scalar weight_penalty(const MlpNetworkT<Scalar>& net) {
    Scalar s(0);
    for (const auto& w : net.weights) s += w.squaredNorm();
    return s;
}

/// Mean over samples of the squared error norm plus lambda times the squared
/// Frobenius norms of the weights. Inputs and targets are rows per sample, in
/// the network's working (standardised) units.
template <typename Scalar>
Scalar loss(const MlpNetworkT<Scalar>& net, const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& inputs,
            const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& targets, Scalar lambda) {
    if (inputs.rows() == 0) throw ShapeError("loss needs at least one sample");
    if (inputs.rows() != targets.rows()) throw ShapeError("input and target row counts differ");
    const auto pass = forward_batch(net, Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>(inputs.transpose()));
    const Scalar mse = (pass.output() - targets.transpose()).squaredNorm() / Scalar(inputs.rows());
    return mse + lambda * weight_penalty(net);
}

template <typename Scalar>
struct Gradients {
    std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> weights;
    std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> biases;
};

/// Exact gradient of the unregularised mean squared error over the batch.
/// The rectifier derivative at exactly zero is taken as zero.
template <typename Scalar>
Gradients<Scalar> backprop(const MlpNetworkT<Scalar>& net,
                           const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& inputs,
                           const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& targets) {
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    if (inputs.rows() != targets.rows()) throw ShapeError("input and target row counts differ");
    if (targets.cols() != net.outputs()) throw ShapeError("target size does not match the network");
    const auto pass = forward_batch(net, Matrix(inputs.transpose()));
    const Scalar m = Scalar(inputs.rows());
    Gradients<Scalar> g;
    g.weights.resize(net.layers());
    g.biases.resize(net.layers());
    Matrix delta = (Scalar(2) / m) * (pass.output() - targets.transpose());
    for (int l = net.layers() - 1; l >= 0; --l) {
        if (net.activations[l] == Activation::Relu)
            delta = delta.cwiseProduct(
                pass.preactivations[l].unaryExpr([](Scalar v) { return v > Scalar(0) ? Scalar(1) : Scalar(0); }));
        g.weights[l] = delta * pass.values[l].transpose();
        g.biases[l] = delta.rowwise().sum();
        if (l > 0) delta = net.weights[l].transpose() * delta;
    }
    return g;
}

struct TrainConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    bool amsgrad = true;
    double epsilon = 1e-8;
    double lambda = 0.0;
    int epochs = 100;
    /// <= 0 means full batch
    int batch_size = 32;
    std::uint64_t seed = 1;

    void validate() const;
};

/// Per-parameter Adam moments; one block per weight matrix and bias vector.
struct AdamState {
    std::vector<Eigen::MatrixXd> m, v, v_max;
    long t = 0;

    static AdamState for_network(const MlpNetwork& net);
};

/// One Adam update of a single parameter block.
void adam_update(Eigen::Ref<Eigen::MatrixXd> param, const Eigen::Ref<const Eigen::MatrixXd>& grad,
                 Eigen::MatrixXd& m, Eigen::MatrixXd& v, Eigen::MatrixXd& v_max, long t, const TrainConfig& config);

/// Bias-corrected Adam step over all network parameters (amsgrad optional).
void adam_step(AdamState& state, MlpNetwork& net, const Gradients<double>& grads, const TrainConfig& config);

/// He-style initialisation: N(0, 2/fan_in) weights from a seeded counter RNG, zero biases.
MlpNetwork make_network(const std::vector<int>& sizes, std::uint64_t seed);

/// Rows are samples.
struct Dataset {
    Eigen::MatrixXd inputs;
    Eigen::MatrixXd targets;

    Eigen::Index size() const { return inputs.rows(); }
    void validate() const;
};

struct TrainHistory {
    std::vector<double> train_loss;
    std::vector<double> validation_loss;
};

struct TrainResult {
    MlpNetwork network;
    TrainHistory history;
};

/// Trains on sets already in working units. Shuffles each epoch with the seed.
TrainResult train(MlpNetwork net, const Dataset& train_set, const Dataset& validation_set,
                  const TrainConfig& config);

/// Physical-units prediction (rows are samples) through the stored scalings.
Eigen::MatrixXd predict(const MlpNetwork& net, const Eigen::MatrixXd& inputs);

/// 100 * mean|true - predicted| / max|true|.
double relative_average_percent_error(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& predicted);

struct NetworkPreset {
    std::string name;
    double lambda;
    int hidden_layers;
    int width;
};

/// Per-output presets: "full" uses 300-wide layers, "desk" 4 x 32 for CI.
/// Quantities: nu, theta, u, v.
NetworkPreset network_preset(const std::string& quantity, const std::string& scale);

void write_network(std::ostream& os, const MlpNetwork& net);
void write_network(const std::string& path, const MlpNetwork& net);
MlpNetwork read_network(std::istream& is);
MlpNetwork read_network(const std::string& path);

}  // namespace convect_uq
