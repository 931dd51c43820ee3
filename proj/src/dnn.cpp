#include "convect_uq/dnn.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "convect_uq/io.hpp"
#include "convect_uq/sampling.hpp"

namespace convect_uq {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw DomainError("learning_rate must be positive");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
        throw DomainError("beta1 and beta2 must lie in (0, 1)");
    if (!(epsilon > 0.0)) throw DomainError("epsilon must be positive");
    if (lambda < 0.0) throw DomainError("lambda must be non-negative");
    if (epochs < 1) throw DomainError("epochs must be >= 1");
}

AdamState AdamState::for_network(const MlpNetwork& net) {
    AdamState s;
    for (int l = 0; l < net.layers(); ++l) {
        for (const auto& shape : {std::pair{net.weights[l].rows(), net.weights[l].cols()},
                                  std::pair{net.biases[l].rows(), Eigen::Index{1}}}) {
            s.m.push_back(Eigen::MatrixXd::Zero(shape.first, shape.second));
            s.v.push_back(Eigen::MatrixXd::Zero(shape.first, shape.second));
            s.v_max.push_back(Eigen::MatrixXd::Zero(shape.first, shape.second));
        }
    }
    return s;
}

void adam_update(Eigen::Ref<Eigen::MatrixXd> param, const Eigen::Ref<const Eigen::MatrixXd>& grad,
                 Eigen::MatrixXd& m, Eigen::MatrixXd& v, Eigen::MatrixXd& v_max, long t, const TrainConfig& config) {
    if (param.rows() != grad.rows() || param.cols() != grad.cols()) throw ShapeError("gradient shape mismatch");
    m = config.beta1 * m + (1.0 - config.beta1) * grad;
    v = config.beta2 * v + (1.0 - config.beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
    const Eigen::MatrixXd v_hat = v / c2;
    if (config.amsgrad) {
        v_max = v_max.cwiseMax(v_hat);
        param.array() -= config.learning_rate * (m.array() / c1) / (v_max.array().sqrt() + config.epsilon);
    } else {
        param.array() -= config.learning_rate * (m.array() / c1) / (v_hat.array().sqrt() + config.epsilon);
    }
}

void adam_step(AdamState& state, MlpNetwork& net, const Gradients<double>& grads, const TrainConfig& config) {
    if (static_cast<int>(grads.weights.size()) != net.layers()) throw ShapeError("gradient layer count mismatch");
    if (state.m.size() != 2 * static_cast<std::size_t>(net.layers())) state = AdamState::for_network(net);
    ++state.t;
    for (int l = 0; l < net.layers(); ++l) {
        adam_update(net.weights[l], grads.weights[l], state.m[2 * l], state.v[2 * l], state.v_max[2 * l], state.t,
                    config);
        adam_update(net.biases[l], grads.biases[l], state.m[2 * l + 1], state.v[2 * l + 1],
                    state.v_max[2 * l + 1], state.t, config);
    }
}

MlpNetwork make_network(const std::vector<int>& sizes, std::uint64_t seed) {
    MlpNetwork net = MlpNetwork::zeros(sizes);
    for (int l = 0; l < net.layers(); ++l) {
        CounterRng rng(seed, static_cast<std::uint64_t>(l));
        const double stddev = std::sqrt(2.0 / sizes[l]);
        auto& w = net.weights[l];
        for (Eigen::Index c = 0; c < w.cols(); ++c)
            for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = stddev * normal_inverse_cdf(rng.uniform());
    }
    return net;
}

void Dataset::validate() const {
    if (inputs.rows() != targets.rows()) throw ShapeError("dataset input and target row counts differ");
    if (inputs.rows() == 0) throw ShapeError("dataset is empty");
}

TrainResult train(MlpNetwork net, const Dataset& train_set, const Dataset& validation_set,
                  const TrainConfig& config) {
    config.validate();
    train_set.validate();
    if (train_set.inputs.cols() != net.inputs() || train_set.targets.cols() != net.outputs())
        throw ShapeError("training set does not match the network shape");
    const bool has_validation = validation_set.size() > 0;
    if (has_validation) validation_set.validate();

    const Eigen::Index m = train_set.size();
    const Eigen::Index batch = config.batch_size <= 0 ? m : std::min<Eigen::Index>(config.batch_size, m);
    AdamState adam = AdamState::for_network(net);
    TrainResult result;
    std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        CounterRng rng(config.seed, static_cast<std::uint64_t>(epoch));
        for (Eigen::Index i = m - 1; i > 0; --i)
            std::swap(order[i], order[rng.below(static_cast<std::uint64_t>(i) + 1)]);

        for (Eigen::Index start = 0; start < m; start += batch) {
            const Eigen::Index count = std::min(batch, m - start);
            Eigen::MatrixXd xb(count, train_set.inputs.cols()), zb(count, train_set.targets.cols());
            for (Eigen::Index r = 0; r < count; ++r) {
                xb.row(r) = train_set.inputs.row(order[start + r]);
                zb.row(r) = train_set.targets.row(order[start + r]);
            }
            auto grads = backprop(net, xb, zb);
            if (config.lambda > 0.0)
                for (int l = 0; l < net.layers(); ++l) grads.weights[l] += 2.0 * config.lambda * net.weights[l];
            adam_step(adam, net, grads, config);
        }

        const double train_loss = loss(net, train_set.inputs, train_set.targets, config.lambda);
        const double val_loss = has_validation
                                    ? loss(net, validation_set.inputs, validation_set.targets, config.lambda)
                                    : 0.0;
        if (!std::isfinite(train_loss) || !std::isfinite(val_loss) || !net.all_finite())
            throw TrainingDivergenceError("training diverged at epoch " + std::to_string(epoch + 1), epoch + 1);
        result.history.train_loss.push_back(train_loss);
        result.history.validation_loss.push_back(val_loss);
    }
    result.network = std::move(net);
    return result;
}

Eigen::MatrixXd predict(const MlpNetwork& net, const Eigen::MatrixXd& inputs) {
    const Eigen::MatrixXd x = net.input_scaling.apply(inputs);
    const auto pass = forward_batch(net, Eigen::MatrixXd(x.transpose()));
    return net.output_scaling.invert(Eigen::MatrixXd(pass.output().transpose()));
}

double relative_average_percent_error(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& predicted) {
    if (truth.rows() != predicted.rows() || truth.cols() != predicted.cols())
        throw ShapeError("metric needs matrices of equal shape");
    if (truth.size() == 0) throw UndefinedMetricError("metric of an empty matrix is undefined");
    const double scale = truth.cwiseAbs().maxCoeff();
    if (!(scale > 0.0)) throw UndefinedMetricError("metric is undefined for an all-zero reference");
    return 100.0 * (truth - predicted).cwiseAbs().mean() / scale;
}

NetworkPreset network_preset(const std::string& quantity, const std::string& scale) {
    if (scale != "full" && scale != "desk") throw DomainError("unknown network preset scale '" + scale + "'");
    const bool full = scale == "full";
    if (quantity == "nu") return {"nu", 0.001, full ? 5 : 4, full ? 300 : 32};
    if (quantity == "theta") return {"theta", 0.001, 4, full ? 300 : 32};
    if (quantity == "u") return {"u", 0.01, 4, full ? 300 : 32};
    if (quantity == "v") return {"v", 0.01, 4, full ? 300 : 32};
    throw DomainError("unknown network quantity '" + quantity + "'");
}

namespace {

void write_row(std::ostream& os, const Eigen::RowVectorXd& row) {
    for (Eigen::Index i = 0; i < row.size(); ++i) os << (i ? " " : "") << io::fmt17(row[i]);
    os << '\n';
}

void write_scaling(std::ostream& os, const char* name, const Standardizer<double>& s) {
    os << name << ' ' << (s.empty() ? 0 : 1) << '\n';
    if (!s.empty()) {
        write_row(os, s.mean.transpose());
        write_row(os, s.stddev.transpose());
    }
}

std::vector<std::string> tokens(std::istream& is) {
    std::string line;
    while (std::getline(is, line)) {
        const auto t = io::trim(line);
        if (!t.empty()) return io::split(t, ' ');
    }
    throw FormatError("network file: unexpected end of file");
}

Eigen::RowVectorXd read_row(std::istream& is, Eigen::Index expected) {
    const auto tok = tokens(is);
    if (static_cast<Eigen::Index>(tok.size()) != expected) throw FormatError("network file: bad row length");
    Eigen::RowVectorXd row(expected);
    for (Eigen::Index i = 0; i < expected; ++i) row[i] = io::parse_double(tok[i]);
    return row;
}

Standardizer<double> read_scaling(std::istream& is, const char* name, Eigen::Index size) {
    const auto tok = tokens(is);
    if (tok.size() != 2 || tok[0] != name) throw FormatError(std::string("network file: expected ") + name);
    Standardizer<double> s;
    if (tok[1] == "1") {
        s.mean = read_row(is, size).transpose();
        s.stddev = read_row(is, size).transpose();
    }
    return s;
}

}  // namespace

void write_network(std::ostream& os, const MlpNetwork& net) {
    os << "convect_uq-mlp 1\nsizes";
    for (int s : net.sizes) os << ' ' << s;
    os << "\nactivations";
    for (auto a : net.activations) os << ' ' << (a == Activation::Relu ? "relu" : "identity");
    os << '\n';
    write_scaling(os, "input_scaling", net.input_scaling);
    write_scaling(os, "output_scaling", net.output_scaling);
    for (int l = 0; l < net.layers(); ++l) {
        os << "layer " << l + 1 << '\n';
        for (Eigen::Index r = 0; r < net.weights[l].rows(); ++r) write_row(os, net.weights[l].row(r));
        write_row(os, net.biases[l].transpose());
    }
}

void write_network(const std::string& path, const MlpNetwork& net) {
    std::ostringstream ss;
    write_network(ss, net);
    io::write_file(path, ss.str());
}

MlpNetwork read_network(std::istream& is) {
    auto tok = tokens(is);
    if (tok.size() != 2 || tok[0] != "convect_uq-mlp" || tok[1] != "1") throw FormatError("network file: bad header");
    tok = tokens(is);
    if (tok.size() < 3 || tok[0] != "sizes") throw FormatError("network file: expected sizes");
    std::vector<int> sizes;
    for (std::size_t i = 1; i < tok.size(); ++i) sizes.push_back(static_cast<int>(io::parse_int(tok[i])));
    MlpNetwork net = MlpNetwork::zeros(sizes);
    tok = tokens(is);
    if (tok.size() != sizes.size() || tok[0] != "activations") throw FormatError("network file: expected activations");
    for (std::size_t i = 1; i < tok.size(); ++i) {
        if (tok[i] == "relu") net.activations[i - 1] = Activation::Relu;
        else if (tok[i] == "identity") net.activations[i - 1] = Activation::Identity;
        else throw FormatError("network file: unknown activation " + tok[i]);
    }
    net.input_scaling = read_scaling(is, "input_scaling", sizes.front());
    net.output_scaling = read_scaling(is, "output_scaling", sizes.back());
    for (int l = 0; l < net.layers(); ++l) {
        tok = tokens(is);
        if (tok.size() != 2 || tok[0] != "layer" || io::parse_int(tok[1]) != l + 1)
            throw FormatError("network file: expected layer " + std::to_string(l + 1));
        for (Eigen::Index r = 0; r < net.weights[l].rows(); ++r) net.weights[l].row(r) = read_row(is, sizes[l]);
        net.biases[l] = read_row(is, sizes[l + 1]).transpose();
    }
    return net;
}

MlpNetwork read_network(const std::string& path) {
    std::istringstream ss(io::read_file(path));
    return read_network(ss);
}

}  // namespace convect_uq
