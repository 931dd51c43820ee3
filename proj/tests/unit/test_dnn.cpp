#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "../common/oracles.hpp"
#include "convect_uq/dnn.hpp"
#include "convect_uq/sampling.hpp"

using namespace convect_uq;

namespace {

Eigen::MatrixXd row(std::initializer_list<double> v) {
    Eigen::MatrixXd m(1, static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) m(0, i++) = x;
    return m;
}

Dataset linear_dataset(int m, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> nd;
    Dataset d;
    d.inputs.resize(m, 3);
    for (Eigen::Index i = 0; i < d.inputs.size(); ++i) d.inputs.data()[i] = nd(gen);
    d.targets.resize(m, 2);
    d.targets.col(0) = 0.5 * d.inputs.col(0) - d.inputs.col(1) + 0.2 * d.inputs.col(2);
    d.targets.col(1) = d.inputs.col(2).array() - 0.3;
    return d;
}

}  // namespace

TEST_SUITE("dnn") {

TEST_CASE("forward pass examples") {
    auto net = MlpNetwork::zeros({2, 2, 1});
    for (auto& w : net.weights) w.setOnes();
    const auto pass = forward(net, Eigen::VectorXd(Eigen::Vector2d(1, 1)));
    CHECK(pass.values[1](0, 0) == 2.0);
    CHECK(pass.values[1](1, 0) == 2.0);
    CHECK(pass.output()(0, 0) == 4.0);

    auto single = MlpNetwork::zeros({2, 1, 1});
    single.weights[0].setOnes();
    single.weights[1].setOnes();
    const auto p2 = forward(single, Eigen::VectorXd(Eigen::Vector2d(1, -2)));
    CHECK(p2.values[1](0, 0) == 0.0);

    auto biased = MlpNetwork::zeros({3, 4, 2});
    biased.biases[1] << 0.7, -1.5;
    for (double s : {-3.0, 0.0, 11.0}) {
        const auto out = forward(biased, Eigen::VectorXd(Eigen::Vector3d(s, 2 * s, -s))).output();
        CHECK(out(0, 0) == 0.7);
        CHECK(out(1, 0) == -1.5);
    }
    CHECK_THROWS_AS(forward(net, Eigen::VectorXd(Eigen::Vector3d(1, 1, 1))), ShapeError);
    CHECK(net.activations[0] == Activation::Relu);
    CHECK(net.activations[1] == Activation::Identity);
    CHECK_THROWS_AS(MlpNetwork::zeros({3}), ShapeError);
    CHECK_THROWS_AS(MlpNetwork::zeros({3, 0, 1}), ShapeError);
}

TEST_CASE("loss examples") {
    auto net = MlpNetwork::zeros({1, 1});
    CHECK(loss(net, row({0.3}), row({0.0}), 0.0) == 0.0);
    CHECK(loss(net, row({0.3}), row({1.0}), 0.0) == 1.0);
    CHECK(loss(net, row({0.3}), row({1.0}), 5.0) == 1.0);
    net.weights[0](0, 0) = 2.0;
    CHECK(loss(net, row({0.5}), row({1.0}), 0.0) == 0.0);
    CHECK(loss(net, row({0.5}), row({1.0}), 0.25) == 1.0);
    CHECK_THROWS_AS(loss(net, Eigen::MatrixXd(0, 1), Eigen::MatrixXd(0, 1), 0.0), ShapeError);
}

TEST_CASE("loss is non-negative and the penalty never lowers it") {
    std::mt19937_64 gen(4);
    std::normal_distribution<double> nd;
    for (int t = 0; t < 20; ++t) {
        const auto net = oracles::random_network({3, 5, 2}, gen);
        Eigen::MatrixXd x(6, 3), z(6, 2);
        for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = nd(gen);
        for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = nd(gen);
        const double plain = loss(net, x, z, 0.0);
        CHECK(plain >= 0.0);
        CHECK(loss(net, x, z, 0.1) >= plain);
    }
}

TEST_CASE("backprop at a perfect fit is zero") {
    auto net = MlpNetwork::zeros({2, 3, 1});
    net.weights[0] << 1, 0, 0, 1, 1, 1;
    net.weights[1] << 1, -1, 0.5;
    Eigen::MatrixXd x(2, 2);
    x << 1, 2, 0.5, 0.25;
    const Eigen::MatrixXd z = forward_batch(net, Eigen::MatrixXd(x.transpose())).output().transpose();
    const auto g = backprop(net, x, z);
    for (int l = 0; l < 2; ++l) {
        CHECK(g.weights[l].cwiseAbs().maxCoeff() == 0.0);
        CHECK(g.biases[l].cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("backprop of a single linear neuron") {
    auto net = MlpNetwork::zeros({2, 1});
    net.weights[0] << 0.3, -0.7;
    net.biases[0] << 0.1;
    const Eigen::MatrixXd x = row({2.0, 0.5});
    const Eigen::MatrixXd z = row({1.0});
    const double yhat = 0.3 * 2.0 - 0.7 * 0.5 + 0.1;
    const auto g = backprop(net, x, z);
    CHECK(g.weights[0](0, 0) == doctest::Approx(2 * (yhat - 1.0) * 2.0).epsilon(1e-15));
    CHECK(g.weights[0](0, 1) == doctest::Approx(2 * (yhat - 1.0) * 0.5).epsilon(1e-15));
    CHECK(g.biases[0](0) == doctest::Approx(2 * (yhat - 1.0)).epsilon(1e-15));
}

TEST_CASE("rectifier derivative at zero is zero") {
    auto net = MlpNetwork::zeros({1, 1, 1});
    net.weights[0] << 1.0;
    net.weights[1] << 1.0;
    const auto g = backprop(net, row({0.0}), row({1.0}));
    CHECK(g.weights[0](0, 0) == 0.0);
    CHECK(g.biases[0](0) == 0.0);
    CHECK(g.biases[1](0) == -2.0);
}

TEST_CASE("backprop matches central differences") {
    std::mt19937_64 gen(2718);
    for (int t = 0; t < 40; ++t) {
        const auto c = oracles::random_gradient_check(gen);
        CHECK(c.away_from_kinks);
        CHECK(c.max_relative_error < 1e-6);
    }
}

TEST_CASE("batch gradient does not depend on sample order") {
    std::mt19937_64 gen(31);
    std::normal_distribution<double> nd;
    const auto net = oracles::random_network({4, 6, 6, 3}, gen);
    Eigen::MatrixXd x(9, 4), z(9, 3);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = nd(gen);
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = nd(gen);
    Eigen::PermutationMatrix<Eigen::Dynamic> perm(9);
    perm.setIdentity();
    std::shuffle(perm.indices().data(), perm.indices().data() + 9, gen);
    const auto a = backprop(net, x, z);
    const auto b = backprop(net, Eigen::MatrixXd(perm * x), Eigen::MatrixXd(perm * z));
    for (int l = 0; l < net.layers(); ++l) {
        CHECK((a.weights[l] - b.weights[l]).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((a.biases[l] - b.biases[l]).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("adam first step moves by the learning rate") {
    TrainConfig cfg;
    for (bool ams : {true, false}) {
        cfg.amsgrad = ams;
        Eigen::MatrixXd p = Eigen::MatrixXd::Constant(2, 2, 1.0);
        Eigen::MatrixXd g(2, 2);
        g << 0.5, 3.0, -2.0, 1e-3;
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2, 2), v = m, vmax = m;
        adam_update(p, g, m, v, vmax, 1, cfg);
        for (Eigen::Index i = 0; i < 4; ++i) {
            const double gi = g.data()[i];
            const double expected = 1.0 - cfg.learning_rate * gi / (std::abs(gi) + cfg.epsilon);
            CHECK(p.data()[i] == doctest::Approx(expected).epsilon(1e-12));
        }
    }
}

TEST_CASE("adam with zero gradient leaves parameters unchanged") {
    TrainConfig cfg;
    auto net = make_network({3, 4, 2}, 9);
    const auto before = net;
    AdamState s = AdamState::for_network(net);
    Gradients<double> g;
    for (int l = 0; l < net.layers(); ++l) {
        g.weights.push_back(Eigen::MatrixXd::Zero(net.weights[l].rows(), net.weights[l].cols()));
        g.biases.push_back(Eigen::VectorXd::Zero(net.biases[l].size()));
    }
    for (int i = 0; i < 50; ++i) adam_step(s, net, g, cfg);
    CHECK(s.t == 50);
    for (int l = 0; l < net.layers(); ++l) {
        CHECK(net.weights[l] == before.weights[l]);
        CHECK(net.biases[l] == before.biases[l]);
    }
}

TEST_CASE("amsgrad denominator dominates plain adam") {
    TrainConfig cfg;
    // evaluate the recurrence directly for two steps of a shrinking gradient
    const double g1 = 2.0, g2 = 0.1;
    double v = 0.0, vmax = 0.0;
    std::vector<double> plain, ams;
    for (int t = 1; t <= 2; ++t) {
        const double g = t == 1 ? g1 : g2;
        v = cfg.beta2 * v + (1 - cfg.beta2) * g * g;
        const double vhat = v / (1 - std::pow(cfg.beta2, t));
        vmax = std::max(vmax, vhat);
        plain.push_back(std::sqrt(vhat));
        ams.push_back(std::sqrt(vmax));
    }
    for (int t = 0; t < 2; ++t) CHECK(ams[t] >= plain[t]);
    CHECK(ams[1] > plain[1]);

    // the library reproduces the same second-step parameter values
    for (bool a : {true, false}) {
        cfg.amsgrad = a;
        Eigen::MatrixXd p = Eigen::MatrixXd::Zero(1, 1), m = p, vv = p, vm = p;
        double mm = 0.0, expected = 0.0;
        for (int t = 1; t <= 2; ++t) {
            const double g = t == 1 ? g1 : g2;
            adam_update(p, Eigen::MatrixXd::Constant(1, 1, g), m, vv, vm, t, cfg);
            mm = cfg.beta1 * mm + (1 - cfg.beta1) * g;
            expected -= cfg.learning_rate * (mm / (1 - std::pow(cfg.beta1, t))) /
                        ((a ? ams[t - 1] : plain[t - 1]) + cfg.epsilon);
        }
        CHECK(p(0, 0) == doctest::Approx(expected).epsilon(1e-12));
        if (a) CHECK((vm.array() >= vv.array() / (1 - std::pow(cfg.beta2, 2)) - 1e-18).all());
    }
}

TEST_CASE("training a linear net on linear data decreases the loss") {
    const Dataset tr = linear_dataset(64, 1), va = linear_dataset(16, 2);
    TrainConfig cfg;
    cfg.learning_rate = 1e-2;
    cfg.epochs = 30;
    cfg.batch_size = 0;
    const auto result = train(make_network({3, 2}, 5), tr, va, cfg);
    const auto& h = result.history.train_loss;
    REQUIRE(h.size() == 30);
    int rises = 0;
    for (int e = 1; e < 10; ++e) rises += h[e] > h[e - 1];
    CHECK(rises <= 1);
    CHECK(h.back() < h.front());
    CHECK(result.history.validation_loss.size() == 30);
}

TEST_CASE("training is deterministic for a seed") {
    const Dataset tr = linear_dataset(50, 3), va = linear_dataset(10, 4);
    TrainConfig cfg;
    cfg.epochs = 15;
    cfg.batch_size = 8;
    const auto a = train(make_network({3, 8, 8, 2}, 1), tr, va, cfg);
    const auto b = train(make_network({3, 8, 8, 2}, 1), tr, va, cfg);
    CHECK(a.history.train_loss == b.history.train_loss);
    CHECK(a.history.validation_loss == b.history.validation_loss);
    for (int l = 0; l < a.network.layers(); ++l) CHECK(a.network.weights[l] == b.network.weights[l]);
    cfg.seed = 2;
    const auto c = train(make_network({3, 8, 8, 2}, 1), tr, va, cfg);
    CHECK(c.history.train_loss != a.history.train_loss);
}

TEST_CASE("large regularisation shrinks the weights") {
    const Dataset tr = linear_dataset(40, 5);
    TrainConfig cfg;
    cfg.learning_rate = 1e-2;
    cfg.epochs = 300;
    cfg.batch_size = 0;
    cfg.lambda = 1e3;
    const auto start = make_network({3, 6, 2}, 7);
    const auto r = train(start, tr, Dataset{}, cfg);
    CHECK(weight_penalty(r.network) < 0.05 * weight_penalty(start));
    const Eigen::MatrixXd pred = predict(r.network, tr.inputs);
    for (Eigen::Index k = 0; k < 2; ++k) {
        const double spread = pred.col(k).maxCoeff() - pred.col(k).minCoeff();
        CHECK(spread < 0.05);
    }
}

TEST_CASE("training divergence names the epoch") {
    Dataset tr = linear_dataset(20, 6);
    tr.targets *= 1e200;
    TrainConfig cfg;
    cfg.epochs = 5;
    try {
        train(make_network({3, 2}, 1), tr, Dataset{}, cfg);
        FAIL("expected a divergence");
    } catch (const TrainingDivergenceError& e) {
        CHECK(e.epoch() == 1);
    }
}

TEST_CASE("train config validation") {
    TrainConfig c;
    CHECK_NOTHROW(c.validate());
    c.beta1 = 1.0;
    CHECK_THROWS_AS(c.validate(), DomainError);
    c = TrainConfig{};
    c.lambda = -1;
    CHECK_THROWS_AS(c.validate(), DomainError);
    c = TrainConfig{};
    c.learning_rate = 0;
    CHECK_THROWS_AS(c.validate(), DomainError);
}

TEST_CASE("initialisation is seeded with rectifier scaling") {
    const auto a = make_network({200, 300, 1}, 3);
    const auto b = make_network({200, 300, 1}, 3);
    CHECK(a.weights[0] == b.weights[0]);
    const auto& w = a.weights[0];
    const double sd = std::sqrt((w.array() - w.mean()).square().mean());
    CHECK(sd == doctest::Approx(std::sqrt(2.0 / 200)).epsilon(0.02));
    CHECK(std::abs(w.mean()) < 0.01 * sd * 10);
    CHECK(a.biases[0].cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("relative average percent error") {
    Eigen::MatrixXd t(1, 3), p(1, 3);
    t << 0, 1, 2;
    p << 0, 1, 1;
    CHECK(relative_average_percent_error(t, p) == doctest::Approx(100.0 / 6.0).epsilon(1e-14));
    CHECK(std::abs(relative_average_percent_error(t, p) - 16.667) < 1e-3);
    CHECK(relative_average_percent_error(t, t) == 0.0);
    for (double c : {0.001, 3.0, 1e6})
        CHECK(relative_average_percent_error(c * t, c * p) == doctest::Approx(100.0 / 6.0).epsilon(1e-12));
    CHECK_THROWS_AS(relative_average_percent_error(Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Ones(2, 2)),
                    UndefinedMetricError);
    CHECK_THROWS_AS(relative_average_percent_error(t, Eigen::MatrixXd::Zero(3, 1)), ShapeError);
}

TEST_CASE("standardizer round trip") {
    std::mt19937_64 gen(8);
    std::normal_distribution<double> nd(5.0, 3.0);
    Eigen::MatrixXd z(30, 4);
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = nd(gen);
    z.col(3).setConstant(2.0);
    const auto s = Standardizer<double>::fit(z);
    CHECK(s.stddev[3] == 1.0);
    const Eigen::MatrixXd w = s.apply(z);
    CHECK(std::abs(w.col(0).mean()) < 1e-12);
    CHECK((s.invert(w) - z).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("network presets") {
    const auto nu = network_preset("nu", "full");
    CHECK(nu.lambda == 0.001);
    CHECK(nu.hidden_layers == 5);
    CHECK(nu.width == 300);
    CHECK(network_preset("theta", "full").hidden_layers == 4);
    CHECK(network_preset("u", "full").lambda == 0.01);
    CHECK(network_preset("v", "desk").width == 32);
    CHECK(network_preset("nu", "desk").hidden_layers == 4);
    CHECK_THROWS_AS(network_preset("w", "desk"), DomainError);
    CHECK_THROWS_AS(network_preset("nu", "huge"), DomainError);
}

TEST_CASE("network file round trip is exact") {
    auto net = make_network({4, 5, 3}, 12);
    net.input_scaling.mean = Eigen::Vector4d(1.05, 1.05, 1.05, 1.05);
    net.input_scaling.stddev = Eigen::Vector4d::Constant(0.01 / 3);
    net.output_scaling.mean = Eigen::Vector3d(1, 2, 3);
    net.output_scaling.stddev = Eigen::Vector3d(0.1, 0.2, 1.0 / 3);
    std::stringstream ss;
    write_network(ss, net);
    const auto back = read_network(ss);
    CHECK(back.sizes == net.sizes);
    CHECK(back.activations == net.activations);
    for (int l = 0; l < net.layers(); ++l) {
        CHECK(back.weights[l] == net.weights[l]);
        CHECK(back.biases[l] == net.biases[l]);
    }
    CHECK(back.output_scaling.stddev == net.output_scaling.stddev);
    Eigen::MatrixXd x = Eigen::MatrixXd::Constant(2, 4, 1.051);
    CHECK(predict(back, x) == predict(net, x));
    std::stringstream bad("convect_uq-mlp 2\n");
    CHECK_THROWS_AS(read_network(bad), FormatError);
}

TEST_CASE("single precision networks") {
    auto net = MlpNetworkT<float>::zeros({2, 3, 1});
    for (auto& w : net.weights) w.setConstant(0.5f);
    const auto out = forward(net, Eigen::VectorXf(Eigen::Vector2f(1.0f, 2.0f))).output();
    CHECK(out(0, 0) == doctest::Approx(2.25f));
}

}
