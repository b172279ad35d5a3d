#include "doctest.h"
#include "oracles.hpp"

#include "hjmcal/neural_net.hpp"

#include <cmath>
#include <random>

using namespace hjmcal;
using namespace hjmcal::nn;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = n(rng);
    return m;
}

Network random_net(std::vector<int> dims, Activation act, std::uint64_t seed) {
    Network net = Network::zeros(std::move(dims), act);
    init_glorot(net, seed);
    std::mt19937_64 rng(seed + 1);
    for (auto& b : net.biases) b = random_matrix(b.size(), 1, rng, 0.1);
    return net;
}

}  // namespace

TEST_CASE("parameter counts") {
    const int grid[] = {7, 30, 30, 30, 63};
    const int point[] = {9, 30, 30, 30, 1};
    CHECK(parameter_count(grid) == 4053);
    CHECK(parameter_count(point) == 2191);
    CHECK(Network::zeros({7, 30, 30, 30, 63}, Activation::relu).parameter_count() == 4053);
}

TEST_CASE("forward") {
    Network id = Network::zeros({3, 3}, Activation::relu);
    id.weights[0] = Eigen::MatrixXd::Identity(3, 3);
    const Eigen::Vector3d x(-1.0, 0.5, 2.0);
    CHECK((forward(id, x) - x).norm() == 0.0);

    // Hand computed: h = relu(W1 x + b1), y = W2 h + b2.
    Network two = Network::zeros({2, 2, 1}, Activation::relu);
    two.weights[0] << 1.0, -1.0, 2.0, 1.0;
    two.biases[0] << 0.5, -3.0;
    two.weights[1] << 2.0, -1.0;
    two.biases[1] << 0.25;
    const Eigen::Vector2d in(1.0, 2.0);
    // W1 x + b1 = (-0.5, 1.0) -> relu (0, 1) -> 2*0 - 1 + 0.25.
    CHECK(forward(two, in)(0) == doctest::Approx(-0.75).epsilon(1e-15));

    two.activation = Activation::elu;
    CHECK(forward(two, in)(0) == doctest::Approx(2.0 * std::expm1(-0.5) - 1.0 + 0.25).epsilon(1e-15));

    SUBCASE("input normalisation") {
        Network n = id;
        n.input_norm = {{0.0, 2.0}, {-1.0, 1.0}, {1.0, 5.0}};
        const Eigen::Vector3d y = forward(n, x);
        CHECK(y(0) == doctest::Approx(-0.5));
        CHECK(y(1) == doctest::Approx(0.75));
        CHECK(y(2) == doctest::Approx(0.25));
    }
    SUBCASE("batch agrees with single") {
        const Network net = random_net({4, 6, 6, 3}, Activation::elu, 3);
        std::mt19937_64 rng(4);
        const Eigen::MatrixXd xs = random_matrix(4, 10, rng);
        const Eigen::MatrixXd ys = forward_batch(net, xs);
        for (Eigen::Index j = 0; j < 10; ++j) CHECK((ys.col(j) - forward(net, xs.col(j))).norm() <= 1e-14);
    }
}

TEST_CASE("losses") {
    const Eigen::MatrixXd a = Eigen::MatrixXd::Ones(2, 1);
    const Eigen::MatrixXd z = Eigen::MatrixXd::Zero(2, 1);
    CHECK(loss_mse(a, a) == 0.0);
    CHECK(loss_mse(a, z) == 1.0);

    std::mt19937_64 rng(1);
    const Eigen::MatrixXd p = random_matrix(5, 4, rng), t = random_matrix(5, 4, rng);
    double want = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) want += std::pow(p(i) - t(i), 2);
    CHECK(loss_mse(p, t) == doctest::Approx(want / 20.0).epsilon(1e-14));

    const Eigen::MatrixXd bid = Eigen::MatrixXd::Constant(3, 1, 1.0);
    const Eigen::MatrixXd ask = Eigen::MatrixXd::Constant(3, 1, 2.0);
    Eigen::MatrixXd inside(3, 1);
    inside << 1.0, 1.5, 2.0;
    CHECK(loss_bidask(inside, bid, ask) == 0.0);
    Eigen::MatrixXd below(3, 1);
    below << 0.7, 1.5, 1.5;
    CHECK(loss_bidask(below, bid, ask) == doctest::Approx(0.09 / 3.0).epsilon(1e-14));
    Eigen::MatrixXd mixed(3, 1);
    mixed << 0.5, 2.25, 1.2;
    CHECK(loss_bidask(mixed, bid, ask) == doctest::Approx((0.25 + 0.0625) / 3.0).epsilon(1e-14));
}

TEST_CASE("gradients") {
    SUBCASE("zero residual") {
        const Network net = random_net({3, 5, 2}, Activation::relu, 2);
        std::mt19937_64 rng(3);
        const Eigen::MatrixXd xs = random_matrix(3, 4, rng);
        const Gradients g = grad(net, xs, forward_batch(net, xs), LossKind::mse);
        CHECK(g.loss == 0.0);
        CHECK(g.params.norm() == 0.0);
    }
    SUBCASE("inside the bands") {
        const Network net = random_net({3, 5, 2}, Activation::elu, 2);
        std::mt19937_64 rng(3);
        const Eigen::MatrixXd xs = random_matrix(3, 4, rng);
        const Eigen::MatrixXd y = forward_batch(net, xs);
        const Gradients g = grad(net, xs, y.array() - 1.0, LossKind::bidask, y.array() + 1.0);
        CHECK(g.params.norm() == 0.0);
        CHECK(g.inputs.norm() == 0.0);
    }
    SUBCASE("finite differences on an ELU network") {
        Network net = random_net({4, 6, 6, 3}, Activation::elu, 9);
        std::mt19937_64 rng(10);
        const Eigen::MatrixXd xs = random_matrix(4, 5, rng);
        const Eigen::MatrixXd ts = random_matrix(3, 5, rng);
        const Gradients g = grad(net, xs, ts, LossKind::mse);
        const Eigen::VectorXd theta = net.flat_params();
        Eigen::VectorXd fd(theta.size());
        for (Eigen::Index i = 0; i < theta.size(); ++i) {
            auto f = [&](double v) {
                Eigen::VectorXd t = theta;
                t(i) = v;
                Network n = net;
                n.set_flat_params(t);
                return loss_mse(forward_batch(n, xs), ts);
            };
            fd(i) = oracle::central_difference(f, theta(i), 1e-5);
        }
        CHECK((g.params - fd).norm() / fd.norm() <= 1e-5);

        Eigen::MatrixXd fdx(4, 5);
        for (Eigen::Index i = 0; i < xs.size(); ++i) {
            auto f = [&](double v) {
                Eigen::MatrixXd x = xs;
                x(i) = v;
                return loss_mse(forward_batch(net, x), ts);
            };
            fdx(i) = oracle::central_difference(f, xs(i), 1e-5);
        }
        CHECK((g.inputs - fdx).norm() / fdx.norm() <= 1e-5);
    }
}

TEST_CASE("adam") {
    Eigen::VectorXd p = Eigen::VectorXd::Constant(3, 0.5);
    AdamState s = AdamState::for_size(3);
    adam_step(p, Eigen::VectorXd::Zero(3), s);
    CHECK(p == Eigen::VectorXd::Constant(3, 0.5));

    Eigen::VectorXd x = Eigen::VectorXd::Zero(1);
    AdamState one = AdamState::for_size(1, 0.001);
    adam_step(x, Eigen::VectorXd::Ones(1), one);
    CHECK(x(0) == doctest::Approx(-0.001 / (1.0 + 1e-8)).epsilon(1e-14));
    CHECK(one.step_count == 1);

    AdamState bad = AdamState::for_size(1);
    bad.beta1 = 1.0;
    CHECK_THROWS(bad.validate());
}

TEST_CASE("training") {
    SUBCASE("zero learning rate leaves the network unchanged") {
        Network net = random_net({1, 4, 1}, Activation::elu, 1);
        Dataset d{Eigen::MatrixXd::Random(1, 20), Eigen::MatrixXd::Random(1, 20), {}};
        TrainingConfig cfg;
        cfg.epochs = 1;
        cfg.lr = 0.0;
        const TrainResult r = train(net, d, cfg);
        CHECK(r.net.flat_params() == net.flat_params());
    }
    SUBCASE("fit y = 2x") {
        Network net = Network::zeros({1, 8, 1}, Activation::elu);
        init_glorot(net, 3);
        Dataset d;
        d.inputs.resize(1, 100);
        for (int i = 0; i < 100; ++i) d.inputs(0, i) = -1.0 + 2.0 * i / 99.0;
        d.targets = 2.0 * d.inputs;
        TrainingConfig cfg;
        cfg.epochs = 200;
        cfg.lr = 1e-2;
        cfg.seed = 3;
        const TrainResult r = train(net, d, cfg);
        CHECK(loss_mse(forward_batch(r.net, d.inputs), d.targets) <= 1e-3);
        CHECK(r.epoch_loss.back() < r.epoch_loss.front());
    }
    SUBCASE("determinism") {
        Network net = random_net({2, 5, 1}, Activation::relu, 4);
        std::mt19937_64 rng(5);
        Dataset d{random_matrix(2, 50, rng), random_matrix(1, 50, rng), {}};
        TrainingConfig cfg;
        cfg.epochs = 5;
        cfg.seed = 17;
        CHECK(train(net, d, cfg).net == train(net, d, cfg).net);
    }
    SUBCASE("invalid configuration") {
        TrainingConfig cfg;
        cfg.epochs = 0;
        CHECK_THROWS(cfg.validate());
        cfg.epochs = 1;
        cfg.batch_size = 0;
        CHECK_THROWS(cfg.validate());
    }
}

TEST_CASE("linear embedding") {
    CHECK(forward(linear_embed(Eigen::MatrixXd::Zero(2, 3), 2, {3, 6, 2}), Eigen::Vector3d(1, -2, 3)).norm() == 0.0);

    std::mt19937_64 rng(8);
    const Network id = linear_embed(Eigen::MatrixXd::Identity(2, 2), 3, {2, 4, 4, 2});
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const Eigen::VectorXd x = random_matrix(2, 1, rng, 5.0);
        worst = std::max(worst, (forward(id, x) - x).cwiseAbs().maxCoeff());
    }
    CHECK(worst <= 1e-12);

    const Eigen::MatrixXd a = random_matrix(3, 2, rng);
    const Network net = linear_embed(a, 2, {2, 4, 3});
    for (int i = 0; i < 100; ++i) {
        const Eigen::VectorXd x = random_matrix(2, 1, rng, 3.0);
        CHECK((forward(net, x) - a * x).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + (a * x).cwiseAbs().maxCoeff()));
    }
    CHECK_THROWS(linear_embed(a, 2, {2, 3, 3}));
}

TEST_CASE("serialization") {
    Network net = random_net({7, 30, 30, 30, 63}, Activation::relu, 6);
    net.input_norm.assign(7, {0.0, 1.0});
    net.meta.seed = 6;
    const std::string doc = serialize(net);
    const Network back = deserialize(doc);
    CHECK(back == net);
    std::mt19937_64 rng(7);
    for (int i = 0; i < 10; ++i) {
        const Eigen::VectorXd x = random_matrix(7, 1, rng);
        CHECK(forward(back, x) == forward(net, x));
    }
    CHECK_THROWS_AS(deserialize(doc.substr(0, doc.size() / 2)), FormatError);
    CHECK_THROWS_AS(deserialize("{\"format_version\": 99}"), FormatError);
}

TEST_CASE("random helpers") {
    std::mt19937_64 a(1), b(1);
    for (int i = 0; i < 100; ++i) {
        const double u = uniform01(a);
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        CHECK(uniform_below(b, 7) < 7u);
    }
    std::vector<Eigen::Index> idx{0, 1, 2, 3, 4, 5};
    std::mt19937_64 r(2);
    fisher_yates(idx, r);
    std::vector<Eigen::Index> sorted = idx;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<Eigen::Index>{0, 1, 2, 3, 4, 5});
}
