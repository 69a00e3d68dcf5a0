#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "dgnn/gsd.hpp"
#include "dgnn/oracle.hpp"
#include "dgnn_loss_fixture.hpp"

using dgnn::Mat;

TEST_CASE("fd_gradient on simple functions", "[oracle]") {
    Mat x(1, 1);
    x(0, 0) = 3.0;
    auto square = [&]() { return x(0, 0) * x(0, 0); };
    auto fd = dgnn::oracle::fd_gradient(square, {&x}, {});
    REQUIRE(fd.size() == 1);
    REQUIRE(fd[0].derivative == Catch::Approx(6.0).epsilon(1e-7));
    REQUIRE(x(0, 0) == 3.0);  // restored

    // linear functions are exact for any step
    Mat y(2, 2);
    y << 1.0, -2.0, 0.5, 4.0;
    auto linear = [&]() { return 2.0 * y(0, 0) - 3.0 * y(1, 1) + y(0, 1); };
    dgnn::oracle::FdConfig wide;
    wide.step = 0.25;
    auto fdl = dgnn::oracle::fd_gradient(linear, {&y}, wide);
    Mat expected(2, 2);
    expected << 2.0, 1.0, 0.0, -3.0;
    for (const auto& s : fdl) {
        REQUIRE(s.derivative == Catch::Approx(expected(s.row, s.col)).margin(1e-10));
    }
}

TEST_CASE("fd_gradient rejects bad configs and non-finite losses", "[oracle]") {
    Mat x = Mat::Ones(1, 1);
    dgnn::oracle::FdConfig bad;
    bad.step = 0.0;
    REQUIRE_THROWS_AS(dgnn::oracle::fd_gradient([] { return 0.0; }, {&x}, bad),
                      std::invalid_argument);
    auto nan_loss = [&]() { return std::log(-1.0); };
    REQUIRE_THROWS_AS(dgnn::oracle::fd_gradient(nan_loss, {&x}, {}), std::runtime_error);
}

TEST_CASE("fd_gradient reproduces the analytic GSD gradient", "[oracle]") {
    std::mt19937 rng(31);
    auto na = fixture::random_normalized(7, 32);
    dgnn::GsdProblem p{fixture::random_mat(7, 3, rng), dgnn::laplacian(na), 1.4};
    Mat f = fixture::random_mat(7, 3, rng);

    auto obj = [&]() { return dgnn::gsd_objective(f, p); };
    dgnn::oracle::FdConfig cfg;
    cfg.samples_per_param = 21;
    auto fd = dgnn::oracle::fd_gradient(obj, {&f}, cfg);

    Mat analytic = 2.0 * (f - p.signal) + 2.0 * p.lambda * (Mat(p.laplacian) * f);
    REQUIRE(dgnn::oracle::max_fd_error(fd, {&analytic}) < 1e-6);
}

TEST_CASE("scalar oracle enforces its size guard", "[oracle]") {
    Mat big = Mat::Zero(17, 3);
    dgnn::DgnnHyperparams hp;
    REQUIRE_THROWS_AS(dgnn::oracle::scalar_update_oracle(big, big, big, big, Mat::Zero(17, 17),
                                                         Mat::Zero(17, 17), Mat::Zero(3, 3), hp,
                                                         dgnn::oracle::UpdateKind::F),
                      std::invalid_argument);
}

TEST_CASE("gcn_reference_layer basics", "[oracle]") {
    std::mt19937 rng(41);
    Mat x = fixture::random_mat(4, 3, rng);

    // edgeless graph, W = I: the layer is the identity
    Mat ahat_id = Mat::Identity(4, 4);
    Mat out = dgnn::oracle::gcn_reference_layer(x, ahat_id, Mat::Identity(3, 3));
    REQUIRE((out - x).cwiseAbs().maxCoeff() < 1e-15);

    // two-node connected graph, W = I: both rows become the feature mean
    Mat ahat2 = Mat::Constant(2, 2, 0.5);
    Mat x2 = fixture::random_mat(2, 3, rng);
    Mat out2 = dgnn::oracle::gcn_reference_layer(x2, ahat2, Mat::Identity(3, 3));
    Mat mean = 0.5 * (x2.row(0) + x2.row(1));
    REQUIRE((out2.row(0) - mean).cwiseAbs().maxCoeff() < 1e-14);
    REQUIRE((out2.row(1) - mean).cwiseAbs().maxCoeff() < 1e-14);

    REQUIRE_THROWS_AS(dgnn::oracle::gcn_reference_layer(x, ahat2, Mat::Identity(3, 3)),
                      std::invalid_argument);
}

TEST_CASE("full DGNN loss gradients match central differences", "[oracle][gradcheck]") {
    fixture::LossSpec spec;
    spec.n = 8;
    spec.d = 5;
    spec.hp.lambda = 1.0;
    spec.hp.alpha = 1.0;
    spec.hp.beta = 0.01;
    spec.hp.epsilon = 0.5;
    spec.hp.layers = 2;
    spec.seed = 51;
    auto data = fixture::make_loss_data(spec);

    auto loss = [&]() { return fixture::eval_loss(data, spec.hp); };
    dgnn::oracle::FdConfig cfg;
    cfg.samples_per_param = 24;
    auto fd = dgnn::oracle::fd_gradient(loss, {&data.w, &data.wc, &data.b}, cfg);

    fixture::LossGraph g;
    fixture::build_loss(g, data, spec.hp);
    auto grads = g.tape.backward(g.loss);
    double err = dgnn::oracle::max_fd_error(
        fd, {&grads.at(g.w), &grads.at(g.wc), &grads.at(g.b)});
    INFO("max relative error " << err);
    REQUIRE(err < 1e-4);
}
