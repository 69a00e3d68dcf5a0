#include <catch2/catch_amalgamated.hpp>

#include <cstring>
#include <random>

#include "dgnn/oracle.hpp"
#include "dgnn/tape.hpp"

using dgnn::DiffMatrix;
using dgnn::Mat;
using dgnn::Tape;

namespace {

Mat random_mat(int r, int c, std::mt19937& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Mat m(r, c);
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < c; ++j) m(i, j) = u(rng);
    }
    return m;
}

}  // namespace

TEST_CASE("matmul and transpose identities", "[tape]") {
    std::mt19937 rng(1);
    Tape t;
    Mat m = random_mat(4, 3, rng);
    auto mm = t.constant(m);
    auto id = t.constant(Mat::Identity(4, 4));
    REQUIRE((t.matmul(id, mm).value() - m).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((t.transpose(t.transpose(mm)).value() - m).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE_THROWS_AS(t.matmul(mm, mm), std::invalid_argument);
}

TEST_CASE("gradient of tr(A^T A)/2 equals A", "[tape]") {
    std::mt19937 rng(2);
    Tape t;
    Mat av = random_mat(5, 4, rng);
    auto a = t.leaf(av);
    auto loss = t.scale(t.sum(t.hadamard(a, a)), 0.5);
    auto grads = t.backward(loss);
    REQUIRE((grads.at(a) - av).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("sigmoid values and symmetry", "[tape]") {
    Tape t;
    Mat z = Mat::Zero(1, 1);
    REQUIRE(t.sigmoid(t.constant(z)).value()(0, 0) == Catch::Approx(0.5));

    std::mt19937 rng(3);
    Mat x = random_mat(4, 4, rng);
    auto pos = t.sigmoid(t.constant(x));
    auto neg = t.sigmoid(t.constant(Mat(-x)));
    REQUIRE((pos.value() + neg.value() - Mat::Ones(4, 4)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("sigmoid gradient matches finite differences", "[tape]") {
    std::mt19937 rng(4);
    Mat x = random_mat(4, 3, rng);
    auto loss = [&]() {
        Tape t;
        return t.sum(t.sigmoid(t.constant(x))).value()(0, 0);
    };
    dgnn::oracle::FdConfig cfg;
    cfg.samples_per_param = 12;
    auto fd = dgnn::oracle::fd_gradient(loss, {&x}, cfg);

    Tape t;
    auto a = t.leaf(x);
    auto grads = t.backward(t.sum(t.sigmoid(a)));
    REQUIRE(dgnn::oracle::max_fd_error(fd, {&grads.at(a)}) < 1e-7);
}

TEST_CASE("softmax rows sum to one and shift invariance holds", "[tape]") {
    std::mt19937 rng(5);
    Tape t;
    Mat z = Mat::Zero(1, 2);
    Mat half = t.softmax_rows(t.constant(z)).value();
    REQUIRE(half(0, 0) == Catch::Approx(0.5));
    REQUIRE(half(0, 1) == Catch::Approx(0.5));

    Mat x = random_mat(6, 5, rng);
    Mat p = t.softmax_rows(t.constant(x)).value();
    for (int i = 0; i < 6; ++i) REQUIRE(std::abs(p.row(i).sum() - 1.0) < 1e-12);

    Mat shifted = x;
    shifted.array() += 7.5;
    Mat p2 = t.softmax_rows(t.constant(shifted)).value();
    REQUIRE((p - p2).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("cross entropy of a confident correct prediction vanishes", "[tape]") {
    Tape t;
    Mat logits(2, 3);
    logits << 50.0, 0.0, 0.0, 0.0, 50.0, 0.0;
    auto probs = t.softmax_rows(t.constant(logits));
    auto loss = t.cross_entropy(probs, {0, 1}, {0, 1});
    REQUIRE(loss.value()(0, 0) < 1e-12);
}

TEST_CASE("cross entropy rejects bad input", "[tape]") {
    Tape t;
    auto probs = t.softmax_rows(t.constant(Mat::Zero(2, 3)));
    REQUIRE_THROWS_AS(t.cross_entropy(probs, {0, 1}, {}), std::invalid_argument);
    REQUIRE_THROWS_AS(t.cross_entropy(probs, {0, 5}, {1}), std::invalid_argument);
    REQUIRE_THROWS_AS(t.cross_entropy(probs, {0}, {0}), std::invalid_argument);
}

TEST_CASE("softmax + cross entropy gradient matches finite differences", "[tape]") {
    std::mt19937 rng(6);
    Mat logits = random_mat(5, 4, rng);
    std::vector<int> labels = {0, 2, 1, 3, 2};
    std::vector<int> mask = {0, 2, 4};
    auto loss = [&]() {
        Tape t;
        auto p = t.softmax_rows(t.constant(logits));
        return t.cross_entropy(p, labels, mask).value()(0, 0);
    };
    dgnn::oracle::FdConfig cfg;
    cfg.samples_per_param = 20;
    auto fd = dgnn::oracle::fd_gradient(loss, {&logits}, cfg);

    Tape t;
    auto a = t.leaf(logits);
    auto grads = t.backward(t.cross_entropy(t.softmax_rows(a), labels, mask));
    REQUIRE(dgnn::oracle::max_fd_error(fd, {&grads.at(a)}) < 1e-6);
}

TEST_CASE("dropout identity cases and survivor fraction", "[tape]") {
    std::mt19937 rng(7);
    Tape t;
    Mat x = random_mat(10, 10, rng);
    auto a = t.constant(x);
    REQUIRE(t.dropout(a, 0.0, rng, true).id == a.id);
    REQUIRE(t.dropout(a, 0.7, rng, false).id == a.id);
    REQUIRE_THROWS_AS(t.dropout(a, 1.0, rng, true), std::invalid_argument);
    REQUIRE_THROWS_AS(t.dropout(a, -0.1, rng, true), std::invalid_argument);

    Mat ones = Mat::Ones(400, 250);  // 1e5 entries
    auto dropped = t.dropout(t.constant(ones), 0.5, rng, true).value();
    double survivors = (dropped.array() != 0.0).count() / 1e5;
    REQUIRE(survivors == Catch::Approx(0.5).margin(0.01));
    // survivors are scaled by 1/(1-rate)
    REQUIRE(dropped.maxCoeff() == Catch::Approx(2.0));
}

TEST_CASE("backward of sum is all ones and fan-out adds", "[tape]") {
    std::mt19937 rng(8);
    Tape t;
    Mat x = random_mat(3, 4, rng);
    auto a = t.leaf(x);
    auto grads = t.backward(t.sum(a));
    REQUIRE((grads.at(a) - Mat::Ones(3, 4)).cwiseAbs().maxCoeff() == 0.0);

    Tape t2;
    auto b = t2.leaf(x);
    auto twice = t2.add(b, b);
    auto g2 = t2.backward(t2.sum(twice));
    REQUIRE((g2.at(b) - 2.0 * Mat::Ones(3, 4)).cwiseAbs().maxCoeff() == 0.0);

    REQUIRE_THROWS_AS(t2.backward(twice), std::invalid_argument);
}

TEST_CASE("composed expressions match finite differences", "[tape]") {
    // property: random pipelines of the primitives, sizes <= 8x8
    for (unsigned seed = 0; seed < 12; ++seed) {
        std::mt19937 rng(100 + seed);
        int n = 3 + static_cast<int>(seed % 5);
        int d = 2 + static_cast<int>(seed % 4);
        Mat a = random_mat(n, d, rng);
        Mat b = random_mat(d, d, rng);
        Mat c = random_mat(n, d, rng);

        std::vector<int> labels(n), mask;
        for (int i = 0; i < n; ++i) labels[i] = i % n;
        for (int i = 0; i < n; i += 2) mask.push_back(i);

        struct Built {
            Tape tape;
            DiffMatrix xa, xb, xc, loss;
        };
        auto build = [&](Built& g) {
            Tape& t = g.tape;
            g.xa = t.leaf(a);
            g.xb = t.leaf(b);
            g.xc = t.leaf(c);
            auto prod = t.matmul(g.xa, g.xb);                     // n x d
            auto mix = t.lincomb({{0.7, prod}, {-1.3, g.xc}});    // n x d
            auto sig = t.sigmoid(mix);
            auto gram = t.matmul(sig, t.transpose(g.xa));         // n x n
            auto soft = t.softmax_rows(gram);
            auto ce = t.cross_entropy(soft, labels, mask);
            g.loss = t.add(ce, t.scale(t.sum(t.hadamard(mix, mix)), 0.01));
        };

        auto loss = [&]() {
            Built g;
            build(g);
            return g.loss.value()(0, 0);
        };
        dgnn::oracle::FdConfig cfg;
        cfg.samples_per_param = 16;
        cfg.seed = seed;
        auto fd = dgnn::oracle::fd_gradient(loss, {&a, &b, &c}, cfg);

        Built g;
        build(g);
        auto grads = g.tape.backward(g.loss);
        REQUIRE(dgnn::oracle::max_fd_error(
                    fd, {&grads.at(g.xa), &grads.at(g.xb), &grads.at(g.xc)}) < 1e-4);
    }
}

TEST_CASE("forward results are bit-identical across runs", "[tape]") {
    auto run = [](unsigned seed) {
        std::mt19937 rng(seed);
        Tape t;
        Mat a = random_mat(6, 6, rng);
        Mat b = random_mat(6, 6, rng);
        auto out = t.matmul(t.sigmoid(t.matmul(t.constant(a), t.constant(b))), t.constant(a));
        return Mat(out.value());
    };
    Mat r1 = run(42);
    Mat r2 = run(42);
    REQUIRE(std::memcmp(r1.data(), r2.data(), sizeof(double) * r1.size()) == 0);
}

TEST_CASE("spmm propagates and differentiates like its dense equivalent", "[tape]") {
    std::mt19937 rng(9);
    dgnn::SpMat s(4, 4);
    std::vector<Eigen::Triplet<double>> trip{{0, 1, 0.5}, {1, 0, 0.5}, {2, 3, 1.0}, {3, 2, 1.0}, {1, 1, 0.3}};
    s.setFromTriplets(trip.begin(), trip.end());
    Mat x = random_mat(4, 3, rng);

    Tape t;
    auto a = t.leaf(x);
    auto out = t.spmm(s, a);
    REQUIRE((out.value() - Mat(s) * x).cwiseAbs().maxCoeff() < 1e-14);
    auto grads = t.backward(t.sum(out));
    REQUIRE((grads.at(a) - Mat(s).transpose() * Mat::Ones(4, 3)).cwiseAbs().maxCoeff() < 1e-14);
}
