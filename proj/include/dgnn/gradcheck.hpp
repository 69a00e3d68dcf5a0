#pragma once

#include <random>
#include <vector>

#include "dgnn/core.hpp"
#include "dgnn/graph.hpp"
#include "dgnn/oracle.hpp"
#include "dgnn/tape.hpp"
#include "dgnn/trainer.hpp"

namespace dgnn {

struct GradCheckResult {
    double max_rel_error = 0.0;
    int instances = 0;
    bool pass = false;
};

namespace detail {

struct GradCheckInstance {
    Mat x, w, wc, b;
    NormalizedAdjacency na, na_f;
    std::vector<int> labels, mask;
};

inline NormalizedAdjacency gradcheck_adjacency(int n, std::mt19937& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::pair<int, int>> edges;
    for (int i = 1; i < n; ++i) edges.emplace_back(i - 1, i);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 2; j < n; ++j) {
            if (u(rng) < 0.4) edges.emplace_back(i, j);
        }
    }
    return normalize(build_graph(edges, Mat::Zero(n, 1), std::vector<int>(n, 0)));
}

inline GradCheckInstance make_gradcheck_instance(int n, int d, int classes, std::mt19937& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    GradCheckInstance in;
    in.x = Mat(n, d);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) in.x(i, j) = u(rng);
    }
    in.na = gradcheck_adjacency(n, rng);
    in.na_f = gradcheck_adjacency(n, rng);
    in.w = Mat::Identity(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) in.w(i, j) += 0.01 * u(rng);
    }
    in.wc = Mat(3 * d, classes);
    for (int i = 0; i < 3 * d; ++i) {
        for (int j = 0; j < classes; ++j) in.wc(i, j) = 0.5 * u(rng);
    }
    in.b = Mat(1, classes);
    for (int j = 0; j < classes; ++j) in.b(0, j) = 0.1 * u(rng);
    std::uniform_int_distribution<int> cls(0, classes - 1);
    in.labels.resize(n);
    for (int i = 0; i < n; ++i) in.labels[i] = cls(rng);
    for (int i = 0; i < n; i += 2) in.mask.push_back(i);
    return in;
}

struct GradCheckGraph {
    Tape tape;
    DiffMatrix w, wc, b, loss;
};

inline void build_gradcheck_loss(GradCheckGraph& g, const GradCheckInstance& in,
                                 const DgnnHyperparams& hp) {
    g.w = g.tape.leaf(in.w);
    g.wc = g.tape.leaf(in.wc);
    g.b = g.tape.leaf(in.b);
    ReconFactor rf{g.w};
    auto x = g.tape.constant(in.x);
    auto state = forward(x, in.na, in.na_f, rf, hp);
    auto probs = predict(g.tape, concat(state), g.wc, g.b);
    g.loss = g.tape.cross_entropy(probs, in.labels, in.mask);
}

}  // namespace detail

/// Checks d(loss)/d{W, Wc, b} of the full classification loss against
/// central finite differences over `instances` random instances.
inline GradCheckResult gradient_check(int n, int d, int instances, const DgnnHyperparams& hp,
                                      const oracle::FdConfig& cfg = {}, unsigned seed = 7) {
    GradCheckResult result;
    result.instances = instances;
    std::mt19937 rng(seed);
    for (int i = 0; i < instances; ++i) {
        auto in = detail::make_gradcheck_instance(n, d, 3, rng);
        auto loss = [&]() {
            detail::GradCheckGraph g;
            detail::build_gradcheck_loss(g, in, hp);
            return g.loss.value()(0, 0);
        };
        oracle::FdConfig inst_cfg = cfg;
        inst_cfg.seed = cfg.seed + i;
        auto fd = oracle::fd_gradient(loss, {&in.w, &in.wc, &in.b}, inst_cfg);

        detail::GradCheckGraph g;
        detail::build_gradcheck_loss(g, in, hp);
        auto grads = g.tape.backward(g.loss);
        double err = oracle::max_fd_error(
            fd, {&grads.at(g.w), &grads.at(g.wc), &grads.at(g.b)});
        result.max_rel_error = std::max(result.max_rel_error, err);
    }
    result.pass = result.max_rel_error < cfg.tolerance;
    return result;
}

}  // namespace dgnn
