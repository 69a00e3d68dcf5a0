#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dgnn/types.hpp"

namespace dgnn {

/// Undirected attributed graph. The adjacency is kept as a deduplicated
/// edge list with u < v; it is symmetric and zero-diagonal by construction
/// (self-loops only appear later, inside normalization).
struct Graph {
    int n = 0;
    std::vector<std::pair<int, int>> edges;  // unique pairs, u < v
    Mat features;                            // n x d
    std::vector<int> labels;                 // one class id per node

    int num_nodes() const { return n; }
    int num_edges() const { return static_cast<int>(edges.size()); }
    int feature_dim() const { return static_cast<int>(features.cols()); }

    int num_classes() const {
        int c = 0;
        for (int l : labels) c = std::max(c, l + 1);
        return c;
    }
};

/// The GCN propagation operator A_hat = Dt^{-1/2} (A + I) Dt^{-1/2},
/// with Dt the degree matrix of A + I. Symmetric, entries nonnegative.
struct NormalizedAdjacency {
    SpMat m;

    int size() const { return static_cast<int>(m.rows()); }
};

/// kNN graph over pairwise attribute similarity: 0/1, symmetric,
/// zero-diagonal, each node contributes its k most similar neighbors.
struct SemanticGraph {
    SpMat adjacency;
    int k = 0;
    NormalizedAdjacency normalized;
};

/// Deduplicates, symmetrizes and strips self-loops from a raw edge list and
/// bundles it with features and labels. n is taken from the feature rows.
inline Graph build_graph(const std::vector<std::pair<int, int>>& edge_list,
                         Mat features, std::vector<int> labels) {
    Graph g;
    g.n = static_cast<int>(features.rows());
    if (static_cast<int>(labels.size()) != g.n) {
        throw std::invalid_argument(
            "build_graph: feature rows (" + std::to_string(g.n) +
            ") and label count (" + std::to_string(labels.size()) + ") differ");
    }
    g.edges.reserve(edge_list.size());
    for (auto [u, v] : edge_list) {
        if (u < 0 || u >= g.n || v < 0 || v >= g.n) {
            throw std::invalid_argument("build_graph: edge endpoint (" +
                                        std::to_string(u) + "," + std::to_string(v) +
                                        ") outside [0," + std::to_string(g.n) + ")");
        }
        if (u == v) continue;  // self-loops dropped
        g.edges.emplace_back(std::min(u, v), std::max(u, v));
    }
    std::sort(g.edges.begin(), g.edges.end());
    g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
    g.features = std::move(features);
    g.labels = std::move(labels);
    return g;
}

/// 0/1 adjacency matrix of the graph (symmetric, zero diagonal).
inline SpMat adjacency_matrix(const Graph& g) {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(2 * g.edges.size());
    for (auto [u, v] : g.edges) {
        trip.emplace_back(u, v, 1.0);
        trip.emplace_back(v, u, 1.0);
    }
    SpMat a(g.n, g.n);
    a.setFromTriplets(trip.begin(), trip.end());
    return a;
}

/// A_hat = Dt^{-1/2} (A + I) Dt^{-1/2}. Input must be a symmetric 0/1
/// matrix with zero diagonal; the self-loop keeps every degree positive.
inline NormalizedAdjacency normalize(const SpMat& adjacency) {
    const int n = static_cast<int>(adjacency.rows());
    if (adjacency.cols() != n) {
        throw std::invalid_argument("normalize: adjacency must be square");
    }
    SpMat id(n, n);
    id.setIdentity();
    SpMat at = adjacency + id;  // A + I
    at.makeCompressed();

    Vec dinv_sqrt(n);
    for (int i = 0; i < n; ++i) {
        double deg = 0.0;
        for (SpMat::InnerIterator it(at, i); it; ++it) deg += it.value();
        dinv_sqrt[i] = 1.0 / std::sqrt(deg);
    }
    SpMat ahat = at;
    for (int i = 0; i < n; ++i) {
        for (SpMat::InnerIterator it(ahat, i); it; ++it) {
            it.valueRef() = it.value() * dinv_sqrt[it.row()] * dinv_sqrt[it.col()];
        }
    }
    return NormalizedAdjacency{std::move(ahat)};
}

inline NormalizedAdjacency normalize(const Graph& g) {
    return normalize(adjacency_matrix(g));
}

/// Lt = I - A_hat; symmetric positive semidefinite.
inline SpMat laplacian(const NormalizedAdjacency& na) {
    const int n = na.size();
    SpMat id(n, n);
    id.setIdentity();
    SpMat l = id - na.m;
    l.makeCompressed();
    return l;
}

/// L1 row normalization (the bag-of-words convention: each row scaled to
/// unit absolute sum). Zero rows stay zero. Keeps the magnitude of the
/// unrolled corrections independent of the raw feature scale.
inline Mat l1_row_normalize(const Mat& features) {
    Mat out = features;
    for (int i = 0; i < out.rows(); ++i) {
        double s = out.row(i).cwiseAbs().sum();
        if (s > 0.0) out.row(i) /= s;
    }
    return out;
}

/// Pairwise cosine similarity of feature rows. A zero-norm row is treated
/// as similar to nothing: its entries (including the diagonal) are 0.
inline Mat cosine_similarity(const Mat& features) {
    const int n = static_cast<int>(features.rows());
    Mat unit = features;
    for (int i = 0; i < n; ++i) {
        double norm = unit.row(i).norm();
        if (norm > 0.0) {
            unit.row(i) /= norm;
        } else {
            unit.row(i).setZero();
        }
    }
    Mat sim(n, n);
    sim.noalias() = unit * unit.transpose();
    return sim;
}

/// Top-k neighbor selection per row of a similarity matrix (self excluded,
/// ties to the lower node index), symmetrized by union, then normalized.
inline SemanticGraph semantic_graph(const Mat& sim, int k) {
    const int n = static_cast<int>(sim.rows());
    if (k < 1 || k >= n) {
        throw std::invalid_argument("semantic_graph: k must satisfy 1 <= k < n, got k=" +
                                    std::to_string(k) + ", n=" + std::to_string(n));
    }
    std::vector<std::pair<int, int>> edges;
    edges.reserve(static_cast<std::size_t>(n) * k);
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) {
        order.clear();
        for (int j = 0; j < n; ++j) {
            if (j != i) order.push_back(j);
        }
        std::partial_sort(order.begin(), order.begin() + k, order.end(),
                          [&](int a, int b) {
                              if (sim(i, a) != sim(i, b)) return sim(i, a) > sim(i, b);
                              return a < b;
                          });
        for (int t = 0; t < k; ++t) {
            int j = order[t];
            edges.emplace_back(std::min(i, j), std::max(i, j));
        }
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(2 * edges.size());
    for (auto [u, v] : edges) {
        trip.emplace_back(u, v, 1.0);
        trip.emplace_back(v, u, 1.0);
    }
    SemanticGraph sg;
    sg.k = k;
    sg.adjacency.resize(n, n);
    sg.adjacency.setFromTriplets(trip.begin(), trip.end());
    sg.normalized = normalize(sg.adjacency);
    return sg;
}

/// Fraction of undirected edges whose endpoints share a label.
inline double homophily_rate(const Graph& g) {
    if (g.edges.empty()) {
        throw std::invalid_argument("homophily_rate: empty graph");
    }
    std::size_t same = 0;
    for (auto [u, v] : g.edges) {
        if (g.labels[u] == g.labels[v]) ++same;
    }
    return static_cast<double>(same) / static_cast<double>(g.edges.size());
}

}  // namespace dgnn
