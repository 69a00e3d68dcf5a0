#pragma once

#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dgnn/core.hpp"
#include "dgnn/graph.hpp"

namespace dgnn {

// Dataset directory layout:
//   graph.edges    two whitespace-separated 0-based node ids per line,
//                  '#' starts a comment
//   features.csv   one comma-separated row of decimals per node
//   labels.csv     one integer per line
// All files UTF-8 with LF line endings.

namespace detail {

inline std::string strip_comment(const std::string& line) {
    auto pos = line.find('#');
    return pos == std::string::npos ? line : line.substr(0, pos);
}

inline bool blank(const std::string& s) {
    return s.find_first_not_of(" \t\r\n") == std::string::npos;
}

[[noreturn]] inline void parse_fail(const std::string& file, int line_no, const std::string& why) {
    throw std::runtime_error(file + ":" + std::to_string(line_no) + ": " + why);
}

}  // namespace detail

inline std::vector<std::pair<int, int>> load_edge_list(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<std::pair<int, int>> edges;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string body = detail::strip_comment(line);
        if (detail::blank(body)) continue;
        std::istringstream ss(body);
        long long u, v;
        if (!(ss >> u >> v)) detail::parse_fail(path, line_no, "expected two integer node ids");
        std::string rest;
        if (ss >> rest) detail::parse_fail(path, line_no, "trailing token '" + rest + "'");
        edges.emplace_back(static_cast<int>(u), static_cast<int>(v));
    }
    return edges;
}

inline Mat load_feature_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    int line_no = 0;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::blank(line)) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                double v = std::stod(cell, &used);
                while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
                if (used != cell.size()) throw std::invalid_argument(cell);
                row.push_back(v);
            } catch (const std::exception&) {
                detail::parse_fail(path, line_no, "bad decimal '" + cell + "'");
            }
        }
        if (row.empty()) detail::parse_fail(path, line_no, "empty feature row");
        if (width == 0) width = row.size();
        if (row.size() != width) {
            detail::parse_fail(path, line_no,
                               "row has " + std::to_string(row.size()) + " columns, expected " +
                                   std::to_string(width));
        }
        rows.push_back(std::move(row));
    }
    Mat x(rows.size(), width);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < width; ++j) x(i, j) = rows[i][j];
    }
    return x;
}

inline std::vector<int> load_label_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<int> labels;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::blank(line)) continue;
        try {
            std::size_t used = 0;
            int v = std::stoi(line, &used);
            while (used < line.size() && std::isspace(static_cast<unsigned char>(line[used]))) ++used;
            if (used != line.size()) throw std::invalid_argument(line);
            labels.push_back(v);
        } catch (const std::exception&) {
            detail::parse_fail(path, line_no, "bad label '" + line + "'");
        }
    }
    return labels;
}

/// Loads the declared three-file layout, validating row counts, endpoint
/// ranges and that label ids form a gapless [0, c) range.
inline Graph load_dataset(const std::string& directory) {
    namespace fs = std::filesystem;
    fs::path dir(directory);
    for (const char* name : {"graph.edges", "features.csv", "labels.csv"}) {
        if (!fs::exists(dir / name)) {
            throw std::runtime_error("dataset " + directory + " is missing " + name);
        }
    }
    auto edges = load_edge_list((dir / "graph.edges").string());
    Mat features = load_feature_csv((dir / "features.csv").string());
    auto labels = load_label_csv((dir / "labels.csv").string());
    if (static_cast<int>(labels.size()) != features.rows()) {
        throw std::runtime_error(directory + ": features.csv has " + std::to_string(features.rows()) +
                                 " rows but labels.csv has " + std::to_string(labels.size()));
    }
    Graph g = build_graph(edges, std::move(features), std::move(labels));
    int c = g.num_classes();
    std::vector<bool> seen(c, false);
    for (int l : g.labels) {
        if (l < 0) throw std::runtime_error(directory + ": negative label id");
        seen[l] = true;
    }
    for (int l = 0; l < c; ++l) {
        if (!seen[l]) {
            throw std::runtime_error(directory + ": label ids have a gap at " + std::to_string(l));
        }
    }
    return g;
}

/// Writes a graph back out in the canonical layout (9 significant digits).
inline void write_dataset(const Graph& g, const std::string& directory) {
    namespace fs = std::filesystem;
    fs::create_directories(directory);
    fs::path dir(directory);
    {
        std::ofstream out(dir / "graph.edges");
        if (!out) throw std::runtime_error("cannot write " + (dir / "graph.edges").string());
        for (auto [u, v] : g.edges) out << u << " " << v << "\n";
    }
    {
        std::ofstream out(dir / "features.csv");
        if (!out) throw std::runtime_error("cannot write " + (dir / "features.csv").string());
        char buf[64];
        for (int i = 0; i < g.n; ++i) {
            for (int j = 0; j < g.features.cols(); ++j) {
                std::snprintf(buf, sizeof(buf), "%.9g", g.features(i, j));
                out << (j ? "," : "") << buf;
            }
            out << "\n";
        }
    }
    {
        std::ofstream out(dir / "labels.csv");
        if (!out) throw std::runtime_error("cannot write " + (dir / "labels.csv").string());
        for (int l : g.labels) out << l << "\n";
    }
}

/// Two-level stochastic block model with class-separated Gaussian features.
struct SbmSpec {
    int nodes_per_class = 50;
    int classes = 2;
    double intra_prob = 0.1;   // edge probability within a class
    double inter_prob = 0.01;  // edge probability across classes
    int feature_dim = 8;
    double mean_separation = 2.0;  // distance of class means from the origin
    double noise_scale = 1.0;
    unsigned seed = 1;

    void validate() const {
        if (nodes_per_class <= 0 || classes <= 0) {
            throw std::invalid_argument("SbmSpec: counts must be positive");
        }
        if (intra_prob < 0.0 || intra_prob > 1.0 || inter_prob < 0.0 || inter_prob > 1.0) {
            throw std::invalid_argument("SbmSpec: probabilities must be in [0,1]");
        }
        if (feature_dim <= 0) throw std::invalid_argument("SbmSpec: feature_dim must be positive");
    }
};

/// Seeded SBM draw; identical spec (including seed) gives a bit-identical
/// graph. Class c's feature mean sits on axis (c mod feature_dim).
inline Graph generate_sbm(const SbmSpec& spec) {
    spec.validate();
    std::mt19937 rng(spec.seed);
    const int n = spec.nodes_per_class * spec.classes;
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) labels[i] = i / spec.nodes_per_class;

    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            double p = (labels[i] == labels[j]) ? spec.intra_prob : spec.inter_prob;
            if (u(rng) < p) edges.emplace_back(i, j);
        }
    }
    std::normal_distribution<double> noise(0.0, spec.noise_scale);
    Mat x(n, spec.feature_dim);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < spec.feature_dim; ++j) x(i, j) = noise(rng);
        x(i, labels[i] % spec.feature_dim) += spec.mean_separation;
    }
    return build_graph(edges, std::move(x), std::move(labels));
}

/// CSV export of the learned embedding triple for external projection:
/// node_id,label,f_0..f_{D-1},h_0..h_{D-1},hf_0..hf_{D-1}.
inline void export_embeddings(const EmbeddingState& state, const std::vector<int>& labels,
                              const std::string& path) {
    const Mat& f = state.f.value();
    const Mat& h = state.h.value();
    const Mat& hf = state.hf.value();
    const int n = static_cast<int>(f.rows());
    const int d = static_cast<int>(f.cols());
    if (static_cast<int>(labels.size()) != n) {
        throw std::invalid_argument("export_embeddings: label count != rows");
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("export_embeddings: cannot write " + path);
    out << "node_id,label";
    for (int j = 0; j < d; ++j) out << ",f_" << j;
    for (int j = 0; j < d; ++j) out << ",h_" << j;
    for (int j = 0; j < d; ++j) out << ",hf_" << j;
    out << "\n";
    char buf[64];
    for (int i = 0; i < n; ++i) {
        out << i << "," << labels[i];
        for (const Mat* m : {&f, &h, &hf}) {
            for (int j = 0; j < d; ++j) {
                std::snprintf(buf, sizeof(buf), "%.9g", (*m)(i, j));
                out << "," << buf;
            }
        }
        out << "\n";
    }
}

}  // namespace dgnn
