#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dgnn/types.hpp"

namespace dgnn {

class Tape;

/// Handle to a value recorded on a tape. Cheap to copy; the matrix itself
/// lives in the tape node and is immutable once recorded.
struct DiffMatrix {
    Tape* tape = nullptr;
    int id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
    const Mat& value() const;
    int rows() const { return static_cast<int>(value().rows()); }
    int cols() const { return static_cast<int>(value().cols()); }
};

/// Gradients keyed by tape-node id, produced by Tape::backward. Fan-out
/// contributions are accumulated additively.
class GradientStore {
  public:
    bool contains(int id) const { return grads_.count(id) > 0; }
    bool contains(const DiffMatrix& m) const { return contains(m.id); }

    const Mat& at(const DiffMatrix& m) const { return at(m.id); }
    const Mat& at(int id) const {
        auto it = grads_.find(id);
        if (it == grads_.end()) {
            throw std::out_of_range("GradientStore: no gradient for node " + std::to_string(id));
        }
        return it->second;
    }

    void accumulate(int id, const Mat& g) {
        auto it = grads_.find(id);
        if (it == grads_.end()) {
            grads_.emplace(id, g);
        } else {
            it->second += g;
        }
    }

  private:
    std::unordered_map<int, Mat> grads_;
};

/// Reverse-mode tape over dense double-precision matrices. Nodes are
/// recorded in topological order (parents strictly precede children), so
/// one reverse sweep propagates gradients. Every intermediate is retained
/// until the tape is destroyed; memory grows as O(L * N^2) for the
/// unrolled pass, which is the documented cost of this design.
///
/// A tape is single-threaded; independent tapes may run concurrently.
class Tape {
  public:
    /// Records a constant (no gradient is ever requested for it).
    DiffMatrix constant(Mat value) { return record(std::move(value), false, {}, nullptr); }

    /// Records a trainable leaf.
    DiffMatrix leaf(Mat value) { return record(std::move(value), true, {}, nullptr); }

    const Mat& value(int id) const { return nodes_[check(id)].value; }

    /// Cumulative operation count, one unit per scalar fused multiply-add
    /// (a matmul m x k by k x n counts m*k*n; elementwise maps count one
    /// per entry). Used by the complexity tests.
    std::uint64_t ops() const { return ops_; }
    void reset_ops() { ops_ = 0; }

    std::size_t num_nodes() const { return nodes_.size(); }

    /// Bytes held by recorded values (gradients roughly double this).
    std::size_t value_bytes() const { return value_bytes_; }

    // ---- primitive operations -------------------------------------------

    DiffMatrix matmul(const DiffMatrix& a, const DiffMatrix& b) {
        const Mat& av = lookup(a);
        const Mat& bv = lookup(b);
        if (av.cols() != bv.rows()) {
            throw std::invalid_argument(shape_msg("matmul", av, bv));
        }
        ops_ += static_cast<std::uint64_t>(av.rows()) * av.cols() * bv.cols();
        Mat out = av * bv;
        return record(std::move(out), grad_needed({a, b}), {a.id, b.id},
                      [](Tape& t, const Node& n, const Mat& g, GradientStore& gs) {
                          const Mat& av = t.value(n.parents[0]);
                          const Mat& bv = t.value(n.parents[1]);
                          if (t.wants_grad(n.parents[0])) gs.accumulate(n.parents[0], g * bv.transpose());
                          if (t.wants_grad(n.parents[1])) gs.accumulate(n.parents[1], av.transpose() * g);
                      });
    }

    DiffMatrix transpose(const DiffMatrix& a) {
        Mat out = lookup(a).transpose();
        return record(std::move(out), grad_needed({a}), {a.id},
                      [](Tape& t, const Node& n, const Mat& g, GradientStore& gs) {
                          if (t.wants_grad(n.parents[0])) gs.accumulate(n.parents[0], g.transpose());
                      });
    }

    /// sum_i coeff_i * term_i over shape-equal terms.
    DiffMatrix lincomb(const std::vector<std::pair<double, DiffMatrix>>& terms) {
        if (terms.empty()) throw std::invalid_argument("lincomb: no terms");
        const Mat& first = lookup(terms.front().second);
        Mat out = terms.front().first * first;
        std::vector<int> parents{terms.front().second.id};
        std::vector<double> coeffs{terms.front().first};
        bool needs = grad_needed({terms.front().second});
        for (std::size_t i = 1; i < terms.size(); ++i) {
            const Mat& v = lookup(terms[i].second);
            if (v.rows() != out.rows() || v.cols() != out.cols()) {
                throw std::invalid_argument(shape_msg("lincomb", out, v));
            }
            out += terms[i].first * v;
            parents.push_back(terms[i].second.id);
            coeffs.push_back(terms[i].first);
            needs = needs || grad_needed({terms[i].second});
        }
        ops_ += static_cast<std::uint64_t>(terms.size()) * out.rows() * out.cols();
        return record(std::move(out), needs, std::move(parents),
                      [coeffs](Tape& t, const Node& n, const Mat& g, GradientStore& gs) {
                          for (std::size_t i = 0; i < n.parents.size(); ++i) {
                              if (t.wants_grad(n.parents[i])) gs.accumulate(n.parents[i], coeffs[i] * g);
                          }
                      });
    }

    DiffMatrix add(const DiffMatrix& a, const DiffMatrix& b) { return lincomb({{1.0, a}, {1.0, b}}); }
    DiffMatrix sub(const DiffMatrix& a, const DiffMatrix& b) { return lincomb({{1.0, a}, {-1.0, b}}); }
    DiffMatrix scale(const DiffMatrix& a, double s) { return lincomb({{s, a}}); }

    /// Elementwise product.
    DiffMatrix hadamard(const DiffMatrix& a, const DiffMatrix& b) {
        const Mat& av = lookup(a);
        const Mat& bv = lookup(b);
        if (av.rows() != bv.rows() || av.cols() != bv.cols()) {
            throw std::invalid_argument(shape_msg("hadamard", av, bv));
        }
        ops_ += static_cast<std::uint64_t>(av.rows()) * av.cols();
        Mat out = av.cwiseProduct(bv);
        return record(std::move(out), grad_needed({a, b}), {a.id, b.id},
                      [](Tape& t, const Node& n, const Mat& g, GradientStore& gs) {
                          const Mat& av = t.value(n.parents[0]);
                          const Mat& bv = t.value(n.parents[1]);
                          if (t.wants_grad(n.parents[0])) gs.accumulate(n.parents[0], g.cwiseProduct(bv));
                          if (t.wants_grad(n.parents[1])) gs.accumulate(n.parents[1], g.cwiseProduct(av));
                      });
    }

    /// Elementwise logistic function 1 / (1 + exp(-x)).
    DiffMatrix sigmoid(const DiffMatrix& a) {
        const Mat& av = lookup(a);
        Mat out = av.unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
        ops_ += static_cast<std::uint64_t>(av.rows()) * av.cols();
        return record(std::move(out), grad_needed({a}), {a.id},
                      [](Tape& t, const Node& n, const Mat& g, GradientStore& gs) {
                          if (!t.wants_grad(n.parents[0])) return;
                          const Mat& y = n.value;
                          gs.accumulate(n.parents[0],
                                        (y.array() * (1.0 - y.array()) * g.array()).matrix());
                      });
    }

    /// Row-wise softmax, stabilized by per-row max subtraction.
    DiffMatrix softmax_rows(const DiffMatrix& a) {
        const Mat& av = lookup(a);
        Mat out(av.rows(), av.cols());
        for (int i = 0; i < av.rows(); ++i) {
            double m = av.row(i).maxCoeff();
            Eigen::ArrayXd e = (av.row(i).array() - m).exp();
            out.row(i) = (e / e.sum()).matrix();
        }
        ops_ += 3 * static_cast<std::uint64_t>(av.rows()) * av.cols();
        return record(std::move(out), grad_needed({a}), {a.id},
                      [](Tape& t, const Node& n, const Mat& g, GradientStore& gs) {
                          if (!t.wants_grad(n.parents[0])) return;
                          const Mat& y = n.value;
                          Mat dx(y.rows(), y.cols());
                          for (int i = 0; i < y.rows(); ++i) {
                              double dot = y.row(i).dot(g.row(i));
                              dx.row(i) = (y.row(i).array() * (g.row(i).array() - dot)).matrix();
                          }
                          gs.accumulate(n.parents[0], dx);
                      });
    }

    /// Mean of -log p[true class] over the masked rows. `probs` must hold
    /// row-stochastic values (softmax output); result is a 1x1 node.
    DiffMatrix cross_entropy(const DiffMatrix& probs, const std::vector<int>& labels,
                             const std::vector<int>& mask) {
        const Mat& pv = lookup(probs);
        if (mask.empty()) throw std::invalid_argument("cross_entropy: empty mask");
        if (static_cast<int>(labels.size()) != pv.rows()) {
            throw std::invalid_argument("cross_entropy: label count != rows");
        }
        double loss = 0.0;
        for (int i : mask) {
            if (i < 0 || i >= pv.rows()) throw std::invalid_argument("cross_entropy: mask index out of range");
            int y = labels[i];
            if (y < 0 || y >= pv.cols()) {
                throw std::invalid_argument("cross_entropy: label " + std::to_string(y) +
                                            " out of range for " + std::to_string(pv.cols()) + " classes");
            }
            loss -= std::log(pv(i, y));
        }
        loss /= static_cast<double>(mask.size());
        ops_ += 2 * mask.size();
        Mat out(1, 1);
        out(0, 0) = loss;
        auto labels_copy = labels;
        auto mask_copy = mask;
        return record(std::move(out), grad_needed({probs}), {probs.id},
                      [labels_copy, mask_copy](Tape& t, const Node& n, const Mat& g, GradientStore& gs) {
                          if (!t.wants_grad(n.parents[0])) return;
                          const Mat& p = t.value(n.parents[0]);
                          Mat dp = Mat::Zero(p.rows(), p.cols());
                          double scale = g(0, 0) / static_cast<double>(mask_copy.size());
                          for (int i : mask_copy) {
                              int y = labels_copy[i];
                              dp(i, y) -= scale / p(i, y);
                          }
                          gs.accumulate(n.parents[0], dp);
                      });
    }

    /// Inverted dropout: zero with probability `rate`, scale survivors by
    /// 1/(1-rate). Identity in eval mode or at rate 0.
    DiffMatrix dropout(const DiffMatrix& a, double rate, std::mt19937& rng, bool training) {
        if (rate < 0.0 || rate >= 1.0) {
            throw std::invalid_argument("dropout: rate must be in [0,1), got " + std::to_string(rate));
        }
        if (!training || rate == 0.0) return a;
        const Mat& av = lookup(a);
        std::bernoulli_distribution keep(1.0 - rate);
        double inv = 1.0 / (1.0 - rate);
        Mat mask(av.rows(), av.cols());
        for (int i = 0; i < av.rows(); ++i) {
            for (int j = 0; j < av.cols(); ++j) {
                mask(i, j) = keep(rng) ? inv : 0.0;
            }
        }
        ops_ += static_cast<std::uint64_t>(av.rows()) * av.cols();
        Mat out = av.cwiseProduct(mask);
        auto mask_shared = std::make_shared<Mat>(std::move(mask));
        return record(std::move(out), grad_needed({a}), {a.id},
                      [mask_shared](Tape& t, const Node& n, const Mat& g, GradientStore& gs) {
                          if (t.wants_grad(n.parents[0]))
                              gs.accumulate(n.parents[0], g.cwiseProduct(*mask_shared));
                      });
    }

    /// Sparse constant times dense node; the propagation step A_hat * H.
    DiffMatrix spmm(const SpMat& s, const DiffMatrix& a) {
        const Mat& av = lookup(a);
        if (s.cols() != av.rows()) {
            throw std::invalid_argument("spmm: inner dimensions differ");
        }
        ops_ += static_cast<std::uint64_t>(s.nonZeros()) * av.cols();
        Mat out = s * av;
        auto s_shared = std::make_shared<SpMat>(s);
        return record(std::move(out), grad_needed({a}), {a.id},
                      [s_shared](Tape& t, const Node& n, const Mat& g, GradientStore& gs) {
                          if (t.wants_grad(n.parents[0]))
                              gs.accumulate(n.parents[0], SpMat(s_shared->transpose()) * g);
                      });
    }

    /// Adds a 1 x c row vector to every row of a.
    DiffMatrix add_row_vector(const DiffMatrix& a, const DiffMatrix& row) {
        const Mat& av = lookup(a);
        const Mat& rv = lookup(row);
        if (rv.rows() != 1 || rv.cols() != av.cols()) {
            throw std::invalid_argument(shape_msg("add_row_vector", av, rv));
        }
        ops_ += static_cast<std::uint64_t>(av.rows()) * av.cols();
        Mat out = av.rowwise() + rv.row(0);
        return record(std::move(out), grad_needed({a, row}), {a.id, row.id},
                      [](Tape& t, const Node& n, const Mat& g, GradientStore& gs) {
                          if (t.wants_grad(n.parents[0])) gs.accumulate(n.parents[0], g);
                          if (t.wants_grad(n.parents[1])) gs.accumulate(n.parents[1], g.colwise().sum());
                      });
    }

    /// Column-block concatenation [parts_0, parts_1, ...].
    DiffMatrix concat_cols(const std::vector<DiffMatrix>& parts) {
        if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
        int rows = lookup(parts[0]).rows();
        int cols = 0;
        std::vector<int> parents;
        std::vector<int> offsets;
        bool needs = false;
        for (const auto& p : parts) {
            const Mat& v = lookup(p);
            if (v.rows() != rows) throw std::invalid_argument("concat_cols: row counts differ");
            offsets.push_back(cols);
            cols += static_cast<int>(v.cols());
            parents.push_back(p.id);
            needs = needs || grad_needed({p});
        }
        Mat out(rows, cols);
        for (std::size_t i = 0; i < parts.size(); ++i) {
            out.middleCols(offsets[i], lookup(parts[i]).cols()) = lookup(parts[i]);
        }
        return record(std::move(out), needs, std::move(parents),
                      [offsets](Tape& t, const Node& n, const Mat& g, GradientStore& gs) {
                          for (std::size_t i = 0; i < n.parents.size(); ++i) {
                              const Mat& v = t.value(n.parents[i]);
                              if (t.wants_grad(n.parents[i]))
                                  gs.accumulate(n.parents[i], g.middleCols(offsets[i], v.cols()));
                          }
                      });
    }

    /// Sum of all entries as a 1x1 node.
    DiffMatrix sum(const DiffMatrix& a) {
        const Mat& av = lookup(a);
        ops_ += static_cast<std::uint64_t>(av.rows()) * av.cols();
        Mat out(1, 1);
        out(0, 0) = av.sum();
        return record(std::move(out), grad_needed({a}), {a.id},
                      [](Tape& t, const Node& n, const Mat& g, GradientStore& gs) {
                          const Mat& av = t.value(n.parents[0]);
                          if (t.wants_grad(n.parents[0]))
                              gs.accumulate(n.parents[0], Mat::Constant(av.rows(), av.cols(), g(0, 0)));
                      });
    }

    /// Reverse sweep from a scalar (1x1) node. Returns gradients for every
    /// node that (transitively) requires one.
    GradientStore backward(const DiffMatrix& loss) {
        const Mat& lv = lookup(loss);
        if (lv.rows() != 1 || lv.cols() != 1) {
            throw std::invalid_argument("backward: loss must be 1x1, got " +
                                        std::to_string(lv.rows()) + "x" + std::to_string(lv.cols()));
        }
        GradientStore gs;
        gs.accumulate(loss.id, Mat::Ones(1, 1));
        for (int id = loss.id; id >= 0; --id) {
            Node& n = nodes_[id];
            if (!n.requires_grad || !n.backward || !gs.contains(id)) continue;
            n.backward(*this, n, gs.at(id), gs);
        }
        return gs;
    }

  private:
    struct Node;
    using BackwardFn = std::function<void(Tape&, const Node&, const Mat&, GradientStore&)>;

    struct Node {
        Mat value;
        bool requires_grad = false;
        std::vector<int> parents;
        BackwardFn backward;
    };

    friend struct DiffMatrix;

    int check(int id) const {
        if (id < 0 || id >= static_cast<int>(nodes_.size())) {
            throw std::out_of_range("Tape: bad node id " + std::to_string(id));
        }
        return id;
    }

    const Mat& lookup(const DiffMatrix& m) const {
        if (m.tape != this) throw std::invalid_argument("Tape: node belongs to another tape");
        return nodes_[check(m.id)].value;
    }

    bool wants_grad(int id) const { return nodes_[id].requires_grad; }

    bool grad_needed(std::initializer_list<DiffMatrix> parents) const {
        for (const auto& p : parents) {
            if (nodes_[check(p.id)].requires_grad) return true;
        }
        return false;
    }

    DiffMatrix record(Mat value, bool requires_grad, std::vector<int> parents, BackwardFn fn) {
        value_bytes_ += sizeof(double) * static_cast<std::size_t>(value.size());
        nodes_.push_back(Node{std::move(value), requires_grad, std::move(parents), std::move(fn)});
        return DiffMatrix{this, static_cast<int>(nodes_.size()) - 1};
    }

    static std::string shape_msg(const char* op, const Mat& a, const Mat& b) {
        return std::string(op) + ": shapes " + std::to_string(a.rows()) + "x" +
               std::to_string(a.cols()) + " and " + std::to_string(b.rows()) + "x" +
               std::to_string(b.cols()) + " do not conform";
    }

    std::vector<Node> nodes_;
    std::uint64_t ops_ = 0;
    std::size_t value_bytes_ = 0;
};

inline const Mat& DiffMatrix::value() const {
    if (!valid()) throw std::logic_error("DiffMatrix: empty handle");
    return tape->value(id);
}

}  // namespace dgnn
