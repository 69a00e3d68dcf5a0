#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <future>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dgnn/core.hpp"
#include "dgnn/graph.hpp"
#include "dgnn/tape.hpp"

namespace dgnn {

/// Disjoint 60/20/20 train/val/test node split (floor proportions,
/// remainder to test) from a seeded shuffle.
struct Split {
    std::vector<int> train, val, test;
};

inline Split make_split(int n, unsigned seed) {
    if (n < 5) throw std::invalid_argument("make_split: need at least 5 nodes");
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    int n_train = static_cast<int>(std::floor(0.6 * n));
    int n_val = static_cast<int>(std::floor(0.2 * n));
    Split s;
    s.train.assign(perm.begin(), perm.begin() + n_train);
    s.val.assign(perm.begin() + n_train, perm.begin() + n_train + n_val);
    s.test.assign(perm.begin() + n_train + n_val, perm.end());
    return s;
}

/// Fully connected head: logits = Z Wc + b with Wc in R^{3D x c}. The
/// logical blocks W1/W2/W3 act on F/H/Hf respectively.
struct ClassifierParams {
    Mat wc;  // 3d x c
    Mat b;   // 1 x c
};

struct TrainConfig {
    double lr = 0.01;
    double dropout = 0.0;
    int max_epochs = 500;
    int patience = 100;  // epochs without val-accuracy improvement
    double weight_decay = 5e-4;
    // Linear learning-rate warmup. Early Adam steps move every element by
    // ~lr, which on a d x d factor with a coherent gradient direction is a
    // spectral jump of order lr*d; ramping the rate lets the second-moment
    // estimates settle first.
    int warmup_epochs = 20;
    int semantic_k = 5;
    bool normalize_features = true;  // L1 row normalization before propagation
    unsigned seed = 1;
    std::size_t memory_budget = kDefaultMemoryBudget;

    void validate() const {
        if (lr <= 0.0) throw std::invalid_argument("TrainConfig: lr must be positive");
        if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("TrainConfig: dropout in [0,1)");
        if (max_epochs < 1) throw std::invalid_argument("TrainConfig: max_epochs must be >= 1");
        if (patience < 1) throw std::invalid_argument("TrainConfig: patience must be >= 1");
        if (semantic_k < 1) throw std::invalid_argument("TrainConfig: semantic_k must be >= 1");
    }
};

struct EpochStats {
    int epoch = 0;
    double objective = 0.0;  // four-term layer objective at the eval state
    double loss = 0.0;       // masked training cross-entropy
    double train_acc = 0.0;
    double val_acc = 0.0;
    double test_acc = 0.0;
};

struct TrainReport {
    unsigned seed = 0;
    std::vector<EpochStats> epochs;
    int best_epoch = 0;        // 1-based epoch of max validation accuracy
    double test_accuracy = 0;  // test accuracy at the best epoch
    double wall_seconds = 0;
};

/// Portable trained parameter values.
struct TrainedParams {
    Mat w;   // d x d reconstruction factor
    Mat wc;  // 3d x c classifier
    Mat b;   // 1 x c bias
};

/// Z = [F, H, Hf].
inline DiffMatrix concat(const EmbeddingState& state) {
    return state.f.tape->concat_cols({state.f, state.h, state.hf});
}

/// softmax(Z Wc + b) on the tape.
inline DiffMatrix predict(Tape& tape, const DiffMatrix& z, const DiffMatrix& wc,
                          const DiffMatrix& b) {
    return tape.softmax_rows(tape.add_row_vector(tape.matmul(z, wc), b));
}

/// Value-level prediction for evaluation paths.
inline Mat predict(const Mat& z, const ClassifierParams& cp) {
    Mat logits = (z * cp.wc).rowwise() + cp.b.row(0);
    Mat probs(logits.rows(), logits.cols());
    for (int i = 0; i < logits.rows(); ++i) {
        double m = logits.row(i).maxCoeff();
        Eigen::ArrayXd e = (logits.row(i).array() - m).exp();
        probs.row(i) = (e / e.sum()).matrix();
    }
    return probs;
}

inline double accuracy(const Mat& probs, const std::vector<int>& labels,
                       const std::vector<int>& subset) {
    if (subset.empty()) throw std::invalid_argument("accuracy: empty subset");
    int correct = 0;
    for (int i : subset) {
        int argmax = 0;
        probs.row(i).maxCoeff(&argmax);
        if (argmax == labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(subset.size());
}

namespace detail {

/// Adam with L2 weight decay folded into the gradient and a linear
/// learning-rate warmup over the first `warmup` steps.
struct Adam {
    double lr, beta1 = 0.9, beta2 = 0.999, eps = 1e-8, weight_decay;
    int warmup;
    int t = 0;
    std::vector<Mat> m, v;

    Adam(double lr_, double wd, int warmup_steps, const std::vector<const Mat*>& params)
        : lr(lr_), weight_decay(wd), warmup(warmup_steps) {
        for (const Mat* p : params) {
            m.push_back(Mat::Zero(p->rows(), p->cols()));
            v.push_back(Mat::Zero(p->rows(), p->cols()));
        }
    }

    void step(const std::vector<Mat*>& params, const std::vector<const Mat*>& grads) {
        ++t;
        double rate = lr;
        if (warmup > 0 && t <= warmup) rate = lr * static_cast<double>(t) / warmup;
        double bc1 = 1.0 - std::pow(beta1, t);
        double bc2 = 1.0 - std::pow(beta2, t);
        for (std::size_t i = 0; i < params.size(); ++i) {
            Mat g = *grads[i] + weight_decay * (*params[i]);
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g.cwiseProduct(g);
            Mat mhat = m[i] / bc1;
            Mat vhat = v[i] / bc2;
            *params[i] -= rate * (mhat.array() / (vhat.array().sqrt() + eps)).matrix();
        }
    }
};

}  // namespace detail

/// Precomputed graph operators and the training-ready feature matrix,
/// shared across trials of one dataset.
struct GraphOperators {
    NormalizedAdjacency na;
    NormalizedAdjacency na_f;
    SpMat lap;
    SpMat lap_f;
    Mat features;  // row-normalized unless configured otherwise
};

inline GraphOperators build_operators(const Graph& g, int semantic_k,
                                      bool normalize_features = true) {
    GraphOperators ops;
    ops.na = normalize(g);
    // cosine similarity is row-scale invariant, so the semantic graph is
    // the same either way
    ops.na_f = semantic_graph(cosine_similarity(g.features), semantic_k).normalized;
    ops.lap = laplacian(ops.na);
    ops.lap_f = laplacian(ops.na_f);
    ops.features = normalize_features ? l1_row_normalize(g.features) : g.features;
    return ops;
}

namespace detail {

struct EvalOutcome {
    Mat probs;
    double objective = 0.0;
};

/// Forward + head in eval mode (no dropout, no gradients) on a scratch tape.
inline EvalOutcome evaluate_model(const GraphOperators& ops, const DgnnHyperparams& hp,
                                  const TrainedParams& params, std::size_t memory_budget) {
    Tape t;
    ReconFactor rf{t.constant(params.w)};
    auto x = t.constant(ops.features);
    auto state = forward(x, ops.na, ops.na_f, rf, hp, memory_budget);
    auto z = concat(state);
    EvalOutcome out;
    out.probs = predict(z.value(), ClassifierParams{params.wc, params.b});
    out.objective = objective_value(state, ops.features, ops.lap, ops.lap_f, rf, hp);
    return out;
}

}  // namespace detail

/// End-to-end semi-supervised training. Per epoch: dropout on X, unrolled
/// forward, dropout on Z, masked cross-entropy on the training split,
/// backward, Adam step on {W, Wc, b}; then an eval-mode pass for the
/// objective and the three accuracies. The best-validation epoch's
/// parameters are restored and its test accuracy is reported.
inline std::pair<TrainedParams, TrainReport> train(const Graph& g, const GraphOperators& ops,
                                                   const DgnnHyperparams& hp,
                                                   const TrainConfig& tc, const Split& split) {
    hp.validate();
    tc.validate();
    auto t_start = std::chrono::steady_clock::now();

    const int d = g.feature_dim();
    const int c = g.num_classes();
    std::mt19937 init_rng(tc.seed);
    std::mt19937 dropout_rng(tc.seed ^ 0x9e3779b9u);

    TrainedParams params;
    {
        Tape t;
        params.w = make_recon_factor(t, d, init_rng).w.value();
    }
    double glorot = std::sqrt(6.0 / (3.0 * d + c));
    std::uniform_real_distribution<double> u(-glorot, glorot);
    params.wc = Mat(3 * d, c);
    for (int i = 0; i < params.wc.rows(); ++i) {
        for (int j = 0; j < c; ++j) params.wc(i, j) = u(init_rng);
    }
    params.b = Mat::Zero(1, c);

    detail::Adam adam(tc.lr, tc.weight_decay, tc.warmup_epochs,
                      {&params.w, &params.wc, &params.b});

    TrainReport report;
    report.seed = tc.seed;
    TrainedParams best = params;
    double best_val = -1.0;
    double best_loss = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    double best_test = 0.0;

    for (int epoch = 1; epoch <= tc.max_epochs; ++epoch) {
        Tape t;
        auto w = t.leaf(params.w);
        auto wc = t.leaf(params.wc);
        auto b = t.leaf(params.b);
        ReconFactor rf{w};
        auto x = t.constant(ops.features);
        auto x_in = t.dropout(x, tc.dropout, dropout_rng, true);
        auto state = forward(x_in, ops.na, ops.na_f, rf, hp, tc.memory_budget);
        auto z = t.dropout(concat(state), tc.dropout, dropout_rng, true);
        auto probs = predict(t, z, wc, b);
        auto loss = t.cross_entropy(probs, g.labels, split.train);
        double loss_value = loss.value()(0, 0);
        if (!std::isfinite(loss_value)) {
            throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                                     " (seed " + std::to_string(tc.seed) +
                                     "); try a lower learning rate");
        }
        auto grads = t.backward(loss);
        // beta = 0 detaches W from the loss entirely; its gradient is zero
        auto grad_or_zero = [&](const DiffMatrix& leaf) {
            return grads.contains(leaf) ? grads.at(leaf)
                                        : Mat::Zero(leaf.rows(), leaf.cols());
        };
        Mat gw = grad_or_zero(w);
        Mat gwc = grad_or_zero(wc);
        Mat gb = grad_or_zero(b);

        // metrics describe the parameters the forward pass used, so they
        // are taken before the optimizer step
        detail::EvalOutcome eval;
        if (tc.dropout == 0.0) {
            // eval-mode pass equals the training pass when dropout is off
            eval.probs = probs.value();
            eval.objective = objective_value(state, ops.features, ops.lap, ops.lap_f, rf, hp);
        } else {
            eval = detail::evaluate_model(ops, hp, params, tc.memory_budget);
        }

        EpochStats es;
        es.epoch = epoch;
        es.loss = loss_value;
        es.objective = eval.objective;
        es.train_acc = accuracy(eval.probs, g.labels, split.train);
        es.val_acc = accuracy(eval.probs, g.labels, split.val);
        es.test_acc = accuracy(eval.probs, g.labels, split.test);
        report.epochs.push_back(es);

        // validation accuracy drives model selection; ties (frequent when
        // the validation set is small) go to the lower training loss
        if (es.val_acc > best_val || (es.val_acc == best_val && es.loss < best_loss)) {
            best_val = es.val_acc;
            best_loss = es.loss;
            best = params;
            best_epoch = epoch;
            best_test = es.test_acc;
        }

        adam.step({&params.w, &params.wc, &params.b}, {&gw, &gwc, &gb});

        if (epoch - best_epoch >= tc.patience) break;
    }

    report.best_epoch = best_epoch;
    report.test_accuracy = best_test;
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return {std::move(best), std::move(report)};
}

inline std::pair<TrainedParams, TrainReport> train(const Graph& g, const DgnnHyperparams& hp,
                                                   const TrainConfig& tc, const Split& split) {
    return train(g, build_operators(g, tc.semantic_k, tc.normalize_features), hp, tc, split);
}

/// Accuracy of trained parameters on a node subset, eval mode.
inline double evaluate(const Graph& g, const GraphOperators& ops, const DgnnHyperparams& hp,
                       const TrainedParams& params, const std::vector<int>& subset,
                       std::size_t memory_budget = kDefaultMemoryBudget) {
    auto eval = detail::evaluate_model(ops, hp, params, memory_budget);
    return accuracy(eval.probs, g.labels, subset);
}

struct TrialsSummary {
    std::vector<TrainReport> reports;
    double mean = 0.0;  // mean test accuracy over seeds
    double stddev = 0.0;  // sample standard deviation

    /// "91.06±0.36"-style percentage formatting.
    std::string formatted() const {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.2f±%.2f", 100.0 * mean, 100.0 * stddev);
        return buf;
    }
};

/// Independent split + initialization per seed; mean and sample standard
/// deviation of the per-seed test accuracies. jobs > 1 runs seeds in
/// worker threads (each trial owns its tape and generators).
inline TrialsSummary run_trials(const Graph& g, const GraphOperators& ops,
                                const DgnnHyperparams& hp, const TrainConfig& tc,
                                const std::vector<unsigned>& seeds, int jobs = 1) {
    if (seeds.size() < 2) throw std::invalid_argument("run_trials: need at least 2 seeds");
    TrialsSummary out;
    out.reports.resize(seeds.size());

    auto run_one = [&](std::size_t i) {
        TrainConfig tci = tc;
        tci.seed = seeds[i];
        Split split = make_split(g.n, seeds[i]);
        out.reports[i] = train(g, ops, hp, tci, split).second;
    };

    if (jobs <= 1) {
        for (std::size_t i = 0; i < seeds.size(); ++i) run_one(i);
    } else {
        std::vector<std::future<void>> fut;
        std::size_t next = 0;
        while (next < seeds.size() || !fut.empty()) {
            while (static_cast<int>(fut.size()) < jobs && next < seeds.size()) {
                fut.push_back(std::async(std::launch::async, run_one, next++));
            }
            fut.front().get();
            fut.erase(fut.begin());
        }
    }

    double sum = 0.0;
    for (const auto& r : out.reports) sum += r.test_accuracy;
    out.mean = sum / static_cast<double>(out.reports.size());
    double sq = 0.0;
    for (const auto& r : out.reports) sq += (r.test_accuracy - out.mean) * (r.test_accuracy - out.mean);
    out.stddev = std::sqrt(sq / static_cast<double>(out.reports.size() - 1));
    return out;
}

inline TrialsSummary run_trials(const Graph& g, const DgnnHyperparams& hp, const TrainConfig& tc,
                                const std::vector<unsigned>& seeds, int jobs = 1) {
    return run_trials(g, build_operators(g, tc.semantic_k, tc.normalize_features), hp, tc, seeds, jobs);
}

struct SweepRow {
    double lambda, alpha, beta, epsilon;
    TrialsSummary result;
};

/// One run_trials per epsilon value.
inline std::vector<SweepRow> sweep_epsilon(const Graph& g, const GraphOperators& ops,
                                           DgnnHyperparams hp, const TrainConfig& tc,
                                           const std::vector<double>& values,
                                           const std::vector<unsigned>& seeds, int jobs = 1) {
    std::vector<SweepRow> rows;
    for (double eps : values) {
        hp.epsilon = eps;
        hp.validate();
        rows.push_back({hp.lambda, hp.alpha, hp.beta, eps,
                        run_trials(g, ops, hp, tc, seeds, jobs)});
    }
    return rows;
}

/// (lambda, alpha) grid at the fixed beta carried by hp.
inline std::vector<SweepRow> sweep_lambda_alpha(const Graph& g, const GraphOperators& ops,
                                                DgnnHyperparams hp, const TrainConfig& tc,
                                                const std::vector<double>& lambdas,
                                                const std::vector<double>& alphas,
                                                const std::vector<unsigned>& seeds, int jobs = 1) {
    std::vector<SweepRow> rows;
    for (double l : lambdas) {
        for (double a : alphas) {
            hp.lambda = l;
            hp.alpha = a;
            hp.validate();
            rows.push_back({l, a, hp.beta, hp.epsilon, run_trials(g, ops, hp, tc, seeds, jobs)});
        }
    }
    return rows;
}

// ---- report serialization -------------------------------------------------

inline std::string report_csv_header() {
    return "seed,epoch,objective,loss,train_acc,val_acc,test_acc";
}

inline std::string report_csv_row(const TrainReport& r, const EpochStats& e) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%u,%d,%.9g,%.9g,%.9g,%.9g,%.9g", r.seed, e.epoch, e.objective,
                  e.loss, e.train_acc, e.val_acc, e.test_acc);
    return buf;
}

inline std::string reports_to_csv(const std::vector<TrainReport>& reports) {
    std::string out = report_csv_header() + "\n";
    for (const auto& r : reports) {
        for (const auto& e : r.epochs) out += report_csv_row(r, e) + "\n";
    }
    return out;
}

inline std::string summary_markdown_row(const std::string& name, const TrialsSummary& s) {
    return "| " + name + " | " + s.formatted() + " |";
}

}  // namespace dgnn
