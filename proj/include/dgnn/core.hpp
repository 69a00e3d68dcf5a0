#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "dgnn/graph.hpp"
#include "dgnn/tape.hpp"
#include "dgnn/types.hpp"

namespace dgnn {

/// network: the unrolled update rules apply the sigmoid to the consistency
/// bracket, as used for training. analytic: the sigmoid is omitted, which
/// matches the stationarity conditions and gives clean fixed-point
/// semantics for the property tests.
enum class DgnnMode { network, analytic };

struct DgnnHyperparams {
    double lambda = 1.0;   // topological smoothing weight
    double alpha = 1.0;    // semantic smoothing weight
    double beta = 0.0;     // structural-consistency weight
    double epsilon = 0.5;  // graph-mix coefficient
    int layers = 2;        // unrolled iterations L
    DgnnMode mode = DgnnMode::network;
    // When set, S*Ws + S*Ws^T is computed as 2*S*Ws, valid because
    // Ws = W W^T is symmetric. The printed two-product form stays available
    // and the two paths are checked against each other in the tests.
    bool exploit_symmetric_ws = true;

    void validate() const {
        if (lambda < 0.0) throw std::invalid_argument("hyperparams: lambda must be >= 0");
        if (alpha < 0.0) throw std::invalid_argument("hyperparams: alpha must be >= 0");
        if (beta < 0.0) throw std::invalid_argument("hyperparams: beta must be >= 0");
        if (epsilon < 0.0 || epsilon > 1.0) throw std::invalid_argument("hyperparams: epsilon must be in [0,1]");
        if (layers < 1) throw std::invalid_argument("hyperparams: layers must be >= 1");
    }
};

enum class AblationVariant { A1, A2, A3 };

/// A1 removes the topological stream (lambda=0, epsilon=0), A2 removes the
/// semantic stream (alpha=0, epsilon=1), A3 removes the consistency term
/// (beta=0). All other fields are preserved.
inline DgnnHyperparams ablation_config(AblationVariant variant, DgnnHyperparams base) {
    switch (variant) {
        case AblationVariant::A1:
            base.lambda = 0.0;
            base.epsilon = 0.0;
            return base;
        case AblationVariant::A2:
            base.alpha = 0.0;
            base.epsilon = 1.0;
            return base;
        case AblationVariant::A3:
            base.beta = 0.0;
            return base;
    }
    throw std::invalid_argument("ablation_config: unknown variant");
}

/// Shared reconstruction factor: trainable W with Ws = W W^T, symmetric
/// and PSD by construction.
struct ReconFactor {
    DiffMatrix w;  // d x d

    DiffMatrix ws() const {
        Tape& t = *w.tape;
        return t.matmul(w, t.transpose(w));
    }
};

/// W = I + uniform(-noise_scale, noise_scale) entries; Ws then starts near
/// the identity, making the initial reconstructed adjacency the plain Gram
/// matrix of the embeddings.
inline ReconFactor make_recon_factor(Tape& tape, int dim, std::mt19937& rng,
                                     double noise_scale = 1e-2) {
    std::uniform_real_distribution<double> u(-noise_scale, noise_scale);
    Mat w = Mat::Identity(dim, dim);
    for (int i = 0; i < dim; ++i) {
        for (int j = 0; j < dim; ++j) w(i, j) += u(rng);
    }
    return ReconFactor{tape.leaf(std::move(w))};
}

/// The triple carried across unrolled iterations; all three share the
/// input shape n x d. `aliased` records that the three handles are copies
/// of one source (true right after init_state), which forward() uses to
/// skip recomputing identical subexpressions in the first round.
struct EmbeddingState {
    DiffMatrix f;
    DiffMatrix h;
    DiffMatrix hf;
    bool aliased = false;
};

/// F(0) = H(0) = Hf(0) = X, as three independent tape nodes.
inline EmbeddingState init_state(Tape& tape, const DiffMatrix& x) {
    EmbeddingState s;
    s.f = tape.constant(x.value());
    s.h = tape.constant(x.value());
    s.hf = tape.constant(x.value());
    s.aliased = true;
    return s;
}

inline EmbeddingState init_state(Tape& tape, const Mat& x) {
    EmbeddingState s;
    s.f = tape.constant(x);
    s.h = tape.constant(x);
    s.hf = tape.constant(x);
    s.aliased = true;
    return s;
}

namespace detail {

/// Per-forward cache of subexpressions that depend only on a state node
/// and Ws: P(S) = S*Ws, Gram(S) = P(S)*S^T, and the correction factor
/// S*Ws + S*Ws^T. Keyed by tape-node id.
struct ConsistencyCtx {
    Tape* tape = nullptr;
    DiffMatrix ws;
    std::optional<DiffMatrix> ws_t;
    std::unordered_map<int, DiffMatrix> p;
    std::unordered_map<int, DiffMatrix> gram;
    std::unordered_map<int, DiffMatrix> factor;

    explicit ConsistencyCtx(const ReconFactor& rf) : tape(rf.w.tape), ws(rf.ws()) {}

    DiffMatrix p_of(const DiffMatrix& s) {
        auto it = p.find(s.id);
        if (it != p.end()) return it->second;
        DiffMatrix v = tape->matmul(s, ws);
        p.emplace(s.id, v);
        return v;
    }

    DiffMatrix gram_of(const DiffMatrix& s) {
        auto it = gram.find(s.id);
        if (it != gram.end()) return it->second;
        DiffMatrix v = tape->matmul(p_of(s), tape->transpose(s));
        gram.emplace(s.id, v);
        return v;
    }

    DiffMatrix factor_of(const DiffMatrix& s, bool exploit_symmetric) {
        auto it = factor.find(s.id);
        if (it != factor.end()) return it->second;
        DiffMatrix v;
        if (exploit_symmetric) {
            v = tape->scale(p_of(s), 2.0);
        } else {
            if (!ws_t) ws_t = tape->transpose(ws);
            v = tape->add(p_of(s), tape->matmul(s, *ws_t));
        }
        factor.emplace(s.id, v);
        return v;
    }

    /// R = F Ws F^T - eps * H Ws H^T - (1-eps) * Hf Ws Hf^T.
    DiffMatrix residual_of(const EmbeddingState& st, double eps) {
        DiffMatrix h = st.aliased ? st.f : st.h;
        DiffMatrix hf = st.aliased ? st.f : st.hf;
        return tape->lincomb({{1.0, gram_of(st.f)}, {-eps, gram_of(h)}, {-(1.0 - eps), gram_of(hf)}});
    }
};

/// The bracket passed to the sigmoid differs in sign between the F update
/// (+R) and the H/Hf updates (-R).
struct RoundTerms {
    std::optional<DiffMatrix> pos;  // sigma(R) or R
    std::optional<DiffMatrix> neg;  // sigma(-R) or -R
};

inline DiffMatrix bracket_pos(ConsistencyCtx& ctx, RoundTerms& rt, const EmbeddingState& st,
                              const DgnnHyperparams& hp) {
    if (!rt.pos) {
        DiffMatrix r = ctx.residual_of(st, hp.epsilon);
        rt.pos = (hp.mode == DgnnMode::network) ? ctx.tape->sigmoid(r) : r;
    }
    return *rt.pos;
}

inline DiffMatrix bracket_neg(ConsistencyCtx& ctx, RoundTerms& rt, const EmbeddingState& st,
                              const DgnnHyperparams& hp) {
    if (!rt.neg) {
        DiffMatrix nr = ctx.tape->scale(ctx.residual_of(st, hp.epsilon), -1.0);
        rt.neg = (hp.mode == DgnnMode::network) ? ctx.tape->sigmoid(nr) : nr;
    }
    return *rt.neg;
}

inline DiffMatrix update_f_impl(ConsistencyCtx& ctx, RoundTerms& rt, const EmbeddingState& st,
                                const DiffMatrix& x, const DgnnHyperparams& hp) {
    if (hp.beta == 0.0) return x;
    DiffMatrix corr = ctx.tape->matmul(bracket_pos(ctx, rt, st, hp),
                                       ctx.factor_of(st.f, hp.exploit_symmetric_ws));
    return ctx.tape->lincomb({{1.0, x}, {-hp.beta, corr}});
}

inline DiffMatrix update_h_impl(ConsistencyCtx& ctx, RoundTerms& rt, const EmbeddingState& st,
                                const NormalizedAdjacency& ahat, const DgnnHyperparams& hp) {
    DiffMatrix h = st.aliased ? st.f : st.h;
    DiffMatrix propagated = ctx.tape->spmm(ahat.m, h);
    if (hp.beta == 0.0 || hp.epsilon == 0.0) return propagated;
    if (hp.lambda == 0.0) {
        throw std::invalid_argument("update_H: lambda = 0 with beta > 0 and epsilon > 0");
    }
    DiffMatrix corr = ctx.tape->matmul(bracket_neg(ctx, rt, st, hp),
                                       ctx.factor_of(h, hp.exploit_symmetric_ws));
    return ctx.tape->lincomb({{1.0, propagated}, {-hp.epsilon * hp.beta / hp.lambda, corr}});
}

inline DiffMatrix update_hf_impl(ConsistencyCtx& ctx, RoundTerms& rt, const EmbeddingState& st,
                                 const NormalizedAdjacency& ahat_f, const DgnnHyperparams& hp) {
    DiffMatrix hf = st.aliased ? st.f : st.hf;
    DiffMatrix propagated = ctx.tape->spmm(ahat_f.m, hf);
    if (hp.beta == 0.0 || hp.epsilon == 1.0) return propagated;
    if (hp.alpha == 0.0) {
        throw std::invalid_argument("update_Hf: alpha = 0 with beta > 0 and epsilon < 1");
    }
    DiffMatrix corr = ctx.tape->matmul(bracket_neg(ctx, rt, st, hp),
                                       ctx.factor_of(hf, hp.exploit_symmetric_ws));
    return ctx.tape->lincomb({{1.0, propagated}, {-(1.0 - hp.epsilon) * hp.beta / hp.alpha, corr}});
}

}  // namespace detail

/// R = F Ws F^T - [eps * H Ws H^T + (1-eps) * Hf Ws Hf^T]; symmetric
/// because Ws is.
inline DiffMatrix consistency_residual(const EmbeddingState& state, const ReconFactor& rf,
                                       double epsilon) {
    detail::ConsistencyCtx ctx(rf);
    return ctx.residual_of(state, epsilon);
}

/// One F update. With beta = 0 this is exactly X.
inline DiffMatrix update_F(const EmbeddingState& state, const DiffMatrix& x, const ReconFactor& rf,
                           const DgnnHyperparams& hp) {
    detail::ConsistencyCtx ctx(rf);
    detail::RoundTerms rt;
    return detail::update_f_impl(ctx, rt, state, x, hp);
}

/// One H update. With beta = 0 or epsilon = 0 this is exactly A_hat * H.
inline DiffMatrix update_H(const EmbeddingState& state, const NormalizedAdjacency& ahat,
                           const ReconFactor& rf, const DgnnHyperparams& hp) {
    detail::ConsistencyCtx ctx(rf);
    detail::RoundTerms rt;
    return detail::update_h_impl(ctx, rt, state, ahat, hp);
}

/// One Hf update. With beta = 0 or epsilon = 1 this is exactly A_hat_f * Hf.
inline DiffMatrix update_Hf(const EmbeddingState& state, const NormalizedAdjacency& ahat_f,
                            const ReconFactor& rf, const DgnnHyperparams& hp) {
    detail::ConsistencyCtx ctx(rf);
    detail::RoundTerms rt;
    return detail::update_hf_impl(ctx, rt, state, ahat_f, hp);
}

inline constexpr std::size_t kDefaultMemoryBudget = std::size_t{8} << 30;  // 8 GiB

/// Rough bytes retained by one unrolled forward pass plus its backward
/// gradients. The n^2 intermediates dominate.
inline std::size_t estimate_forward_bytes(int n, int d, int layers) {
    auto nn = static_cast<std::size_t>(n);
    auto dd = static_cast<std::size_t>(d);
    std::size_t per_round = 7 * nn * nn + 20 * nn * dd + 3 * dd * dd;
    return 2 * sizeof(double) * (static_cast<std::size_t>(layers) * per_round + 4 * nn * dd);
}

/// L rounds of (update_F, update_H, update_Hf), each round reading the
/// previous round's state (Jacobi-style, as the printed superscripts
/// dictate). All intermediates stay on the tape for backward.
inline EmbeddingState forward(const DiffMatrix& x, const NormalizedAdjacency& ahat,
                              const NormalizedAdjacency& ahat_f, const ReconFactor& rf,
                              const DgnnHyperparams& hp,
                              std::size_t memory_budget = kDefaultMemoryBudget) {
    hp.validate();
    const int n = x.rows();
    const int d = x.cols();
    if (ahat.size() != n || ahat_f.size() != n) {
        throw std::invalid_argument("forward: adjacency size != feature rows");
    }
    std::size_t estimate = estimate_forward_bytes(n, d, hp.layers);
    if (estimate > memory_budget) {
        throw std::runtime_error("forward: estimated tape memory " + std::to_string(estimate) +
                                 " bytes exceeds budget " + std::to_string(memory_budget) +
                                 " (raise the memory budget to proceed)");
    }
    Tape& tape = *rf.w.tape;
    EmbeddingState state = init_state(tape, x);
    detail::ConsistencyCtx ctx(rf);
    for (int k = 0; k < hp.layers; ++k) {
        detail::RoundTerms rt;
        EmbeddingState next;
        next.f = detail::update_f_impl(ctx, rt, state, x, hp);
        next.h = detail::update_h_impl(ctx, rt, state, ahat, hp);
        next.hf = detail::update_hf_impl(ctx, rt, state, ahat_f, hp);
        state = next;
    }
    return state;
}

/// The four-term objective
///   ||F - X||_F^2 + lambda tr(H^T Lt H) + alpha tr(Hf^T Ltf Hf)
///   + beta ||F Ws F^T - eps H Ws H^T - (1-eps) Hf Ws Hf^T||_F^2,
/// evaluated on plain values (no tape); used for convergence reporting.
inline double objective_value(const EmbeddingState& state, const Mat& x, const SpMat& lap,
                              const SpMat& lap_f, const ReconFactor& rf,
                              const DgnnHyperparams& hp) {
    const Mat& f = state.f.value();
    const Mat& h = state.h.value();
    const Mat& hf = state.hf.value();
    double total = (f - x).squaredNorm();
    if (hp.lambda != 0.0) total += hp.lambda * (h.cwiseProduct(lap * h)).sum();
    if (hp.alpha != 0.0) total += hp.alpha * (hf.cwiseProduct(lap_f * hf)).sum();
    if (hp.beta != 0.0) {
        const Mat& w = rf.w.value();
        Mat ws = w * w.transpose();
        Mat r = f * ws * f.transpose();
        r.noalias() -= hp.epsilon * (h * ws * h.transpose());
        r.noalias() -= (1.0 - hp.epsilon) * (hf * ws * hf.transpose());
        total += hp.beta * r.squaredNorm();
    }
    return total;
}

}  // namespace dgnn
