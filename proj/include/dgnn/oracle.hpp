#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "dgnn/core.hpp"
#include "dgnn/types.hpp"

// Independent verification paths. Everything here computes with explicit
// index loops over nested std::vector buffers and shares no arithmetic
// code with the engine it checks.

namespace dgnn::oracle {

struct FdConfig {
    double step = 1e-5;
    double tolerance = 1e-4;
    int samples_per_param = 64;  // elements sampled from large parameters
    unsigned seed = 12345;
};

/// One sampled central difference: parameter index, element, and the
/// numerical derivative at that element.
struct FdSample {
    int param = 0;
    int row = 0;
    int col = 0;
    double derivative = 0.0;
};

/// Central finite differences (f(x+h) - f(x-h)) / 2h on sampled elements
/// of each parameter. Parameters are perturbed in place and restored; the
/// loss callback must re-read them on every call.
inline std::vector<FdSample> fd_gradient(const std::function<double()>& loss,
                                         const std::vector<Mat*>& params, const FdConfig& cfg) {
    if (cfg.step <= 0.0) throw std::invalid_argument("fd_gradient: step must be positive");
    std::mt19937 rng(cfg.seed);
    std::vector<FdSample> out;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Mat& p = *params[pi];
        const int total = static_cast<int>(p.size());
        std::vector<int> elems(total);
        for (int i = 0; i < total; ++i) elems[i] = i;
        if (total > cfg.samples_per_param) {
            std::shuffle(elems.begin(), elems.end(), rng);
            elems.resize(cfg.samples_per_param);
        }
        for (int e : elems) {
            int r = e % static_cast<int>(p.rows());
            int c = e / static_cast<int>(p.rows());
            double saved = p(r, c);
            p(r, c) = saved + cfg.step;
            double up = loss();
            p(r, c) = saved - cfg.step;
            double down = loss();
            p(r, c) = saved;
            if (!std::isfinite(up) || !std::isfinite(down)) {
                throw std::runtime_error("fd_gradient: non-finite loss at perturbed point");
            }
            out.push_back({static_cast<int>(pi), r, c, (up - down) / (2.0 * cfg.step)});
        }
    }
    return out;
}

/// |a - b| / max(|a|, |b|, floor); the floor keeps near-zero derivative
/// pairs from blowing up the ratio.
inline double relative_error(double a, double b, double floor = 1e-8) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Worst relative error between FD samples and the matching analytic
/// gradients (one matrix per parameter, same order as in fd_gradient).
inline double max_fd_error(const std::vector<FdSample>& samples,
                           const std::vector<const Mat*>& analytic, double floor = 1e-8) {
    double worst = 0.0;
    for (const auto& s : samples) {
        double g = (*analytic[s.param])(s.row, s.col);
        worst = std::max(worst, relative_error(s.derivative, g, floor));
    }
    return worst;
}

namespace detail {

using Grid = std::vector<std::vector<double>>;

inline Grid to_grid(const Mat& m) {
    Grid g(m.rows(), std::vector<double>(m.cols()));
    for (int i = 0; i < m.rows(); ++i) {
        for (int j = 0; j < m.cols(); ++j) g[i][j] = m(i, j);
    }
    return g;
}

inline Mat from_grid(const Grid& g) {
    Mat m(g.size(), g.empty() ? 0 : g[0].size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        for (std::size_t j = 0; j < g[i].size(); ++j) m(i, j) = g[i][j];
    }
    return m;
}

}  // namespace detail

enum class UpdateKind { F, H, Hf };

inline constexpr int kOracleMaxNodes = 16;
inline constexpr int kOracleMaxDim = 8;

/// Re-evaluates one unrolled update rule with explicit index loops.
/// state values, the input X, dense copies of the two propagation
/// operators, and the raw factor W all come in as plain matrices.
inline Mat scalar_update_oracle(const Mat& f, const Mat& h, const Mat& hf, const Mat& x,
                                const Mat& ahat, const Mat& ahat_f, const Mat& w,
                                const DgnnHyperparams& hp, UpdateKind which) {
    const int n = static_cast<int>(f.rows());
    const int d = static_cast<int>(f.cols());
    if (n > kOracleMaxNodes || d > kOracleMaxDim) {
        throw std::invalid_argument("scalar_update_oracle: size guard exceeded (n <= 16, d <= 8)");
    }
    const auto F = detail::to_grid(f);
    const auto H = detail::to_grid(h);
    const auto Hf = detail::to_grid(hf);
    const auto X = detail::to_grid(x);
    const auto A = detail::to_grid(ahat);
    const auto Af = detail::to_grid(ahat_f);
    const auto W = detail::to_grid(w);

    // ws = W W^T
    detail::Grid ws(d, std::vector<double>(d, 0.0));
    for (int p = 0; p < d; ++p) {
        for (int q = 0; q < d; ++q) {
            double acc = 0.0;
            for (int r = 0; r < d; ++r) acc += W[p][r] * W[q][r];
            ws[p][q] = acc;
        }
    }

    auto gram = [&](const detail::Grid& s) {
        detail::Grid g(n, std::vector<double>(n, 0.0));
        for (int i = 0; i < n; ++i) {
            for (int m = 0; m < n; ++m) {
                double acc = 0.0;
                for (int p = 0; p < d; ++p) {
                    for (int q = 0; q < d; ++q) acc += s[i][p] * ws[p][q] * s[m][q];
                }
                g[i][m] = acc;
            }
        }
        return g;
    };

    // correction factor S*ws + S*ws^T
    auto two_sided = [&](const detail::Grid& s) {
        detail::Grid g(n, std::vector<double>(d, 0.0));
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < d; ++j) {
                double acc = 0.0;
                for (int q = 0; q < d; ++q) acc += s[i][q] * (ws[q][j] + ws[j][q]);
                g[i][j] = acc;
            }
        }
        return g;
    };

    const bool needs_bracket =
        hp.beta != 0.0 && !(which == UpdateKind::H && hp.epsilon == 0.0) &&
        !(which == UpdateKind::Hf && hp.epsilon == 1.0);

    detail::Grid bracket;
    if (needs_bracket) {
        auto gf = gram(F);
        auto gh = gram(H);
        auto ghf = gram(Hf);
        bracket.assign(n, std::vector<double>(n, 0.0));
        double sign = (which == UpdateKind::F) ? 1.0 : -1.0;
        for (int i = 0; i < n; ++i) {
            for (int m = 0; m < n; ++m) {
                double r = gf[i][m] - hp.epsilon * gh[i][m] - (1.0 - hp.epsilon) * ghf[i][m];
                double b = sign * r;
                bracket[i][m] = (hp.mode == DgnnMode::network) ? 1.0 / (1.0 + std::exp(-b)) : b;
            }
        }
    }

    detail::Grid out(n, std::vector<double>(d, 0.0));
    switch (which) {
        case UpdateKind::F: {
            if (hp.beta == 0.0) return x;
            auto fac = two_sided(F);
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < d; ++j) {
                    double corr = 0.0;
                    for (int m = 0; m < n; ++m) corr += bracket[i][m] * fac[m][j];
                    out[i][j] = X[i][j] - hp.beta * corr;
                }
            }
            break;
        }
        case UpdateKind::H: {
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < d; ++j) {
                    double acc = 0.0;
                    for (int m = 0; m < n; ++m) acc += A[i][m] * H[m][j];
                    out[i][j] = acc;
                }
            }
            if (!needs_bracket) break;
            if (hp.lambda == 0.0) {
                throw std::invalid_argument("scalar_update_oracle: lambda = 0 with beta > 0 and epsilon > 0");
            }
            {
                auto fac = two_sided(H);
                double coef = hp.epsilon * hp.beta / hp.lambda;
                for (int i = 0; i < n; ++i) {
                    for (int j = 0; j < d; ++j) {
                        double corr = 0.0;
                        for (int m = 0; m < n; ++m) corr += bracket[i][m] * fac[m][j];
                        out[i][j] -= coef * corr;
                    }
                }
            }
            break;
        }
        case UpdateKind::Hf: {
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < d; ++j) {
                    double acc = 0.0;
                    for (int m = 0; m < n; ++m) acc += Af[i][m] * Hf[m][j];
                    out[i][j] = acc;
                }
            }
            if (!needs_bracket) break;
            if (hp.alpha == 0.0) {
                throw std::invalid_argument("scalar_update_oracle: alpha = 0 with beta > 0 and epsilon < 1");
            }
            {
                auto fac = two_sided(Hf);
                double coef = (1.0 - hp.epsilon) * hp.beta / hp.alpha;
                for (int i = 0; i < n; ++i) {
                    for (int j = 0; j < d; ++j) {
                        double corr = 0.0;
                        for (int m = 0; m < n; ++m) corr += bracket[i][m] * fac[m][j];
                        out[i][j] -= coef * corr;
                    }
                }
            }
            break;
        }
    }
    return detail::from_grid(out);
}

/// Reference GCN layer, pre-activation: A_hat (X W). Explicit loops.
inline Mat gcn_reference_layer(const Mat& x, const Mat& ahat, const Mat& w) {
    const int n = static_cast<int>(x.rows());
    const int d = static_cast<int>(x.cols());
    const int out_dim = static_cast<int>(w.cols());
    if (w.rows() != d || ahat.rows() != n || ahat.cols() != n) {
        throw std::invalid_argument("gcn_reference_layer: shapes do not conform");
    }
    const auto X = detail::to_grid(x);
    const auto A = detail::to_grid(ahat);
    const auto W = detail::to_grid(w);
    detail::Grid xw(n, std::vector<double>(out_dim, 0.0));
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < out_dim; ++j) {
            double acc = 0.0;
            for (int q = 0; q < d; ++q) acc += X[i][q] * W[q][j];
            xw[i][j] = acc;
        }
    }
    detail::Grid out(n, std::vector<double>(out_dim, 0.0));
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < out_dim; ++j) {
            double acc = 0.0;
            for (int m = 0; m < n; ++m) acc += A[i][m] * xw[m][j];
            out[i][j] = acc;
        }
    }
    return detail::from_grid(out);
}

}  // namespace dgnn::oracle
