#pragma once

#include <Eigen/Cholesky>

#include <stdexcept>
#include <string>

#include "dgnn/graph.hpp"
#include "dgnn/types.hpp"

namespace dgnn {

/// Graph signal denoising: recover F from noisy S by minimizing
/// ||F - S||_F^2 + lambda * tr(F^T Lt F) over a PSD Laplacian Lt.
struct GsdProblem {
    Mat signal;        // S, n x d
    SpMat laplacian;   // Lt, n x n
    double lambda = 0.0;
};

inline constexpr int kGsdDenseSolveLimit = 5000;

/// Exact minimizer: solves (I + lambda * Lt) F = S with a dense Cholesky
/// factorization. I + lambda*Lt is symmetric positive definite for
/// lambda >= 0, so the solve is oracle-grade at desk scale.
inline Mat gsd_exact(const GsdProblem& p) {
    const int n = static_cast<int>(p.laplacian.rows());
    if (n > kGsdDenseSolveLimit) {
        throw std::invalid_argument("gsd_exact: n=" + std::to_string(n) + " exceeds dense solve guard " +
                                    std::to_string(kGsdDenseSolveLimit));
    }
    if (p.signal.rows() != n) {
        throw std::invalid_argument("gsd_exact: signal rows != laplacian size");
    }
    if (p.lambda < 0.0) {
        throw std::invalid_argument("gsd_exact: lambda must be nonnegative");
    }
    Mat system = Mat::Identity(n, n) + p.lambda * Mat(p.laplacian);
    Eigen::LLT<Mat> llt(system);
    if (llt.info() != Eigen::Success) {
        throw std::runtime_error("gsd_exact: Cholesky factorization failed");
    }
    return llt.solve(p.signal);
}

/// First-order approximation of the exact solve at lambda = 1: the GCN
/// aggregation A_hat * S.
inline Mat gsd_first_order(const Mat& signal, const NormalizedAdjacency& na) {
    if (na.m.cols() != signal.rows()) {
        throw std::invalid_argument("gsd_first_order: shapes do not conform");
    }
    return na.m * signal;
}

/// The objective ||F - S||_F^2 + lambda * tr(F^T Lt F).
inline double gsd_objective(const Mat& f, const GsdProblem& p) {
    if (f.rows() != p.signal.rows() || f.cols() != p.signal.cols()) {
        throw std::invalid_argument("gsd_objective: F and S shapes differ");
    }
    double fidelity = (f - p.signal).squaredNorm();
    double smoothness = (f.cwiseProduct(p.laplacian * f)).sum();
    return fidelity + p.lambda * smoothness;
}

}  // namespace dgnn
