#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace dgnn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;

}  // namespace dgnn
