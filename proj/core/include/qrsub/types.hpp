#pragma once

#include <Eigen/Dense>

#include <cstdint>

namespace qrsub {

using Index = Eigen::Index;

// Design matrices are row-major: the hot loops (residuals, row norms,
// subsample gathers) walk one observation at a time.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Small p x p matrices (Gram matrices, covariance estimates).
using SquareMatrix = Eigen::MatrixXd;

}  // namespace qrsub
