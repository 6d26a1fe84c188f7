#pragma once

#include <Eigen/Dense>

namespace opl {

using DenseMatrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kDefaultPinvTol = 1e-10;

enum class Symmetry { kGeneral, kSymmetric };

/// Moore-Penrose pseudoinverse. Singular values (or |eigenvalues| for
/// symmetric input) below `tol * max` are treated as zero.
/// Throws InvalidInput on non-finite entries or tol outside (0, 1).
DenseMatrix pinv(const DenseMatrix& m, double tol = kDefaultPinvTol,
                 Symmetry symmetry = Symmetry::kGeneral);

/// Numerical rank with the same cutoff rule as pinv().
Eigen::Index numerical_rank(const DenseMatrix& m, double tol = kDefaultPinvTol);

}  // namespace opl
