#include "opl/linalg.hpp"

#include "opl/errors.hpp"

namespace opl {

namespace {

void check_input(const DenseMatrix& m, double tol) {
  if (!(tol > 0.0 && tol < 1.0)) throw InvalidInput("pinv tolerance must lie in (0, 1)");
  if (!m.allFinite()) throw InvalidInput("pinv input has non-finite entries");
}

}  // namespace

DenseMatrix pinv(const DenseMatrix& m, double tol, Symmetry symmetry) {
  check_input(m, tol);
  if (m.size() == 0) return DenseMatrix(m.cols(), m.rows());

  if (symmetry == Symmetry::kSymmetric) {
    if (m.rows() != m.cols()) throw InvalidInput("symmetric pinv needs a square matrix");
    Eigen::SelfAdjointEigenSolver<DenseMatrix> eig(m);
    const Vector& lambda = eig.eigenvalues();
    const double cutoff = tol * lambda.cwiseAbs().maxCoeff();
    Vector inv = Vector::Zero(lambda.size());
    for (Eigen::Index i = 0; i < lambda.size(); ++i) {
      if (std::abs(lambda[i]) > cutoff) inv[i] = 1.0 / lambda[i];
    }
    const DenseMatrix& v = eig.eigenvectors();
    DenseMatrix out = v * inv.asDiagonal() * v.transpose();
    // exact symmetry
    return 0.5 * (out + out.transpose());
  }

  Eigen::JacobiSVD<DenseMatrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sigma = svd.singularValues();
  const double cutoff = tol * (sigma.size() > 0 ? sigma[0] : 0.0);
  Vector inv = Vector::Zero(sigma.size());
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    if (sigma[i] > cutoff) inv[i] = 1.0 / sigma[i];
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

Eigen::Index numerical_rank(const DenseMatrix& m, double tol) {
  check_input(m, tol);
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<DenseMatrix> svd(m);
  const Vector& sigma = svd.singularValues();
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < sigma.size(); ++i) rank += sigma[i] > tol * sigma[0] ? 1 : 0;
  return rank;
}

}  // namespace opl
