#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "errors.hpp"
#include "grid.hpp"

namespace specmoment {

// Unique symmetric solution of M - A'MA = W for spectral radius(A) < 1.
// With C = A', this is the Stein equation M = C M C^H + W; the complex Schur
// form C = U T U^H reduces it to a triangular system solved column by column
// from the last column backwards.
inline Matrix solve_discrete_lyapunov(const Matrix& a, const Matrix& w) {
  const int n = static_cast<int>(a.rows());
  if (a.cols() != n || w.rows() != n || w.cols() != n)
    throw Error(ErrorCode::InvalidInput, "solve_discrete_lyapunov: shape mismatch");

  Eigen::ComplexSchur<CMatrix> schur(a.transpose().cast<Complex>());
  if (schur.info() != Eigen::Success)
    throw Error(ErrorCode::InvalidInput, "solve_discrete_lyapunov: Schur decomposition failed");
  const CMatrix& t = schur.matrixT();
  const CMatrix& u = schur.matrixU();

  double rho = 0.0;
  for (int k = 0; k < n; ++k) rho = std::max(rho, std::abs(t(k, k)));
  if (rho >= 1.0 - 1e-9)
    throw Error(ErrorCode::UnstableMatrix,
                "spectral radius " + std::to_string(rho) + " is not below 1");

  const CMatrix wt = u.adjoint() * w.cast<Complex>() * u;
  CMatrix mt = CMatrix::Zero(n, n);
  // Column j of M~ = T M~ T^H + W~ depends only on columns k >= j.
  for (int j = n - 1; j >= 0; --j) {
    CVector rhs = wt.col(j);
    for (int k = j + 1; k < n; ++k) rhs += std::conj(t(j, k)) * (t * mt.col(k));
    // Back substitution for (I - conj(T_jj) T) x = rhs (upper triangular).
    const Complex tjj = std::conj(t(j, j));
    CVector x(n);
    for (int i = n - 1; i >= 0; --i) {
      Complex s = rhs(i);
      for (int k = i + 1; k < n; ++k) s -= (-tjj * t(i, k)) * x(k);
      x(i) = s / (1.0 - tjj * t(i, i));
    }
    mt.col(j) = x;
  }
  const CMatrix m = u * mt * u.adjoint();
  Matrix out = m.real();
  return 0.5 * (out + out.transpose()).eval();
}

// Unique symmetric solution of P Y + Y P = R for symmetric positive definite
// P, via the eigendecomposition P = U diag(lambda) U'.
inline Matrix solve_two_sided(const Matrix& p, const Matrix& r) {
  const int m = static_cast<int>(p.rows());
  if (p.cols() != m || r.rows() != m || r.cols() != m)
    throw Error(ErrorCode::InvalidInput, "solve_two_sided: shape mismatch");

  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (p + p.transpose()));
  if (es.info() != Eigen::Success)
    throw Error(ErrorCode::InvalidInput, "solve_two_sided: eigendecomposition failed");
  const Vector lam = es.eigenvalues();
  if (lam.minCoeff() <= 0.0)
    throw Error(ErrorCode::NotSPD, "solve_two_sided: P has an eigenvalue <= 0");

  const Matrix& u = es.eigenvectors();
  Matrix rt = u.transpose() * 0.5 * (r + r.transpose()) * u;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) rt(i, j) /= lam(i) + lam(j);
  Matrix y = u * rt * u.transpose();
  return 0.5 * (y + y.transpose()).eval();
}

}  // namespace specmoment
