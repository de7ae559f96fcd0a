#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <vector>

#include "errors.hpp"
#include "grid.hpp"

namespace specmoment {

// Input-to-state filter bank x(t+1) = A x(t) + B y(t) with transfer function
// G(z) = z (zI - A)^{-1} B.  Construct through new_filter_bank, which
// validates stability, reachability, and the column rank of B.
struct FilterBank {
  Matrix A;
  Matrix B;
  int n = 0;
  int m = 0;
};

inline double spectral_radius(const Matrix& a) {
  Eigen::EigenSolver<Matrix> es(a, /*computeEigenvectors=*/false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline FilterBank new_filter_bank(const Matrix& a, const Matrix& b) {
  const int n = static_cast<int>(a.rows());
  const int m = static_cast<int>(b.cols());
  if (a.cols() != n || b.rows() != n || n < 1 || m < 1 || m > n)
    throw Error(ErrorCode::InvalidInput, "filter bank shapes must be A (n x n), B (n x m), m <= n");

  const double rho = spectral_radius(a);
  if (rho > 1.0 - 1e-9)
    throw Error(ErrorCode::Unstable,
                "A has spectral radius " + std::to_string(rho) + "; eigenvalues must lie in the open unit disc");

  {
    Eigen::JacobiSVD<Matrix> svd(b);
    const auto& sv = svd.singularValues();
    if (sv(sv.size() - 1) <= 1e-10 * sv(0))
      throw Error(ErrorCode::RankDeficientB, "B is not full column rank");
  }

  Matrix reach(n, n * m);
  Matrix akb = b;
  for (int k = 0; k < n; ++k) {
    reach.middleCols(k * m, m) = akb;
    if (k + 1 < n) akb = (a * akb).eval();
  }
  Eigen::JacobiSVD<Matrix> svd(reach);
  const auto& sv = svd.singularValues();
  if (sv(std::min<int>(n, n * m) - 1) <= 1e-10 * sv(0))
    throw Error(ErrorCode::Unreachable, "(A, B) is not a reachable pair");

  return FilterBank{a, b, n, m};
}

// G(theta_j) = (I - e^{-i theta_j} A)^{-1} B, one LU solve per node.
inline GridMatrixFunction eval_G(const FilterBank& bank, const CircleGrid& grid) {
  const int n = bank.n;
  std::vector<CMatrix> vals(grid.size());
  const CMatrix a = bank.A.cast<Complex>();
  const CMatrix b = bank.B.cast<Complex>();
  for (int j = 0; j < grid.size(); ++j) {
    const Complex zbar = std::polar(1.0, -grid.node(j));
    const CMatrix lhs = CMatrix::Identity(n, n) - zbar * a;
    vals[j] = lhs.partialPivLu().solve(b);
  }
  return GridMatrixFunction(grid, std::move(vals));
}

// G0 = G - B/2.
inline GridMatrixFunction eval_G0(const FilterBank& bank, const CircleGrid& grid) {
  GridMatrixFunction g = eval_G(bank, grid);
  const CMatrix half_b = 0.5 * bank.B.cast<Complex>();
  for (auto& v : g.values) v -= half_b;
  return g;
}

// Tapped-delay-line bank: A the n x n down-shift, B = e1.  The state
// covariance of this bank is Toeplitz and G collects the Fourier vectors.
inline FilterBank toeplitz_bank(int n) {
  if (n < 1) throw Error(ErrorCode::InvalidInput, "toeplitz_bank requires n >= 1");
  Matrix a = Matrix::Zero(n, n);
  for (int i = 0; i + 1 < n; ++i) a(i + 1, i) = 1.0;
  Matrix b = Matrix::Zero(n, 1);
  b(0, 0) = 1.0;
  return new_filter_bank(a, b);
}

// First-order bank with distinct real poles: A = diag(p), B = ones.  The
// state covariance has Pick structure.
inline FilterBank pick_bank(const std::vector<double>& poles) {
  const int n = static_cast<int>(poles.size());
  if (n < 1) throw Error(ErrorCode::InvalidInput, "pick_bank requires at least one pole");
  for (int i = 0; i < n; ++i) {
    if (std::abs(poles[i]) >= 1.0)
      throw Error(ErrorCode::UnstablePole, "pole " + std::to_string(poles[i]) + " is not inside the unit disc");
    for (int j = i + 1; j < n; ++j)
      if (std::abs(poles[i] - poles[j]) <= 1e-12)
        throw Error(ErrorCode::DuplicatePole, "poles must be pairwise distinct");
  }
  Matrix a = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) a(i, i) = poles[i];
  return new_filter_bank(a, Matrix::Ones(n, 1));
}

}  // namespace specmoment
