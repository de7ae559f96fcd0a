#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <optional>
#include <vector>

#include "errors.hpp"
#include "filter_bank.hpp"
#include "grid.hpp"
#include "lyapunov.hpp"

namespace specmoment {

// Symmetric n x n state covariance; construction validates symmetry.
struct StateCovariance {
  Matrix sigma;

  explicit StateCovariance(Matrix s) : sigma(std::move(s)) {
    if (sigma.rows() != sigma.cols() || sigma.rows() < 1)
      throw Error(ErrorCode::InvalidInput, "state covariance must be square");
    const double dev = (sigma - sigma.transpose()).norm();
    if (dev > 1e-12 * std::max(1.0, sigma.norm()))
      throw Error(ErrorCode::InvalidInput, "state covariance is not symmetric");
    sigma = (0.5 * (sigma + sigma.transpose())).eval();
  }
};

// H (m x n) solving Sigma - A Sigma A' = B H + H' B', together with the
// symmetric pairing Y = H B.
struct MomentVector {
  Matrix H;
  Matrix Y;
};

struct FeasibilityReport {
  bool feasible = false;
  bool strictly = false;
  int rank_lhs = 0;
  int rank_rhs = 0;
  std::optional<MomentVector> H;
};

// Lagrange multiplier directions X = MB and, when produced through a
// FeasibleBasis, their coordinates in it.
struct DualVariable {
  Matrix X;
  Vector coords;  // empty unless basis-derived
};

// Non-redundant coordinates for the dual problem: basis_L spans range(Gamma)
// within symmetric matrices, basis_X are the matched images X = M(L) B with
// basis_X orthonormal in the Frobenius inner product.  The pairing
// lambda_to_X(basis_L[j]) == basis_X[j] is preserved exactly.
struct FeasibleBasis {
  std::vector<Matrix> basis_L;
  std::vector<Matrix> basis_X;
  int d = 0;
  // Dimension of {X : B'X symmetric}; reported so a mismatch with d is
  // visible (the two descriptions of the feasible set need not coincide).
  int bx_symmetric_dim = 0;
};

// Gamma: Phi -> integral of G Phi G^*.  The imaginary part of the mean must
// vanish (conjugate-symmetric Phi); it is checked and discarded.
inline Matrix apply_gamma(const GridHermitianFunction& phi, const GridMatrixFunction& g) {
  if (!(phi.grid == g.grid))
    throw Error(ErrorCode::InvalidInput, "apply_gamma: grid mismatch");
  if (phi.dim() != g.values.front().cols())
    throw Error(ErrorCode::InvalidInput, "apply_gamma: density dimension does not match bank inputs");
  const int n = g.grid.size();
  CMatrix s = detail::pairwise_sum(0, n, [&](int j) -> CMatrix {
    return g.values[j] * phi.values[j] * g.values[j].adjoint();
  });
  s /= static_cast<double>(n);
  const double scale = std::max(1.0, s.norm());
  if (s.imag().norm() > 1e-10 * scale)
    throw Error(ErrorCode::NonRealResult,
                "apply_gamma: non-vanishing imaginary part (density lacks conjugate symmetry)");
  Matrix out = s.real();
  return 0.5 * (out + out.transpose()).eval();
}

inline Matrix apply_gamma(const GridHermitianFunction& phi, const FilterBank& bank,
                          const CircleGrid& grid) {
  return apply_gamma(phi, eval_G(bank, grid));
}

// Gamma^*: Lambda -> G^* Lambda G sampled on the grid.
inline GridHermitianFunction apply_gamma_star(const Matrix& lambda, const GridMatrixFunction& g) {
  if (lambda.rows() != g.values.front().rows() || lambda.cols() != lambda.rows())
    throw Error(ErrorCode::InvalidInput, "apply_gamma_star: Lambda must be n x n");
  const CMatrix lam = lambda.cast<Complex>();
  std::vector<CMatrix> vals(g.grid.size());
  for (int j = 0; j < g.grid.size(); ++j)
    vals[j] = g.values[j].adjoint() * lam * g.values[j];
  return GridHermitianFunction(g.grid, std::move(vals));
}

inline GridHermitianFunction apply_gamma_star(const Matrix& lambda, const FilterBank& bank,
                                              const CircleGrid& grid) {
  return apply_gamma_star(lambda, eval_G(bank, grid));
}

// Sigma -> H: the least-Frobenius-norm solution of B H + H' B' = Delta,
// Delta = Sigma - A Sigma A', obtained from the two-sided equation
// (B'B) Y + Y (B'B) = B' Delta B and H = (B'B)^{-1} (B' Delta - Y B').
inline MomentVector sigma_to_H(const StateCovariance& cov, const FilterBank& bank) {
  const Matrix& sigma = cov.sigma;
  if (sigma.rows() != bank.n)
    throw Error(ErrorCode::InvalidInput, "sigma_to_H: dimension mismatch");
  const Matrix delta = sigma - bank.A * sigma * bank.A.transpose();
  const Matrix btb = bank.B.transpose() * bank.B;
  const Matrix y = solve_two_sided(btb, bank.B.transpose() * delta * bank.B);
  const Matrix h = btb.ldlt().solve(bank.B.transpose() * delta - y * bank.B.transpose());
  const double res = (bank.B * h + h.transpose() * bank.B.transpose() - delta).norm();
  if (res > 1e-8 * std::max(1.0, delta.norm()))
    throw Error(ErrorCode::Infeasible,
                "sigma_to_H: Sigma - A Sigma A' is not of the form B H + H' B'");
  return MomentVector{h, h * bank.B};
}

namespace detail {

inline int svd_rank(const Matrix& m, double rel_tol) {
  Eigen::JacobiSVD<Matrix> svd(m);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) <= 0.0) return 0;
  int r = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > rel_tol * sv(0)) ++r;
  return r;
}

}  // namespace detail

// Rank test of the block matrix [[Delta, B], [B', 0]] against [[0, B], [B', 0]]:
// equality at 2m characterizes solvability of the Sigma equation; strict
// feasibility additionally needs Sigma positive definite.
inline FeasibilityReport feasibility_check(const StateCovariance& cov, const FilterBank& bank,
                                           double tol = 1e-8) {
  const Matrix& sigma = cov.sigma;
  if (sigma.rows() != bank.n)
    throw Error(ErrorCode::InvalidInput, "feasibility_check: dimension mismatch");
  const int n = bank.n, m = bank.m;
  const Matrix delta = sigma - bank.A * sigma * bank.A.transpose();

  Matrix lhs = Matrix::Zero(n + m, n + m);
  lhs.topLeftCorner(n, n) = delta;
  lhs.topRightCorner(n, m) = bank.B;
  lhs.bottomLeftCorner(m, n) = bank.B.transpose();
  Matrix rhs = lhs;
  rhs.topLeftCorner(n, n).setZero();

  FeasibilityReport rep;
  rep.rank_lhs = detail::svd_rank(lhs, tol);
  rep.rank_rhs = detail::svd_rank(rhs, tol);
  rep.feasible = (rep.rank_lhs == rep.rank_rhs) && (rep.rank_rhs == 2 * m);
  if (rep.feasible) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(sigma);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    rep.strictly = hi > 0.0 && lo > 1e-10 * hi;
    rep.H = sigma_to_H(cov, bank);
  }
  return rep;
}

// Lambda -> X = M B through the Lyapunov equation M = A'MA + Lambda.
inline DualVariable lambda_to_X(const Matrix& lambda, const FilterBank& bank) {
  if (lambda.rows() != bank.n || lambda.cols() != bank.n)
    throw Error(ErrorCode::InvalidInput, "lambda_to_X: Lambda must be n x n");
  const Matrix m = solve_discrete_lyapunov(bank.A, 0.5 * (lambda + lambda.transpose()));
  return DualVariable{m * bank.B, Vector()};
}

namespace detail {

// Orthonormal basis of symmetric n x n matrices (Frobenius inner product),
// diagonal entries first within each (i, j) sweep.
inline std::vector<Matrix> symmetric_basis(int n) {
  std::vector<Matrix> out;
  out.reserve(n * (n + 1) / 2);
  const double invsqrt2 = 1.0 / std::sqrt(2.0);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      Matrix e = Matrix::Zero(n, n);
      if (i == j) {
        e(i, i) = 1.0;
      } else {
        e(i, j) = invsqrt2;
        e(j, i) = invsqrt2;
      }
      out.push_back(std::move(e));
    }
  return out;
}

inline void canonicalize_sign(Eigen::Ref<Vector> col) {
  int imax = 0;
  for (int i = 1; i < col.size(); ++i)
    if (std::abs(col(i)) > std::abs(col(imax))) imax = i;
  if (col(imax) < 0.0) col = -col;
}

inline int next_pow2_at_least(int v) {
  int p = 1;
  while (p < v) p *= 2;
  return p;
}

}  // namespace detail

// Builds the non-redundant coordinate system: an SVD of the sampled map
// Lambda -> G^* Lambda G identifies range(Gamma) (the orthogonal complement
// of its kernel among symmetric matrices); the Prop.-2 images are then QR
// re-orthonormalized, with the Lambda side transformed by the same triangular
// factor so the pairing survives.
inline FeasibleBasis feasible_basis(const FilterBank& bank) {
  const int n = bank.n, m = bank.m;
  const int nint = std::max(256, detail::next_pow2_at_least(8 * n));
  const CircleGrid grid(nint);
  const GridMatrixFunction g = eval_G(bank, grid);

  const std::vector<Matrix> es = detail::symmetric_basis(n);
  const int nsym = static_cast<int>(es.size());
  Matrix f(2 * nint * m * m, nsym);
  for (int k = 0; k < nsym; ++k) {
    const CMatrix lam = es[k].cast<Complex>();
    for (int j = 0; j < nint; ++j) {
      const CMatrix s = g.values[j].adjoint() * lam * g.values[j];
      for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) {
          f(2 * (j * m * m + a * m + b), k) = s(a, b).real();
          f(2 * (j * m * m + a * m + b) + 1, k) = s(a, b).imag();
        }
    }
  }

  Eigen::BDCSVD<Matrix> svd(f, Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  int d = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > 1e-10 * sv(0)) ++d;
  if (d == 0) throw Error(ErrorCode::InvalidInput, "feasible_basis: moment map has rank zero");

  Matrix v = svd.matrixV().leftCols(d);
  for (int i = 0; i < d; ++i) detail::canonicalize_sign(v.col(i));

  std::vector<Matrix> raw_l(d, Matrix::Zero(n, n));
  for (int i = 0; i < d; ++i)
    for (int k = 0; k < nsym; ++k) raw_l[i] += v(k, i) * es[k];

  Matrix xs(n * m, d);
  for (int i = 0; i < d; ++i) {
    const Matrix xi = lambda_to_X(raw_l[i], bank).X;
    xs.col(i) = Eigen::Map<const Vector>(xi.data(), n * m);
  }
  Eigen::HouseholderQR<Matrix> qr(xs);
  Matrix q = qr.householderQ() * Matrix::Identity(n * m, d);
  Matrix r = qr.matrixQR().topRows(d).triangularView<Eigen::Upper>();
  for (int j = 0; j < d; ++j) {
    if (r(j, j) < 0.0) {
      q.col(j) = -q.col(j);
      r.row(j) = -r.row(j);
    }
    if (!(std::abs(r(j, j)) > 1e-12 * std::abs(r(0, 0))))
      throw Error(ErrorCode::InvalidInput, "feasible_basis: Prop.-2 images are numerically dependent");
  }
  const Matrix rinv = r.triangularView<Eigen::Upper>().solve(Matrix::Identity(d, d));

  FeasibleBasis out;
  out.d = d;
  out.bx_symmetric_dim = n * m - m * (m - 1) / 2;
  out.basis_X.reserve(d);
  out.basis_L.reserve(d);
  for (int j = 0; j < d; ++j) {
    out.basis_X.push_back(Eigen::Map<const Matrix>(q.col(j).data(), n, m));
    Matrix lj = Matrix::Zero(n, n);
    for (int k = 0; k <= j; ++k) lj += rinv(k, j) * raw_l[k];
    out.basis_L.push_back(0.5 * (lj + lj.transpose()));
  }
  return out;
}

// Deterministic random Hermitian trigonometric polynomial in the kernel of
// Gamma: a degree-(n+2) family with real coefficient matrices is projected
// onto the null space of the sampled moment map and combined with seeded
// weights, then normalized to unit peak Frobenius norm.
inline GridHermitianFunction ker_gamma_perturbation(std::uint64_t seed, const FilterBank& bank,
                                                    const CircleGrid& grid) {
  const int n = bank.n, m = bank.m;
  const int deg = n + 2;
  const GridMatrixFunction g = eval_G(bank, grid);

  // Parameter list: symmetric C_0, then full real C_k for k = 1..deg; the
  // sample of parameter (k, E) is E e^{ik theta} + E' e^{-ik theta}.
  struct Term {
    int k;
    Matrix e;
  };
  std::vector<Term> terms;
  for (const Matrix& e : detail::symmetric_basis(m)) terms.push_back({0, e});
  for (int k = 1; k <= deg; ++k)
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b) {
        Matrix e = Matrix::Zero(m, m);
        e(a, b) = 1.0;
        terms.push_back({k, std::move(e)});
      }
  const int np = static_cast<int>(terms.size());

  auto term_samples = [&](const Term& t) {
    std::vector<CMatrix> vals(grid.size());
    const CMatrix e = t.e.cast<Complex>();
    for (int j = 0; j < grid.size(); ++j) {
      if (t.k == 0) {
        vals[j] = e;
      } else {
        const Complex w = std::polar(1.0, t.k * grid.node(j));
        vals[j] = w * e + std::conj(w) * e.transpose();
      }
    }
    return GridHermitianFunction(grid, std::move(vals));
  };

  const int nsym = n * (n + 1) / 2;
  Matrix a(nsym, np);
  for (int p = 0; p < np; ++p) {
    const Matrix gp = apply_gamma(term_samples(terms[p]), g);
    int r = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) a(r++, p) = (i == j) ? gp(i, j) : std::sqrt(2.0) * gp(i, j);
  }

  // Full V: when the family is wider than the packed image space the thin V
  // would omit most of the null space.
  Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > 1e-10 * std::max(sv(0), 1e-300)) ++rank;
  const int nullity = np - rank;
  if (nullity <= 0)
    throw Error(ErrorCode::DegenerateKernel,
                "ker_gamma_perturbation: the polynomial family meets range constraints only");

  Matrix nullbasis = svd.matrixV().rightCols(nullity);
  for (int i = 0; i < nullity; ++i) detail::canonicalize_sign(nullbasis.col(i));

  // splitmix-style uniform weights in [-1, 1]; no std:: distributions so the
  // stream is identical across standard libraries.
  std::uint64_t state = seed + 0x9e3779b97f4a7c15ull;
  auto next_uniform = [&state]() {
    std::uint64_t z = state += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    z ^= z >> 31;
    return 2.0 * ((z >> 11) * 0x1.0p-53) - 1.0;
  };
  Vector coeff = Vector::Zero(np);
  for (int i = 0; i < nullity; ++i) coeff += next_uniform() * nullbasis.col(i);

  std::vector<CMatrix> vals(grid.size(), CMatrix::Zero(m, m));
  for (int p = 0; p < np; ++p) {
    if (coeff(p) == 0.0) continue;
    const GridHermitianFunction tp = term_samples(terms[p]);
    for (int j = 0; j < grid.size(); ++j) vals[j] += coeff(p) * tp.values[j];
  }
  double peak = 0.0;
  for (const auto& vj : vals) peak = std::max(peak, vj.norm());
  if (!(peak > 0.0))
    throw Error(ErrorCode::DegenerateKernel, "ker_gamma_perturbation: zero perturbation drawn");
  for (auto& vj : vals) vj /= peak;

  GridHermitianFunction delta(grid, std::move(vals));
  if (apply_gamma(delta, g).norm() > 1e-10)
    throw Error(ErrorCode::DegenerateKernel,
                "ker_gamma_perturbation: kernel projection failed verification");
  return delta;
}

}  // namespace specmoment
