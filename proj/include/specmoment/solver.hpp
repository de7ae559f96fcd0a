#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "filter_bank.hpp"
#include "grid.hpp"
#include "moment_space.hpp"
#include "spectra.hpp"

namespace specmoment {

struct NewtonConfig {
  int grid_size = 4096;
  double grad_tol = 1e-10;  // relative to 1 + ||H||_F
  int max_iter = 100;
  double armijo_slope = 1e-4;
  double step_shrink = 0.5;
  double pd_margin = 1e-9;  // relative lambda_min floor for Q along the search
};

// Q(theta) = Psi(theta)^{-1} + G0(theta)* X + X' G0(theta).
struct QFunction {
  GridHermitianFunction samples;
};

struct SolveResult {
  SpectralDensity phi;
  DualVariable x;
  Matrix lambda;  // n x n multiplier paired with x (sole output of the closed form)
  double divergence = 0.0;
  double stationarity_residual = 0.0;
  double moment_residual = 0.0;
  int iterations = 0;
  bool converged = false;
  // Diagnostics.
  std::vector<double> objective_trace;  // J at x0 and after each accepted step
  double hessian_min_eig = std::numeric_limits<double>::infinity();
  bool monotone = true;
};

struct Gradient {
  Matrix raw;     // n x m: 2 (H - mean Q^{-1} G0*)'
  Vector coords;  // Frobenius projections onto basis_X
};

namespace detail {

constexpr double kRefineTol = 1e-9;

inline double rel_gap(double fine, double coarse) {
  return std::abs(fine - coarse) / (1.0 + std::abs(fine));
}

inline double rel_gap(const Matrix& fine, const Matrix& coarse) {
  return (fine - coarse).norm() / (1.0 + fine.norm());
}

inline double rel_gap(const CMatrix& fine, const CMatrix& coarse) {
  return (fine - coarse).norm() / (1.0 + fine.norm());
}

inline std::vector<CMatrix> downsample(const std::vector<CMatrix>& vals) {
  std::vector<CMatrix> out;
  out.reserve(vals.size() / 2);
  for (size_t j = 0; j < vals.size(); j += 2) out.push_back(vals[j]);
  return out;
}

// Shared per-grid state for the dual functional: G0 samples and pointwise
// Psi^{-1}.  All evaluations below run off these arrays.
struct DualEngine {
  int n, m, N;
  CircleGrid grid;
  std::vector<CMatrix> g0ad;     // m x n, adjoints of G0 samples
  std::vector<CMatrix> psi_inv;  // m x m

  DualEngine(const FilterBank& bank, const SpectralDensity& psi)
      : n(bank.n), m(bank.m), N(psi.grid().size()), grid(psi.grid()) {
    if (psi.dim() != bank.m)
      throw Error(ErrorCode::InvalidInput, "prior dimension does not match bank inputs");
    if (!psi.coercive())
      throw Error(ErrorCode::NotCoercive, "prior density is not coercive");
    const GridMatrixFunction g0 = eval_G0(bank, grid);
    g0ad.reserve(N);
    for (int j = 0; j < N; ++j) g0ad.push_back(g0.values[j].adjoint());
    psi_inv.reserve(N);
    for (int j = 0; j < N; ++j) {
      Eigen::SelfAdjointEigenSolver<CMatrix> es(psi.samples.values[j]);
      psi_inv.push_back(es.eigenvectors() *
                        es.eigenvalues().cwiseInverse().asDiagonal() *
                        es.eigenvectors().adjoint());
    }
  }

  std::vector<CMatrix> q_samples(const Matrix& x) const {
    const CMatrix xc = x.cast<Complex>();
    std::vector<CMatrix> q(N);
    for (int j = 0; j < N; ++j) {
      const CMatrix t = g0ad[j] * xc;
      q[j] = psi_inv[j] + t + t.adjoint();
      q[j] = 0.5 * (q[j] + q[j].adjoint()).eval();
    }
    return q;
  }

  // Global eigenvalue range of Q over the grid; PD with relative margin.
  bool q_positive(const std::vector<CMatrix>& q, double pd_margin) const {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const CMatrix& qj : q) {
      Eigen::SelfAdjointEigenSolver<CMatrix> es(qj, Eigen::EigenvaluesOnly);
      lo = std::min(lo, es.eigenvalues().minCoeff());
      hi = std::max(hi, es.eigenvalues().maxCoeff());
    }
    return lo > 0.0 && lo >= pd_margin * hi;
  }

  bool mean_logdet(const std::vector<CMatrix>& q, double& out) const {
    std::vector<double> lds(N);
    for (int j = 0; j < N; ++j)
      if (!cholesky_logdet(q[j], kPivotFloor, lds[j])) return false;
    out = pairwise_sum(0, N, [&](int j) { return lds[j]; }) / N;
    return true;
  }

  // J(x) = tr(HX + X'H') - mean log det Q; false if Q leaves the domain.
  bool objective(const Matrix& h, const Matrix& x, const std::vector<CMatrix>& q,
                 double& out) const {
    double ld = 0.0;
    if (!mean_logdet(q, ld)) return false;
    out = 2.0 * (h * x).trace() - ld;
    return true;
  }

  // P_j = Q_j^{-1}, R_j = Q_j^{-1} G0_j^*.
  void factorize(const std::vector<CMatrix>& q, std::vector<CMatrix>& p,
                 std::vector<CMatrix>& r) const {
    p.resize(N);
    r.resize(N);
    const CMatrix eye = CMatrix::Identity(m, m);
    for (int j = 0; j < N; ++j) {
      p[j] = q[j].llt().solve(eye);
      p[j] = 0.5 * (p[j] + p[j].adjoint()).eval();
      r[j] = p[j] * g0ad[j];
    }
  }

  CMatrix mean_r(const std::vector<CMatrix>& r) const {
    return pairwise_sum(0, N, [&](int j) -> CMatrix { return r[j]; }) /
           static_cast<double>(N);
  }

  Matrix raw_gradient(const Matrix& h, const CMatrix& s_mean) const {
    return 2.0 * (h - s_mean.real()).transpose();
  }

  // Riesz representer of the second directional derivative along dx:
  // W(dx) = 2 Re(mean Q^{-1} dQ Q^{-1} G0*)', dQ = G0* dx + dx' G0.
  Matrix hessian_rep(const std::vector<CMatrix>& p, const std::vector<CMatrix>& r,
                     const Matrix& dx) const {
    const CMatrix dxc = dx.cast<Complex>();
    const CMatrix acc = pairwise_sum(0, N, [&](int j) -> CMatrix {
      const CMatrix t = g0ad[j] * dxc;
      return p[j] * (t + t.adjoint()) * r[j];
    });
    return 2.0 * (acc / static_cast<double>(N)).real().transpose();
  }
};

inline Vector project_coords(const Matrix& raw, const FeasibleBasis& basis) {
  Vector c(basis.d);
  for (int i = 0; i < basis.d; ++i)
    c(i) = raw.cwiseProduct(basis.basis_X[i]).sum();
  return c;
}

inline Matrix coords_to_matrix(const Vector& c, const std::vector<Matrix>& basis,
                               int rows, int cols) {
  Matrix x = Matrix::Zero(rows, cols);
  for (int i = 0; i < c.size(); ++i) x += c(i) * basis[i];
  return x;
}

}  // namespace detail

inline QFunction assemble_Q(const DualVariable& x, const SpectralDensity& psi,
                            const FilterBank& bank, const CircleGrid& grid) {
  if (!(psi.grid() == grid))
    throw Error(ErrorCode::InvalidInput, "assemble_Q: prior sampled on a different grid");
  if (x.X.rows() != bank.n || x.X.cols() != bank.m)
    throw Error(ErrorCode::InvalidInput, "assemble_Q: X must be n x m");
  const detail::DualEngine eng(bank, psi);
  return QFunction{GridHermitianFunction(grid, eng.q_samples(x.X))};
}

inline double objective_J(const DualVariable& x, const Matrix& h,
                          const SpectralDensity& psi, const FilterBank& bank,
                          const CircleGrid& grid) {
  if (!(psi.grid() == grid))
    throw Error(ErrorCode::InvalidInput, "objective_J: prior sampled on a different grid");
  if (h.rows() != bank.m || h.cols() != bank.n)
    throw Error(ErrorCode::InvalidInput, "objective_J: H must be m x n");
  const detail::DualEngine eng(bank, psi);
  double out = 0.0;
  if (!eng.objective(h, x.X, eng.q_samples(x.X), out))
    throw Error(ErrorCode::NotInDomain, "objective_J: Q is not positive definite on the grid");
  return out;
}

inline Gradient gradient_J(const DualVariable& x, const Matrix& h,
                           const SpectralDensity& psi, const FilterBank& bank,
                           const CircleGrid& grid, const FeasibleBasis& basis) {
  if (!(psi.grid() == grid))
    throw Error(ErrorCode::InvalidInput, "gradient_J: prior sampled on a different grid");
  const detail::DualEngine eng(bank, psi);
  const std::vector<CMatrix> q = eng.q_samples(x.X);
  double ld = 0.0;
  if (!eng.mean_logdet(q, ld))
    throw Error(ErrorCode::NotInDomain, "gradient_J: Q is not positive definite on the grid");
  std::vector<CMatrix> p, r;
  eng.factorize(q, p, r);
  const Matrix raw = eng.raw_gradient(h, eng.mean_r(r));
  return Gradient{raw, detail::project_coords(raw, basis)};
}

inline Matrix hessian_apply(const DualVariable& x, const Matrix& dx,
                            const SpectralDensity& psi, const FilterBank& bank,
                            const CircleGrid& grid) {
  if (!(psi.grid() == grid))
    throw Error(ErrorCode::InvalidInput, "hessian_apply: prior sampled on a different grid");
  if (dx.rows() != bank.n || dx.cols() != bank.m)
    throw Error(ErrorCode::InvalidInput, "hessian_apply: direction must be n x m");
  const detail::DualEngine eng(bank, psi);
  const std::vector<CMatrix> q = eng.q_samples(x.X);
  double ld = 0.0;
  if (!eng.mean_logdet(q, ld))
    throw Error(ErrorCode::NotInDomain, "hessian_apply: Q is not positive definite on the grid");
  std::vector<CMatrix> p, r;
  eng.factorize(q, p, r);
  return eng.hessian_rep(p, r, dx);
}

namespace detail {

inline void validate_config(const NewtonConfig& cfg) {
  if (!is_power_of_two(cfg.grid_size) || cfg.grid_size < 4)
    throw Error(ErrorCode::InvalidInput, "config: grid_size must be a power of two >= 4");
  if (!(cfg.grad_tol > 0.0) || cfg.max_iter < 1 || !(cfg.armijo_slope > 0.0) ||
      !(cfg.step_shrink > 0.0 && cfg.step_shrink < 1.0) || !(cfg.pd_margin > 0.0))
    throw Error(ErrorCode::InvalidInput, "config: tolerances must be positive, step_shrink in (0,1)");
}

// The integrals the solve depends on must already be converged in N: each is
// evaluated on the working grid and on its stride-2 restriction, and the two
// must agree to kRefineTol.  Checked before iterating (the basis moment
// images and the prior's moment) and after convergence (solution integrals).
struct RefinementChecker {
  double worst = 0.0;
  std::string what;

  void record(double gap, const std::string& name) {
    if (gap > worst) {
      worst = gap;
      what = name;
    }
  }

  void enforce(int grid_size) const {
    if (worst > kRefineTol)
      throw Error(ErrorCode::GridTooCoarse,
                  "grid with " + std::to_string(grid_size) +
                      " nodes fails the refinement check on " + what + " (residual " +
                      std::to_string(worst) + "); increase the grid size");
  }
};

}  // namespace detail

inline SolveResult solve_newton(const StateCovariance& cov, const PriorSpec& prior,
                                const FilterBank& bank, const NewtonConfig& cfg = {}) {
  detail::validate_config(cfg);
  if (cfg.grid_size < 8)
    throw Error(ErrorCode::GridTooCoarse,
                "grid with " + std::to_string(cfg.grid_size) +
                    " nodes is too small to run the refinement check");

  const FeasibilityReport feas = feasibility_check(cov, bank);
  if (!feas.feasible)
    throw Error(ErrorCode::Infeasible, "Sigma is not in the range of the moment map");
  if (!feas.strictly)
    throw Error(ErrorCode::Infeasible, "Sigma is not positive definite (not strictly feasible)");
  const Matrix h = feas.H->H;

  const CircleGrid grid(cfg.grid_size);
  const SpectralDensity psi = realize_prior(prior, bank, grid);
  const SpectralDensity psi_half = half_grid_density(psi);
  const FeasibleBasis basis = feasible_basis(bank);

  const GridMatrixFunction g_fine = eval_G(bank, grid);
  const GridMatrixFunction g_half = eval_G(bank, psi_half.grid());

  {
    detail::RefinementChecker chk;
    for (int i = 0; i < basis.d; ++i) {
      const Matrix fine = apply_gamma(apply_gamma_star(basis.basis_L[i], g_fine), g_fine);
      const Matrix coarse = apply_gamma(apply_gamma_star(basis.basis_L[i], g_half), g_half);
      chk.record(detail::rel_gap(fine, coarse), "a basis moment image");
    }
    chk.record(detail::rel_gap(apply_gamma(psi.samples, g_fine),
                               apply_gamma(psi_half.samples, g_half)),
               "the prior's moment");
    chk.enforce(cfg.grid_size);
  }

  const detail::DualEngine eng(bank, psi);
  const double grad_tol = cfg.grad_tol * (1.0 + h.norm());
  const double eps = std::numeric_limits<double>::epsilon();

  Vector xc = Vector::Zero(basis.d);
  Matrix x = Matrix::Zero(bank.n, bank.m);
  std::vector<CMatrix> q = eng.q_samples(x);
  double jc = 0.0;
  if (!eng.objective(h, x, q, jc))
    throw Error(ErrorCode::NotCoercive, "prior density is not coercive on the grid");

  std::vector<double> trace{jc};
  double hess_min = std::numeric_limits<double>::infinity();
  bool monotone = true;
  bool converged = false;
  int iterations = 0;
  Vector g;

  for (int it = 0; it < cfg.max_iter + 1; ++it) {
    std::vector<CMatrix> p, r;
    eng.factorize(q, p, r);
    const Matrix raw = eng.raw_gradient(h, eng.mean_r(r));
    g = detail::project_coords(raw, basis);
    if (g.norm() <= grad_tol) {
      converged = true;
      break;
    }
    if (it == cfg.max_iter) break;

    Matrix k(basis.d, basis.d);
    for (int col = 0; col < basis.d; ++col) {
      const Matrix w = eng.hessian_rep(p, r, basis.basis_X[col]);
      for (int row = 0; row < basis.d; ++row)
        k(row, col) = w.cwiseProduct(basis.basis_X[row]).sum();
    }
    k = 0.5 * (k + k.transpose()).eval();
    {
      Eigen::SelfAdjointEigenSolver<Matrix> es(k, Eigen::EigenvaluesOnly);
      hess_min = std::min(hess_min, es.eigenvalues().minCoeff());
    }
    const Vector delta = k.ldlt().solve(-g);
    const double pred = -g.dot(delta);

    bool accepted = false;
    if (pred <= 16.0 * eps * (1.0 + std::abs(jc))) {
      // The predicted decrease is below the resolution of J in double
      // precision; a sufficient-decrease test cannot terminate.  Take the
      // positivity-guarded full Newton step instead.
      double t = 1.0;
      while (t >= 1e-16) {
        const Vector xt = xc + t * delta;
        const Matrix xm = detail::coords_to_matrix(xt, basis.basis_X, bank.n, bank.m);
        std::vector<CMatrix> qt = eng.q_samples(xm);
        double jt = 0.0;
        if (eng.q_positive(qt, cfg.pd_margin) && eng.objective(h, xm, qt, jt)) {
          monotone = monotone && jt <= jc + 16.0 * eps * (1.0 + std::abs(jc));
          xc = xt;
          x = xm;
          q = std::move(qt);
          jc = jt;
          accepted = true;
          break;
        }
        t *= cfg.step_shrink;
      }
    } else {
      double t = 1.0;
      while (t >= 1e-16) {
        const Vector xt = xc + t * delta;
        const Matrix xm = detail::coords_to_matrix(xt, basis.basis_X, bank.n, bank.m);
        std::vector<CMatrix> qt = eng.q_samples(xm);
        double jt = 0.0;
        if (eng.q_positive(qt, cfg.pd_margin) && eng.objective(h, xm, qt, jt) &&
            jt <= jc - cfg.armijo_slope * t * pred) {
          monotone = monotone && jt < jc;
          xc = xt;
          x = xm;
          q = std::move(qt);
          jc = jt;
          accepted = true;
          break;
        }
        t *= cfg.step_shrink;
      }
    }
    if (!accepted) break;  // line search exhausted; report non-convergence
    ++iterations;
    trace.push_back(jc);
  }

  // Phi = Q^{-1} pointwise.
  std::vector<CMatrix> phi_vals(eng.N);
  for (int j = 0; j < eng.N; ++j) {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(q[j]);
    phi_vals[j] = es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() *
                  es.eigenvectors().adjoint();
  }
  SpectralDensity phi = make_density(GridHermitianFunction(grid, std::move(phi_vals)));

  std::vector<CMatrix> p, r;
  eng.factorize(q, p, r);
  const double stationarity = 0.5 * g.norm() / (1.0 + h.norm());
  const Matrix gamma_phi = apply_gamma(phi.samples, g_fine);
  const double moment_res = (gamma_phi - cov.sigma).norm() / cov.sigma.norm();
  const double divergence = itakura_saito(phi, psi);

  if (converged) {
    detail::RefinementChecker chk;
    SpectralDensity phi_half =
        make_density(GridHermitianFunction(psi_half.grid(), detail::downsample(phi.samples.values)));
    chk.record(detail::rel_gap(gamma_phi, apply_gamma(phi_half.samples, g_half)),
               "the solution's moment");

    const detail::DualEngine eng_half(bank, psi_half);
    std::vector<CMatrix> q_half = detail::downsample(q);
    std::vector<CMatrix> p_half, r_half;
    eng_half.factorize(q_half, p_half, r_half);
    chk.record(detail::rel_gap(eng.mean_r(r), eng_half.mean_r(r_half)),
               "the stationarity integral");

    double ld_fine = 0.0, ld_half = 0.0;
    eng.mean_logdet(q, ld_fine);
    eng_half.mean_logdet(q_half, ld_half);
    chk.record(detail::rel_gap(ld_fine, ld_half), "log det Q");

    chk.record(detail::rel_gap(divergence, itakura_saito(phi_half, psi_half)),
               "the divergence");
    chk.enforce(cfg.grid_size);
  }

  return SolveResult{std::move(phi),
                     DualVariable{x, xc},
                     detail::coords_to_matrix(xc, basis.basis_L, bank.n, bank.n),
                     divergence,
                     stationarity,
                     moment_res,
                     iterations,
                     converged,
                     std::move(trace),
                     hess_min,
                     monotone};
}

inline SolveResult solve_closed_form(const StateCovariance& cov, const FilterBank& bank,
                                     const CircleGrid& grid) {
  const Matrix& sigma = cov.sigma;
  if (sigma.rows() != bank.n)
    throw Error(ErrorCode::InvalidInput, "solve_closed_form: dimension mismatch");

  Eigen::SelfAdjointEigenSolver<Matrix> es(sigma);
  const Vector ev = es.eigenvalues();
  if (!(ev.maxCoeff() > 0.0) || ev.minCoeff() <= 1e-12 * ev.maxCoeff())
    throw Error(ErrorCode::SingularSigma, "Sigma must be positive definite");
  const Matrix sigma_inv = es.eigenvectors() * ev.cwiseInverse().asDiagonal() *
                           es.eigenvectors().transpose();

  const Matrix bsb = bank.B.transpose() * sigma_inv * bank.B;
  Eigen::SelfAdjointEigenSolver<Matrix> esb(bsb);
  const Vector evb = esb.eigenvalues();
  if (!(evb.minCoeff() > 0.0))
    throw Error(ErrorCode::SingularSigma, "B' Sigma^{-1} B must be positive definite");
  const Matrix bsb_inv = esb.eigenvectors() * evb.cwiseInverse().asDiagonal() *
                         esb.eigenvectors().transpose();
  const Matrix bsb_invsqrt = esb.eigenvectors() *
                             evb.cwiseSqrt().cwiseInverse().asDiagonal() *
                             esb.eigenvectors().transpose();

  Matrix lambda = sigma_inv * bank.B * bsb_inv * bank.B.transpose() * sigma_inv;
  lambda = 0.5 * (lambda + lambda.transpose()).eval();

  const Matrix c = sigma_inv * bank.B * bsb_invsqrt;
  const Matrix lhs = bank.B.transpose() * c * c.transpose();
  const Matrix rhs = bank.B.transpose() * sigma_inv;
  const double id_res = (lhs - rhs).norm() / (1.0 + rhs.norm());
  if (id_res > 1e-12)
    throw Error(ErrorCode::InvalidInput,
                "solve_closed_form: stationarity identity violated (residual " +
                    std::to_string(id_res) + ")");

  const GridMatrixFunction g = eval_G(bank, grid);
  const int nn = grid.size();
  std::vector<Eigen::SelfAdjointEigenSolver<CMatrix>> decomp;
  decomp.reserve(nn);
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (int j = 0; j < nn; ++j) {
    const CMatrix s = g.values[j].adjoint() * lambda.cast<Complex>() * g.values[j];
    decomp.emplace_back(CMatrix(0.5 * (s + s.adjoint())));
    lo = std::min(lo, decomp.back().eigenvalues().minCoeff());
    hi = std::max(hi, decomp.back().eigenvalues().maxCoeff());
  }
  if (!(lo > 1e-12 * std::max(1.0, hi)))
    throw Error(ErrorCode::NotPositiveOnCircle,
                "G* Lambda G loses rank on the grid; the all-pole solution does not exist");
  std::vector<CMatrix> phi_vals;
  phi_vals.reserve(nn);
  for (int j = 0; j < nn; ++j)
    phi_vals.push_back(decomp[j].eigenvectors() *
                       decomp[j].eigenvalues().cwiseInverse().asDiagonal() *
                       decomp[j].eigenvectors().adjoint());
  SpectralDensity phi = make_density(GridHermitianFunction(grid, std::move(phi_vals)));

  const double moment_res = (apply_gamma(phi.samples, g) - sigma).norm() / sigma.norm();
  const SpectralDensity psi0 = realize_prior(
      PriorSpec::all_pole(Matrix::Identity(bank.n, bank.n)), bank, grid);
  const double divergence = itakura_saito(phi, psi0);

  return SolveResult{std::move(phi),
                     lambda_to_X(lambda, bank),
                     lambda,
                     divergence,
                     id_res,
                     moment_res,
                     0,
                     moment_res <= 1e-8,
                     {},
                     std::numeric_limits<double>::infinity(),
                     true};
}

}  // namespace specmoment
