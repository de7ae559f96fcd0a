#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include "errors.hpp"

namespace specmoment {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

inline bool is_power_of_two(long v) { return v > 0 && (v & (v - 1)) == 0; }

// Uniform grid theta_j = 2*pi*j/N - pi on [-pi, pi).  The node set is closed
// under negation modulo 2*pi (theta_0 = -pi maps to itself), which keeps
// grid means of conjugate-symmetric functions real.
class CircleGrid {
 public:
  explicit CircleGrid(int n) : n_(n) {
    if (n < 4 || !is_power_of_two(n))
      throw Error(ErrorCode::InvalidInput,
                  "grid size must be a power of two >= 4, got " + std::to_string(n));
    nodes_.resize(n_);
    for (int j = 0; j < n_; ++j)
      nodes_[j] = 2.0 * std::numbers::pi * j / n_ - std::numbers::pi;
  }

  int size() const { return n_; }
  double node(int j) const { return nodes_[j]; }
  const std::vector<double>& nodes() const { return nodes_; }

  bool operator==(const CircleGrid& o) const { return n_ == o.n_; }

 private:
  int n_;
  std::vector<double> nodes_;
};

// Sampled p x q matrix function on a CircleGrid (houses G, G0, ...).
struct GridMatrixFunction {
  CircleGrid grid;
  std::vector<CMatrix> values;

  GridMatrixFunction(CircleGrid g, std::vector<CMatrix> v)
      : grid(std::move(g)), values(std::move(v)) {
    if (static_cast<int>(values.size()) != grid.size())
      throw Error(ErrorCode::InvalidInput, "sample count does not match grid size");
  }
};

// Sampled Hermitian p x p matrix function (houses Phi, Psi, Q).  Samples are
// symmetrized on construction.
struct GridHermitianFunction {
  CircleGrid grid;
  std::vector<CMatrix> values;

  GridHermitianFunction(CircleGrid g, std::vector<CMatrix> v)
      : grid(std::move(g)), values(std::move(v)) {
    if (static_cast<int>(values.size()) != grid.size())
      throw Error(ErrorCode::InvalidInput, "sample count does not match grid size");
    for (auto& m : values) {
      if (m.rows() != m.cols())
        throw Error(ErrorCode::InvalidInput, "Hermitian samples must be square");
      m = 0.5 * (m + m.adjoint()).eval();
    }
  }

  int dim() const { return values.empty() ? 0 : static_cast<int>(values.front().rows()); }
};

namespace detail {

// Fixed-shape pairwise tree sum of f(lo..hi-1); the reduction order is a
// balanced binary tree, so results do not depend on evaluation parallelism.
template <class F>
auto pairwise_sum(int lo, int hi, F&& f) -> decltype(f(0)) {
  if (hi - lo == 1) return f(lo);
  const int mid = lo + (hi - lo) / 2;
  return pairwise_sum(lo, mid, f) + pairwise_sum(mid, hi, f);
}

// Cholesky log-determinant with a relative pivot floor: a sample counts as
// positive definite only if every pivot exceeds rel_floor * max diagonal.
// Returns false (and leaves logdet untouched) when the test fails.
inline bool cholesky_logdet(const CMatrix& a, double rel_floor, double& logdet) {
  const int p = static_cast<int>(a.rows());
  double maxdiag = 0.0;
  for (int k = 0; k < p; ++k) maxdiag = std::max(maxdiag, a(k, k).real());
  if (!(maxdiag > 0.0)) return false;
  const double floor = rel_floor * maxdiag;
  CMatrix l = CMatrix::Zero(p, p);
  double acc = 0.0;
  for (int j = 0; j < p; ++j) {
    double d = a(j, j).real();
    for (int k = 0; k < j; ++k) d -= std::norm(l(j, k));
    if (!(d > floor)) return false;
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    acc += std::log(d);
    for (int i = j + 1; i < p; ++i) {
      Complex s = a(i, j);
      for (int k = 0; k < j; ++k) s -= l(i, k) * std::conj(l(j, k));
      l(i, j) = s / ljj;
    }
  }
  logdet = acc;
  return true;
}

constexpr double kPivotFloor = 1e-12;

}  // namespace detail

inline CMatrix circle_mean(const GridMatrixFunction& f) {
  if (f.values.empty()) throw Error(ErrorCode::InvalidInput, "empty grid function");
  const int n = f.grid.size();
  CMatrix s = detail::pairwise_sum(0, n, [&](int j) { return f.values[j]; });
  return s / static_cast<double>(n);
}

inline CMatrix circle_mean(const GridHermitianFunction& f) {
  if (f.values.empty()) throw Error(ErrorCode::InvalidInput, "empty grid function");
  const int n = f.grid.size();
  CMatrix s = detail::pairwise_sum(0, n, [&](int j) { return f.values[j]; });
  return s / static_cast<double>(n);
}

// Mean of log det Q(theta_j); pointwise Cholesky with the relative pivot
// floor decides positive definiteness.
inline double logdet_mean(const GridHermitianFunction& q) {
  if (q.values.empty()) throw Error(ErrorCode::InvalidInput, "empty grid function");
  const int n = q.grid.size();
  std::vector<double> lds(n);
  for (int j = 0; j < n; ++j) {
    if (!detail::cholesky_logdet(q.values[j], detail::kPivotFloor, lds[j]))
      throw Error(ErrorCode::NotPositiveDefinite,
                  "sample not positive definite at theta = " + std::to_string(q.grid.node(j)));
  }
  return detail::pairwise_sum(0, n, [&](int j) { return lds[j]; }) / n;
}

}  // namespace specmoment
