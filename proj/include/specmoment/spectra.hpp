#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <utility>
#include <variant>
#include <vector>

#include "errors.hpp"
#include "filter_bank.hpp"
#include "grid.hpp"

namespace specmoment {

// Matrix spectral density sampled on a circle grid, with its eigenvalue
// range over the grid cached.  Densities are Hermitian PSD at every node;
// coercivity (uniform positive definiteness) is demanded only where stated.
struct SpectralDensity {
  GridHermitianFunction samples;
  double lambda_min;
  double lambda_max;

  int dim() const { return samples.dim(); }
  const CircleGrid& grid() const { return samples.grid; }

  bool coercive() const { return lambda_max > 0.0 && lambda_min >= 1e-8 * lambda_max; }
};

inline SpectralDensity make_density(GridHermitianFunction samples) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  int lo_node = 0;
  for (int j = 0; j < samples.grid.size(); ++j) {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(samples.values[j], Eigen::EigenvaluesOnly);
    const double node_lo = es.eigenvalues().minCoeff();
    if (node_lo < lo) {
      lo = node_lo;
      lo_node = j;
    }
    hi = std::max(hi, es.eigenvalues().maxCoeff());
  }
  if (lo < -1e-10 * std::max(1.0, hi))
    throw Error(ErrorCode::InvalidInput,
                "density is not positive semidefinite at theta = " +
                    std::to_string(samples.grid.node(lo_node)));
  return SpectralDensity{std::move(samples), lo, hi};
}

inline SpectralDensity constant_density(double c, int m, const CircleGrid& grid) {
  if (!(c > 0.0))
    throw Error(ErrorCode::InvalidInput,
                "constant density needs a positive level, got " + std::to_string(c));
  std::vector<CMatrix> vals(grid.size(), CMatrix(c * CMatrix::Identity(m, m)));
  return make_density(GridHermitianFunction(grid, std::move(vals)));
}

// |w_0 + w_1 e^{-i theta} + ... + w_q e^{-i q theta}|^2 on the grid.
inline std::vector<double> ma_power(const std::vector<double>& w, const CircleGrid& grid) {
  std::vector<double> out(grid.size());
  for (int j = 0; j < grid.size(); ++j) {
    Complex s(0.0, 0.0);
    for (size_t k = 0; k < w.size(); ++k)
      s += w[k] * std::polar(1.0, -grid.node(j) * static_cast<double>(k));
    out[j] = std::norm(s);
  }
  return out;
}

inline SpectralDensity scalar_density(const std::vector<double>& values,
                                      const CircleGrid& grid) {
  if (static_cast<int>(values.size()) != grid.size())
    throw Error(ErrorCode::InvalidInput, "scalar density: sample count must match grid");
  std::vector<CMatrix> vals;
  vals.reserve(values.size());
  for (double v : values) {
    CMatrix s(1, 1);
    s(0, 0) = Complex(v, 0.0);
    vals.push_back(std::move(s));
  }
  return make_density(GridHermitianFunction(grid, std::move(vals)));
}

// Prior selection: a flat constant, an all-pole density (G* Lambda0 G)^{-1},
// a scalar moving-average density, or raw samples on the grid.
struct PriorSpec {
  struct Constant {
    double c;
  };
  struct AllPole {
    Matrix lambda0;
  };
  struct MovingAverage {
    std::vector<double> w;
  };
  struct Sampled {
    std::vector<CMatrix> values;
  };

  std::variant<Constant, AllPole, MovingAverage, Sampled> spec;

  static PriorSpec constant(double c) { return {Constant{c}}; }
  static PriorSpec all_pole(Matrix lambda0) { return {AllPole{std::move(lambda0)}}; }
  static PriorSpec moving_average(std::vector<double> w) {
    return {MovingAverage{std::move(w)}};
  }
  static PriorSpec sampled(std::vector<CMatrix> values) {
    return {Sampled{std::move(values)}};
  }
};

namespace detail {

inline SpectralDensity realize_prior_impl(const PriorSpec& prior, const FilterBank& bank,
                                          const CircleGrid& grid) {
  if (const auto* c = std::get_if<PriorSpec::Constant>(&prior.spec))
    return constant_density(c->c, bank.m, grid);

  if (const auto* ma = std::get_if<PriorSpec::MovingAverage>(&prior.spec)) {
    if (bank.m != 1)
      throw Error(ErrorCode::InvalidInput, "moving-average prior is scalar (needs m = 1)");
    if (ma->w.empty())
      throw Error(ErrorCode::InvalidInput, "moving-average prior needs coefficients");
    return scalar_density(ma_power(ma->w, grid), grid);
  }

  if (const auto* sa = std::get_if<PriorSpec::Sampled>(&prior.spec)) {
    if (static_cast<int>(sa->values.size()) != grid.size())
      throw Error(ErrorCode::InvalidInput, "sampled prior: need one matrix per grid node");
    for (const CMatrix& v : sa->values)
      if (v.rows() != bank.m || v.cols() != bank.m)
        throw Error(ErrorCode::InvalidInput,
                    "sampled prior: matrix size must match bank inputs");
    return make_density(GridHermitianFunction(grid, sa->values));
  }

  const auto& ap = std::get<PriorSpec::AllPole>(prior.spec);
  if (ap.lambda0.rows() != bank.n || ap.lambda0.cols() != bank.n)
    throw Error(ErrorCode::InvalidInput, "all-pole prior: Lambda0 must be n x n");
  if ((ap.lambda0 - ap.lambda0.transpose()).norm() >
      1e-12 * std::max(1.0, ap.lambda0.norm()))
    throw Error(ErrorCode::InvalidInput, "all-pole prior: Lambda0 must be symmetric");
  const Matrix lam0 = 0.5 * (ap.lambda0 + ap.lambda0.transpose());

  const GridMatrixFunction g = eval_G(bank, grid);
  std::vector<CMatrix> vals;
  vals.reserve(grid.size());
  for (int j = 0; j < grid.size(); ++j) {
    const CMatrix s = g.values[j].adjoint() * lam0.cast<Complex>() * g.values[j];
    Eigen::SelfAdjointEigenSolver<CMatrix> es(0.5 * (s + s.adjoint()));
    const Vector ev = es.eigenvalues();
    if (ev.minCoeff() <= 1e-12 * std::max(1.0, ev.maxCoeff()))
      throw Error(ErrorCode::NotCoercive,
                  "all-pole prior: G* Lambda0 G is singular near theta = " +
                      std::to_string(grid.node(j)));
    vals.push_back(es.eigenvectors() * ev.cwiseInverse().asDiagonal() *
                   es.eigenvectors().adjoint());
  }
  return make_density(GridHermitianFunction(grid, std::move(vals)));
}

}  // namespace detail

// A prior must realize to a coercive density; moving-average curves with
// unit-circle zeros are fine as *true* spectra (use scalar_density) but are
// rejected here.
inline SpectralDensity realize_prior(const PriorSpec& prior, const FilterBank& bank,
                                     const CircleGrid& grid) {
  SpectralDensity d = detail::realize_prior_impl(prior, bank, grid);
  if (!d.coercive())
    throw Error(ErrorCode::NotCoercive,
                "prior density is not coercive on the grid (eigenvalue range [" +
                    std::to_string(d.lambda_min) + ", " + std::to_string(d.lambda_max) + "])");
  return d;
}

// D(Phi || Psi) = 1/2 mean tr(Phi Psi^{-1})
//               - 1/2 (mean log det Phi - mean log det Psi) - m/2.
// Nonnegative for matched shapes, zero iff Phi = Psi on the grid.
inline double itakura_saito(const SpectralDensity& phi, const SpectralDensity& psi) {
  if (!(phi.grid() == psi.grid()))
    throw Error(ErrorCode::InvalidInput, "divergence: densities live on different grids");
  if (phi.dim() != psi.dim())
    throw Error(ErrorCode::InvalidInput, "divergence: densities of different size");
  if (!psi.coercive())
    throw Error(ErrorCode::NotCoercive, "divergence: reference density is not coercive");
  // The log term has no finite limit once an eigenvalue collapses relative to
  // the density's scale across the grid (per-sample pivot floors cannot see
  // this for scalar samples).
  if (phi.lambda_min < detail::kPivotFloor * phi.lambda_max)
    throw Error(ErrorCode::SingularDensity,
                "divergence: density is (numerically) singular somewhere on the grid");

  const int n = phi.grid().size();
  const int m = phi.dim();
  const double trace_term =
      detail::pairwise_sum(0, n,
                           [&](int j) {
                             return psi.samples.values[j]
                                 .llt()
                                 .solve(phi.samples.values[j])
                                 .trace()
                                 .real();
                           }) /
      static_cast<double>(n);

  double logdet_phi = 0.0;
  try {
    logdet_phi = logdet_mean(phi.samples);
  } catch (const Error&) {
    throw Error(ErrorCode::SingularDensity,
                "divergence: density is (numerically) singular somewhere on the grid");
  }
  const double logdet_psi = logdet_mean(psi.samples);

  return 0.5 * trace_term - 0.5 * (logdet_phi - logdet_psi) - 0.5 * m;
}

// Covariance lags c_k = mean(e^{i k theta} phi(theta)), k = 0..count-1, for
// scalar densities.  Imaginary parts cancel for symmetric spectra.
inline Vector spectrum_to_lags(const SpectralDensity& phi, int count) {
  if (phi.dim() != 1)
    throw Error(ErrorCode::InvalidInput, "lags: density must be scalar");
  if (count < 1)
    throw Error(ErrorCode::InvalidInput, "lags: count must be positive");
  const int n = phi.grid().size();
  Vector lags(count);
  for (int k = 0; k < count; ++k) {
    const Complex s = detail::pairwise_sum(0, n, [&](int j) {
      return std::polar(1.0, k * phi.grid().node(j)) * phi.samples.values[j](0, 0);
    });
    lags(k) = s.real() / static_cast<double>(n);
  }
  return lags;
}

// Stride-2 restriction onto the half grid; the coarse nodes are exactly the
// even nodes of the fine grid, so no interpolation is involved.
inline SpectralDensity half_grid_density(const SpectralDensity& phi) {
  const int n = phi.grid().size();
  if (n < 8)
    throw Error(ErrorCode::InvalidInput, "half grid: need at least 8 nodes");
  std::vector<CMatrix> vals;
  vals.reserve(n / 2);
  for (int j = 0; j < n; j += 2) vals.push_back(phi.samples.values[j]);
  return make_density(GridHermitianFunction(CircleGrid(n / 2), std::move(vals)));
}

}  // namespace specmoment
