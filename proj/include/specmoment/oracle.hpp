#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <string>
#include <vector>

#include "errors.hpp"
#include "filter_bank.hpp"
#include "grid.hpp"
#include "moment_space.hpp"
#include "spectra.hpp"

namespace specmoment {

// Prediction-error filter 1 + a_1 z^{-1} + ... + a_p z^{-p} with innovation
// variance sigma2.  Produced by levinson(), which guarantees minimum phase.
struct ARModel {
  std::vector<double> a;
  double sigma2 = 0.0;
};

// Levinson-Durbin recursion on the lags c_0..c_p.  Entirely independent of
// the optimization-based solvers: direct recursion, no quadrature.
inline ARModel levinson(const std::vector<double>& c) {
  if (c.empty())
    throw Error(ErrorCode::InvalidInput, "levinson: need at least the zeroth lag");
  if (!(c[0] > 0.0))
    throw Error(ErrorCode::NotPositiveDefinite, "levinson: c0 must be positive");
  const int p = static_cast<int>(c.size()) - 1;
  std::vector<double> a;
  double err = c[0];
  for (int k = 1; k <= p; ++k) {
    double acc = c[k];
    for (int j = 1; j < k; ++j) acc += a[j - 1] * c[k - j];
    const double refl = -acc / err;
    if (!(std::abs(refl) < 1.0))
      throw Error(ErrorCode::NotPositiveDefinite,
                  "levinson: Toeplitz matrix is not positive definite (reflection " +
                      std::to_string(refl) + " at step " + std::to_string(k) + ")");
    std::vector<double> next(a.size() + 1);
    for (int j = 1; j < k; ++j) next[j - 1] = a[j - 1] + refl * a[k - j - 1];
    next[k - 1] = refl;
    a = std::move(next);
    err *= 1.0 - refl * refl;
  }
  return ARModel{std::move(a), err};
}

// sigma2 / |1 + sum a_k e^{-ik theta}|^2 on the grid.
inline SpectralDensity ar_spectrum(const ARModel& model, const CircleGrid& grid) {
  if (!(model.sigma2 > 0.0))
    throw Error(ErrorCode::InvalidInput, "ar_spectrum: noise variance must be positive");
  std::vector<double> vals(grid.size());
  for (int j = 0; j < grid.size(); ++j) {
    Complex den(1.0, 0.0);
    for (size_t k = 0; k < model.a.size(); ++k)
      den += model.a[k] * std::polar(1.0, -grid.node(j) * static_cast<double>(k + 1));
    vals[j] = model.sigma2 / std::norm(den);
  }
  return scalar_density(vals, grid);
}

// Central difference (f(x + h d) - f(x - h d)) / 2h in coordinate space.
inline double finite_diff_directional(const std::function<double(const Vector&)>& f,
                                      const Vector& x, const Vector& dir, double h) {
  if (!(h > 0.0))
    throw Error(ErrorCode::InvalidInput, "finite_diff_directional: step must be positive");
  return (f(x + h * dir) - f(x - h * dir)) / (2.0 * h);
}

inline double moment_residual(const SpectralDensity& phi, const StateCovariance& cov,
                              const FilterBank& bank, const CircleGrid& grid) {
  return (apply_gamma(phi.samples, bank, grid) - cov.sigma).norm() / cov.sigma.norm();
}

}  // namespace specmoment
