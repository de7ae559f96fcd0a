#include <doctest.h>

#include <specmoment/oracle.hpp>
#include <specmoment/solver.hpp>

#include "support.hpp"

using namespace specmoment;
using testsupport::Rng;

TEST_CASE("levinson recursion on closed-form data") {
  SUBCASE("white noise") {
    ARModel mdl = levinson({1.0, 0.0, 0.0});
    CHECK(mdl.a.size() == 2);
    CHECK(std::abs(mdl.a[0]) < 1e-15);
    CHECK(std::abs(mdl.a[1]) < 1e-15);
    CHECK(mdl.sigma2 == doctest::Approx(1.0));
  }
  SUBCASE("one-lag memory") {
    ARModel mdl = levinson({1.0, 0.5});
    CHECK(mdl.a.size() == 1);
    CHECK(mdl.a[0] == doctest::Approx(-0.5).epsilon(1e-14));
    CHECK(mdl.sigma2 == doctest::Approx(0.75).epsilon(1e-14));
  }
  SUBCASE("order zero") {
    ARModel mdl = levinson({2.5});
    CHECK(mdl.a.empty());
    CHECK(mdl.sigma2 == doctest::Approx(2.5));
  }
  SUBCASE("rejects data without a positive definite Toeplitz form") {
    try {
      levinson({1.0, 1.2});
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NotPositiveDefinite);
    }
    CHECK_THROWS_AS(levinson({0.0, 0.0}), Error);
    CHECK_THROWS_AS(levinson({-1.0}), Error);
    CHECK_THROWS_AS(levinson({}), Error);
    // boundary case |reflection| = 1
    CHECK_THROWS_AS(levinson({1.0, 1.0}), Error);
  }
}

TEST_CASE("autoregressive spectra reproduce their lags") {
  CircleGrid g(2048);
  Rng rng(5);
  for (int trial = 0; trial < 4; ++trial) {
    // lags generated by a moving average are always a valid covariance
    std::vector<double> w(4);
    for (auto& v : w) v = rng.uniform();
    w[0] += 2.5;
    SpectralDensity src = scalar_density(ma_power(w, g), g);
    const int p = 3;
    Vector lags = spectrum_to_lags(src, p + 1);
    std::vector<double> c(lags.data(), lags.data() + p + 1);

    ARModel mdl = levinson(c);
    SpectralDensity ar = ar_spectrum(mdl, g);
    CHECK(ar.coercive());
    Vector back = spectrum_to_lags(ar, p + 1);
    for (int k = 0; k <= p; ++k)
      CHECK(back(k) == doctest::Approx(c[k]).epsilon(1e-10));
  }
}

TEST_CASE("levinson equals the closed-form solution on Toeplitz data") {
  CircleGrid g(2048);
  Rng rng(31);
  for (int n : {4, 8, 12}) {
    std::vector<double> w(n);
    for (auto& v : w) v = 0.4 * rng.uniform();
    w[0] += 2.0;
    SpectralDensity src = scalar_density(ma_power(w, g), g);
    Vector lags = spectrum_to_lags(src, n);
    Matrix sigma(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) sigma(i, j) = lags(std::abs(i - j));

    SolveResult closed = solve_closed_form(StateCovariance(sigma), toeplitz_bank(n), g);
    ARModel mdl = levinson(std::vector<double>(lags.data(), lags.data() + n));
    SpectralDensity ar = ar_spectrum(mdl, g);
    CHECK(testsupport::max_pointwise_rel_gap(closed.phi, ar) < 1e-6);
  }
}

TEST_CASE("finite differences") {
  SUBCASE("exact on linear functionals") {
    Vector w(3);
    w << 1.0, -2.0, 0.5;
    auto f = [&](const Vector& x) { return w.dot(x); };
    Vector x0 = Vector::Zero(3), dir = Vector::Zero(3);
    dir(1) = 1.0;
    CHECK(finite_diff_directional(f, x0, dir, 1e-5) == doctest::Approx(-2.0).epsilon(1e-10));
  }
  SUBCASE("vanishes at a minimum") {
    auto f = [](const Vector& x) { return x.squaredNorm(); };
    Vector x0 = Vector::Zero(2), dir = Vector::Ones(2);
    CHECK(std::abs(finite_diff_directional(f, x0, dir, 1e-6)) < 1e-9);
  }
  SUBCASE("second order accuracy on a smooth objective") {
    // halving h divides the error by about four until the rounding floor
    CircleGrid g(512);
    FilterBank bk = toeplitz_bank(3);
    SpectralDensity psi = constant_density(1.0, 1, g);
    Matrix h = Matrix::Zero(1, 3);
    h << 1.5, 0.4, 0.1;
    FeasibleBasis basis = feasible_basis(bk);
    auto f = [&](const Vector& c) {
      const Matrix x = detail::coords_to_matrix(c, basis.basis_X, 3, 1);
      return objective_J(DualVariable{x, Vector()}, h, psi, bk, g);
    };
    Vector c0 = Vector::Zero(basis.d);
    c0(0) = 0.05;
    Vector dir = Vector::Ones(basis.d).normalized();
    Gradient grad = gradient_J(
        DualVariable{detail::coords_to_matrix(c0, basis.basis_X, 3, 1), Vector()}, h, psi, bk,
        g, basis);
    const double exact = grad.coords.dot(dir);
    const double e1 = std::abs(finite_diff_directional(f, c0, dir, 2e-2) - exact);
    const double e2 = std::abs(finite_diff_directional(f, c0, dir, 1e-2) - exact);
    REQUIRE(e1 > 1e-10);  // above the rounding floor, so the ratio is meaningful
    CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.5));
  }
}

TEST_CASE("moment residual oracle") {
  CircleGrid g(1024);
  Rng rng(9);
  FilterBank bk = testsupport::random_bank(rng, 4, 2);
  SpectralDensity phi = testsupport::random_coercive_density(rng, 2, g, 2, 0.4, 2.0);
  StateCovariance cov(apply_gamma(phi.samples, bk, g));

  CHECK(moment_residual(phi, cov, bk, g) < 1e-12);

  // doubling the density makes the relative residual exactly one
  std::vector<CMatrix> dd(g.size());
  for (int j = 0; j < g.size(); ++j) dd[j] = 2.0 * phi.samples.values[j];
  SpectralDensity twice = make_density(GridHermitianFunction(g, dd));
  CHECK(moment_residual(twice, cov, bk, g) == doctest::Approx(1.0).epsilon(1e-10));
}
