// Shared fixtures for the test binaries: a deterministic RNG, random
// well-conditioned problem instances, and a subprocess harness for the CLI.
#pragma once

#include <specmoment/specmoment.hpp>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <stdexcept>
#include <string>
#include <sys/wait.h>
#include <vector>

namespace testsupport {

using namespace specmoment;

// splitmix64; avoids any dependence on libstdc++ distribution internals so
// frozen expected values stay valid across toolchains.
struct Rng {
  std::uint64_t state;

  explicit Rng(std::uint64_t seed) : state(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform in [-1, 1]
  double uniform() { return 2.0 * uniform01() - 1.0; }

  int uniform_int(int lo, int hi) {
    const int span = hi - lo + 1;
    return lo + static_cast<int>(next_u64() % static_cast<std::uint64_t>(span));
  }

  Matrix matrix(int r, int c) {
    Matrix out(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) out(i, j) = uniform();
    return out;
  }

  Matrix symmetric(int n) {
    const Matrix raw = matrix(n, n);
    return 0.5 * (raw + raw.transpose());
  }
};

inline double spectral_norm(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

// Random stable reachable bank with spectral radius in [0.2, 0.7] and
// ||B||_2 = 1.  Draws aim for a reachability singular-value ratio of 5e-2 so
// the Newton runs stay well conditioned; single-input banks with n >= 5
// rarely reach that bar, so after the attempt budget the best-conditioned
// draw is used as long as it clears a lower floor.
inline FilterBank random_bank(Rng& rng, int n, int m) {
  double best_ratio = 0.0;
  std::optional<FilterBank> best;
  for (int attempt = 0; attempt < 256; ++attempt) {
    Matrix a = rng.matrix(n, n);
    const double sr = spectral_radius(a);
    if (sr < 1e-6) continue;
    a *= (0.2 + 0.5 * rng.uniform01()) / sr;
    Matrix b = rng.matrix(n, m);
    const double bn = spectral_norm(b);
    if (bn < 1e-6) continue;
    b /= bn;
    try {
      FilterBank bank = new_filter_bank(a, b);
      Matrix reach(n, n * m);
      Matrix pow = Matrix::Identity(n, n);
      for (int k = 0; k < n; ++k) {
        reach.block(0, k * m, n, m) = pow * b;
        pow = a * pow;
      }
      Eigen::JacobiSVD<Matrix> svd(reach);
      const auto& sv = svd.singularValues();
      const double ratio = sv(sv.size() - 1) / sv(0);
      if (ratio >= 5e-2) return bank;
      if (ratio > best_ratio) {
        best_ratio = ratio;
        best = std::move(bank);
      }
    } catch (const Error&) {
    }
  }
  if (best && best_ratio >= 1e-3) return *std::move(best);
  throw std::runtime_error("random_bank: no admissible draw in 256 attempts");
}

// Trigonometric matrix polynomial F(theta) = sum_k C_k e^{-ik theta} squared
// to F F^*, then affinely rescaled so the global eigenvalue range over the
// grid is exactly [lo, hi].  Always coercive for 0 < lo < hi.
inline SpectralDensity random_coercive_density(Rng& rng, int m, const CircleGrid& grid,
                                               int deg, double lo, double hi) {
  std::vector<Matrix> coef;
  coef.reserve(deg + 1);
  for (int k = 0; k <= deg; ++k) coef.push_back(rng.matrix(m, m));

  const int N = grid.size();
  std::vector<CMatrix> vals(N);
  double mn = std::numeric_limits<double>::infinity(), mx = -mn;
  for (int j = 0; j < N; ++j) {
    CMatrix f = CMatrix::Zero(m, m);
    for (int k = 0; k <= deg; ++k)
      f += coef[k].cast<Complex>() * std::exp(Complex(0.0, -k * grid.node(j)));
    vals[j] = f * f.adjoint();
    Eigen::SelfAdjointEigenSolver<CMatrix> eig(vals[j], Eigen::EigenvaluesOnly);
    mn = std::min(mn, eig.eigenvalues().minCoeff());
    mx = std::max(mx, eig.eigenvalues().maxCoeff());
  }
  if (mx - mn < 1e-12) return constant_density(0.5 * (lo + hi), m, grid);
  const double scale = (hi - lo) / (mx - mn);
  const CMatrix shift = (lo - scale * mn) * CMatrix::Identity(m, m);
  for (int j = 0; j < N; ++j) vals[j] = scale * vals[j] + shift;
  return make_density(GridHermitianFunction(grid, std::move(vals)));
}

// A full random instance: Sigma is the exact moment image of a coercive
// "true" density, so it is strictly feasible by construction, and the prior
// is an independent coercive density handed to the solver as samples.
struct Instance {
  FilterBank bank;
  StateCovariance cov;
  SpectralDensity phi_true;
  SpectralDensity psi;
  PriorSpec prior;
};

inline Instance make_instance(std::uint64_t seed, int grid_size = 4096) {
  Rng rng(seed * 1000003ull + 17ull);
  const int n = rng.uniform_int(2, 6);
  const int m = rng.uniform_int(1, 2);
  FilterBank bank = random_bank(rng, n, m);
  const CircleGrid grid(grid_size);
  SpectralDensity phi_true = random_coercive_density(rng, m, grid, 2, 0.25, 2.25);
  SpectralDensity psi = random_coercive_density(rng, m, grid, 1, 0.4, 2.4);
  Matrix sigma = apply_gamma(phi_true.samples, bank, grid);
  PriorSpec prior = PriorSpec::sampled(psi.samples.values);
  return Instance{std::move(bank), StateCovariance(std::move(sigma)), std::move(phi_true),
                  std::move(psi), std::move(prior)};
}

// Worked Toeplitz data: lags of (2 + 2 cos)^3 for an 8-tap filter memory.
inline Matrix sec5_sigma() {
  const double lag[8] = {20.0, 15.0, 6.0, 1.0, 0.0, 0.0, 0.0, 0.0};
  Matrix s(8, 8);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) s(i, j) = lag[std::abs(i - j)];
  return s;
}

inline std::vector<double> sec5_lags() { return {20.0, 15.0, 6.0, 1.0, 0.0, 0.0, 0.0, 0.0}; }

struct CmdResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr combined
};

inline std::string cli_path() {
  const char* p = std::getenv("SPECMOMENT_CLI");
  if (!p || !*p) throw std::runtime_error("SPECMOMENT_CLI is not set");
  return p;
}

// Runs the CLI through the shell; `args` may include env prefixes and
// redirections.  Exit code -1 means the child died on a signal.
inline CmdResult run_cli(const std::string& args) {
  const std::string cmd = cli_path() + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) throw std::runtime_error("popen failed");
  std::string out;
  char buf[4096];
  std::size_t got = 0;
  while ((got = fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, got);
  const int rc = pclose(pipe);
  CmdResult res;
  res.output = std::move(out);
  if (WIFEXITED(rc)) res.exit_code = WEXITSTATUS(rc);
  return res;
}

inline CmdResult run_shell(const std::string& cmd) {
  FILE* pipe = popen((cmd + " 2>&1").c_str(), "r");
  if (!pipe) throw std::runtime_error("popen failed");
  std::string out;
  char buf[4096];
  std::size_t got = 0;
  while ((got = fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, got);
  const int rc = pclose(pipe);
  CmdResult res;
  res.output = std::move(out);
  if (WIFEXITED(rc)) res.exit_code = WEXITSTATUS(rc);
  return res;
}

inline double max_pointwise_rel_gap(const SpectralDensity& a, const SpectralDensity& b) {
  double worst = 0.0;
  for (int j = 0; j < a.grid().size(); ++j) {
    const double gap = (a.samples.values[j] - b.samples.values[j]).norm() /
                       (1.0 + a.samples.values[j].norm());
    worst = std::max(worst, gap);
  }
  return worst;
}

}  // namespace testsupport
