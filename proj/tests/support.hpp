#pragma once

// Shared oracles and statistical helpers for the test suite. Everything here
// is an independent implementation: tests compare library results against
// these, never against the library's own formulas.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "varcurv/stochastics.hpp"

namespace test_support {

inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

// Two-sample Kolmogorov-Smirnov statistic.
inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  double d = 0.0;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < n && j < m) {
    const double x = std::min(a[i], b[j]);
    while (i < n && a[i] <= x) ++i;
    while (j < m && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / n -
                             static_cast<double>(j) / m));
  }
  return d;
}

// Critical value at significance 0.01: reject if D exceeds this.
inline double ks_two_sample_critical(std::size_t n, std::size_t m) {
  return 1.628 * std::sqrt(static_cast<double>(n + m) /
                           (static_cast<double>(n) * static_cast<double>(m)));
}

// One-sample KS against a continuous CDF; critical value 1.628/sqrt(n) at 1%.
inline double ks_one_sample(std::vector<double> xs,
                            const std::function<double(double)>& cdf) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  double d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = cdf(xs[i]);
    d = std::max(d, std::abs(f - static_cast<double>(i) / n));
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
  }
  return d;
}

inline double ks_one_sample_critical(std::size_t n) {
  return 1.628 / std::sqrt(static_cast<double>(n));
}

// Haar-ish random orthogonal matrix: QR of a Gaussian matrix with the sign
// of diag(R) folded into Q.
inline Eigen::MatrixXd random_orthogonal(int dim, varcurv::RandomStream& rng) {
  Eigen::MatrixXd g(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) g(i, j) = rng.gaussian();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < dim; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

// Random symmetric PSD matrix with eigenvalues uniform in [lo, hi].
inline Eigen::MatrixXd random_spd(int dim, varcurv::RandomStream& rng,
                                  double lo, double hi) {
  const Eigen::MatrixXd q = random_orthogonal(dim, rng);
  Eigen::VectorXd ev(dim);
  for (int i = 0; i < dim; ++i) ev(i) = lo + (hi - lo) * rng.uniform();
  return q * ev.asDiagonal() * q.transpose();
}

// Random symmetric matrix with entries from N(0, scale^2), symmetrized.
inline Eigen::MatrixXd random_symmetric(int dim, varcurv::RandomStream& rng,
                                        double scale = 1.0) {
  Eigen::MatrixXd a(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) a(i, j) = scale * rng.gaussian();
  return 0.5 * (a + a.transpose()).eval();
}

// Dense oracle for f(A) applied as a quadratic form: z' f(A) z.
inline double dense_quadratic_form(const Eigen::MatrixXd& a,
                                   const std::function<double(double)>& f,
                                   const Eigen::VectorXd& z) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  const Eigen::VectorXd lam = es.eigenvalues();
  const Eigen::VectorXd w = es.eigenvectors().transpose() * z;
  double total = 0.0;
  for (int i = 0; i < lam.size(); ++i) total += f(lam(i)) * w(i) * w(i);
  return total;
}

inline double dense_trace_function(const Eigen::MatrixXd& a,
                                   const std::function<double(double)>& f) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  double total = 0.0;
  for (int i = 0; i < es.eigenvalues().size(); ++i)
    total += f(es.eigenvalues()(i));
  return total;
}

// Scalar AR(1) x' = a x + noise_sd xi, returning the long-run mean of x^2.
// Uses std::mt19937_64 so the oracle does not share the library's generator.
inline double ar1_second_moment(double a, double noise_sd, long steps,
                                std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  double x = 0.0;
  // Discard a warm-up stretch so the average starts near stationarity.
  const long warmup = steps / 10;
  for (long t = 0; t < warmup; ++t) x = a * x + noise_sd * normal(rng);
  long double acc = 0.0L;
  for (long t = 0; t < steps; ++t) {
    x = a * x + noise_sd * normal(rng);
    acc += static_cast<long double>(x) * x;
  }
  return static_cast<double>(acc / steps);
}

// Fixed-point iteration V <- M V M' + Q, the independent discrete-Lyapunov
// oracle. Converges for spectral radius of M below one.
inline Eigen::MatrixXd lyapunov_fixed_point(const Eigen::MatrixXd& m,
                                            const Eigen::MatrixXd& q,
                                            int iterations = 20000,
                                            double tol = 1e-14) {
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(m.rows(), m.cols());
  for (int k = 0; k < iterations; ++k) {
    Eigen::MatrixXd next = m * v * m.transpose() + q;
    const double delta = (next - v).cwiseAbs().maxCoeff();
    v = std::move(next);
    if (delta < tol * std::max(1.0, v.cwiseAbs().maxCoeff())) break;
  }
  return v;
}

}  // namespace test_support
