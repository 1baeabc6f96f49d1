#pragma once
// Stationary covariance of the linearized noisy update
//   x_{t+1} = (I - alpha H) x_t + alpha eta_t,   Cov(eta) = S,
// around a maximizer with positive semidefinite curvature H. The discrete
// stationary covariance solves V = (I - alpha H) V (I - alpha H)' +
// alpha^2 S; for small alpha it approaches the continuous-time solution of
// H V + V H' = alpha S. Both are solved exactly in the eigenbasis of H:
//   discrete    Vt_ij = alpha^2 St_ij / (1 - (1 - a l_i)(1 - a l_j))
//   continuous  Vt_ij = alpha  St_ij / (l_i + l_j).
// The stationary performance gap is J(peak) - E[J] ~= tr(H V) / 2; when H
// and S commute the continuous gap collapses to alpha tr(S) / 4.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "varcurv/ou.hpp"

namespace varcurv {

class LinearizedSystem {
 public:
  LinearizedSystem(Eigen::MatrixXd curvature, Eigen::MatrixXd noise_covariance,
                   double step_size)
      : step_size_(step_size) {
    if (curvature.rows() != curvature.cols())
      throw std::invalid_argument("LinearizedSystem: curvature not square");
    if (noise_covariance.rows() != curvature.rows() ||
        noise_covariance.cols() != curvature.cols())
      throw std::invalid_argument(
          "LinearizedSystem: noise covariance shape mismatch");
    if (!(step_size_ > 0.0) || !std::isfinite(step_size_))
      throw std::invalid_argument("LinearizedSystem: step size must be > 0");

    const double h_asym =
        (curvature - curvature.transpose()).cwiseAbs().maxCoeff();
    if (h_asym > 1e-10)
      throw std::invalid_argument(
          "LinearizedSystem: curvature asymmetry " + std::to_string(h_asym));
    const double s_asym =
        (noise_covariance - noise_covariance.transpose()).cwiseAbs().maxCoeff();
    if (s_asym > 1e-10)
      throw std::invalid_argument(
          "LinearizedSystem: noise covariance asymmetry " +
          std::to_string(s_asym));

    curvature_ = 0.5 * (curvature + curvature.transpose());
    noise_covariance_ = 0.5 * (noise_covariance + noise_covariance.transpose());

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> hs(curvature_);
    if (hs.info() != Eigen::Success)
      throw std::runtime_error("LinearizedSystem: eigendecomposition failed");
    eigenvalues_ = hs.eigenvalues();
    eigenvectors_ = hs.eigenvectors();
    const double scale = std::max(1.0, eigenvalues_.cwiseAbs().maxCoeff());
    if (eigenvalues_.minCoeff() < -1e-10 * scale)
      throw std::invalid_argument(
          "LinearizedSystem: curvature not positive semidefinite, min "
          "eigenvalue " +
          std::to_string(eigenvalues_.minCoeff()));

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ss(noise_covariance_);
    if (ss.info() != Eigen::Success)
      throw std::runtime_error("LinearizedSystem: eigendecomposition failed");
    const double nscale =
        std::max(1.0, ss.eigenvalues().cwiseAbs().maxCoeff());
    if (ss.eigenvalues().minCoeff() < -1e-10 * nscale)
      throw std::invalid_argument(
          "LinearizedSystem: noise covariance not positive semidefinite");
  }

  int dimension() const { return static_cast<int>(curvature_.rows()); }
  const Eigen::MatrixXd& curvature() const { return curvature_; }
  const Eigen::MatrixXd& noise_covariance() const { return noise_covariance_; }
  double step_size() const { return step_size_; }
  const Eigen::VectorXd& curvature_eigenvalues() const { return eigenvalues_; }
  const Eigen::MatrixXd& curvature_eigenvectors() const {
    return eigenvectors_;
  }

 private:
  Eigen::MatrixXd curvature_;
  Eigen::MatrixXd noise_covariance_;
  double step_size_;
  Eigen::VectorXd eigenvalues_;
  Eigen::MatrixXd eigenvectors_;
};

namespace detail {

inline void check_lyapunov_residual(const std::string& what, double residual,
                                    double scale) {
  if (!(residual <= 1e-10 * std::max(scale, 1e-300))) {
    throw std::runtime_error(what + ": residual " + std::to_string(residual) +
                             " exceeds tolerance");
  }
}

}  // namespace detail

// Exact stationary covariance of the discrete recursion. Requires strict
// contraction on every mode: |1 - alpha lambda| < 1, which rules out both
// unstable modes and curvature null modes.
inline Eigen::MatrixXd solve_discrete_lyapunov(const LinearizedSystem& sys) {
  const int d = sys.dimension();
  const double alpha = sys.step_size();
  const Eigen::VectorXd& lam = sys.curvature_eigenvalues();

  StabilityReport report;
  report.stable = true;
  for (int i = 0; i < d; ++i) {
    const double a = std::abs(1.0 - alpha * lam[i]);
    report.max_contraction = std::max(report.max_contraction, a);
    if (a >= 1.0) {
      report.stable = false;
      report.offending_modes.push_back(i);
    }
  }
  if (!report.stable) {
    throw StabilityError(
        "solve_discrete_lyapunov: |1 - alpha lambda| >= 1 on " +
            std::to_string(report.offending_modes.size()) +
            " modes (spectral radius " +
            std::to_string(report.max_contraction) + ")",
        report);
  }

  const Eigen::MatrixXd& u = sys.curvature_eigenvectors();
  const Eigen::MatrixXd st =
      u.transpose() * sys.noise_covariance() * u;
  Eigen::MatrixXd vt(d, d);
  for (int i = 0; i < d; ++i) {
    const double ai = 1.0 - alpha * lam[i];
    for (int j = 0; j < d; ++j) {
      const double aj = 1.0 - alpha * lam[j];
      vt(i, j) = alpha * alpha * st(i, j) / (1.0 - ai * aj);
    }
  }
  Eigen::MatrixXd v = u * vt * u.transpose();
  v = 0.5 * (v + v.transpose()).eval();

  const Eigen::MatrixXd contraction =
      Eigen::MatrixXd::Identity(d, d) - alpha * sys.curvature();
  const double residual =
      (v - contraction * v * contraction.transpose() -
       alpha * alpha * sys.noise_covariance())
          .norm();
  detail::check_lyapunov_residual(
      "solve_discrete_lyapunov",
      residual, alpha * alpha * sys.noise_covariance().norm());
  return v;
}

// Small-step limit: solves H V + V H' = alpha S, which needs H strictly
// positive definite; null modes are collected and reported.
inline Eigen::MatrixXd solve_continuous_lyapunov(const LinearizedSystem& sys) {
  const int d = sys.dimension();
  const double alpha = sys.step_size();
  const Eigen::VectorXd& lam = sys.curvature_eigenvalues();
  const double scale = std::max(lam.cwiseAbs().maxCoeff(), 1e-300);

  std::vector<int> null_modes;
  for (int i = 0; i < d; ++i)
    if (lam[i] <= 1e-12 * scale) null_modes.push_back(i);
  if (!null_modes.empty()) {
    std::string which;
    for (int i : null_modes) which += " " + std::to_string(i);
    throw std::invalid_argument(
        "solve_continuous_lyapunov: curvature is singular on modes" + which);
  }

  const Eigen::MatrixXd& u = sys.curvature_eigenvectors();
  const Eigen::MatrixXd st = u.transpose() * sys.noise_covariance() * u;
  Eigen::MatrixXd vt(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      vt(i, j) = alpha * st(i, j) / (lam[i] + lam[j]);
  Eigen::MatrixXd v = u * vt * u.transpose();
  v = 0.5 * (v + v.transpose()).eval();

  const double residual =
      (sys.curvature() * v + v * sys.curvature() -
       alpha * sys.noise_covariance())
          .norm();
  detail::check_lyapunov_residual("solve_continuous_lyapunov", residual,
                                  alpha * sys.noise_covariance().norm());
  return v;
}

// Stationary performance gap J(peak) - E[J] ~= tr(H V) / 2.
inline double stationary_gap(const LinearizedSystem& sys,
                             const Eigen::MatrixXd& covariance) {
  if (covariance.rows() != sys.dimension() ||
      covariance.cols() != sys.dimension())
    throw std::invalid_argument("stationary_gap: covariance shape mismatch");
  return 0.5 * (sys.curvature() * covariance).trace();
}

}  // namespace varcurv
