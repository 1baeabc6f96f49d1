#pragma once
// Synthetic objective landscapes.
//
// Quadratic peaks J(theta) = peak - (theta - c)' Q L Q' (theta - c) / 2 with
// a nonnegative eigenvalue list L and optional orthonormal basis Q, and a
// one-dimensional quartic double well L(x) = k/4 (x^2 - a^2)^2 optionally
// embedded alongside independent quadratic coordinates. Rewards maximize;
// the double well reports its loss and exposes reward = -loss for ascent.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "varcurv/stats.hpp"
#include "varcurv/stochastics.hpp"

namespace varcurv {

// Nonnegative curvature eigenvalues, stored descending.
class Spectrum {
 public:
  Spectrum() = default;
  explicit Spectrum(std::vector<double> eigenvalues)
      : values_(std::move(eigenvalues)) {
    for (double v : values_) {
      if (!std::isfinite(v) || v < 0.0) {
        throw std::invalid_argument(
            "Spectrum: eigenvalues must be finite and >= 0, got " +
            std::to_string(v));
      }
    }
    std::sort(values_.begin(), values_.end(), std::greater<double>());
  }

  int dimension() const { return static_cast<int>(values_.size()); }
  const std::vector<double>& values() const { return values_; }
  double operator[](int i) const { return values_.at(static_cast<size_t>(i)); }

  int rank() const {
    int r = 0;
    for (double v : values_)
      if (v > 0.0) ++r;
    return r;
  }

  double max_eigenvalue() const { return values_.empty() ? 0.0 : values_[0]; }

  double trace() const {
    KahanSum s;
    for (double v : values_) s.add(v);
    return s.value();
  }

 private:
  std::vector<double> values_;
};

// Black-box view of a landscape: evaluations, optionally with additive
// Gaussian observation noise. The clean value stays accessible so runs can
// log noiseless rewards.
class Objective {
 public:
  Objective(int dimension, std::function<double(const Eigen::VectorXd&)> fn,
            double noise_sd = 0.0)
      : dimension_(dimension), fn_(std::move(fn)), noise_sd_(noise_sd) {
    if (dimension_ <= 0)
      throw std::invalid_argument("Objective: dimension must be positive");
    if (!(noise_sd_ >= 0.0) || !std::isfinite(noise_sd_))
      throw std::invalid_argument("Objective: noise_sd must be finite, >= 0");
    if (!fn_) throw std::invalid_argument("Objective: empty function");
  }

  int dimension() const { return dimension_; }
  double noise_sd() const { return noise_sd_; }
  bool has_noise() const { return noise_sd_ > 0.0; }

  void check_dimension(const Eigen::VectorXd& theta) const {
    if (theta.size() != dimension_) {
      throw std::invalid_argument(
          "Objective: parameter dimension " + std::to_string(theta.size()) +
          " does not match objective dimension " + std::to_string(dimension_));
    }
  }

  // Noiseless value.
  double value(const Eigen::VectorXd& theta) const {
    check_dimension(theta);
    return fn_(theta);
  }

  // Value as the optimizer sees it. A stream is required when noise is on.
  double evaluate(const Eigen::VectorXd& theta,
                  RandomStream* stream = nullptr) const {
    const double clean = value(theta);
    if (noise_sd_ == 0.0) return clean;
    if (stream == nullptr) {
      throw std::invalid_argument(
          "Objective: noisy evaluation requires a random stream");
    }
    return clean + noise_sd_ * stream->gaussian();
  }

 private:
  int dimension_;
  std::function<double(const Eigen::VectorXd&)> fn_;
  double noise_sd_;
};

// Mean of group_size evaluations; divides observation-noise variance by the
// group size. A single clean call suffices when the objective is noiseless.
inline double evaluate_group(const Objective& objective,
                             const Eigen::VectorXd& theta, int group_size,
                             RandomStream* stream = nullptr) {
  if (group_size <= 0)
    throw std::invalid_argument("evaluate_group: group size must be positive");
  if (!objective.has_noise()) return objective.value(theta);
  KahanSum s;
  for (int g = 0; g < group_size; ++g)
    s.add(objective.evaluate(theta, stream));
  return s.value() / static_cast<double>(group_size);
}

class QuadraticLandscape {
 public:
  QuadraticLandscape(Spectrum spectrum, double peak = 1.0,
                     std::optional<Eigen::VectorXd> offset = std::nullopt,
                     std::optional<Eigen::MatrixXd> basis = std::nullopt)
      : spectrum_(std::move(spectrum)), peak_(peak) {
    const int d = spectrum_.dimension();
    if (d <= 0)
      throw std::invalid_argument("QuadraticLandscape: empty spectrum");
    if (!std::isfinite(peak_))
      throw std::invalid_argument("QuadraticLandscape: peak must be finite");
    offset_ = offset ? std::move(*offset) : Eigen::VectorXd::Zero(d).eval();
    if (offset_.size() != d)
      throw std::invalid_argument("QuadraticLandscape: offset dimension");
    if (basis) {
      if (basis->rows() != d || basis->cols() != d)
        throw std::invalid_argument("QuadraticLandscape: basis must be DxD");
      const double defect =
          (basis->transpose() * (*basis) - Eigen::MatrixXd::Identity(d, d))
              .cwiseAbs()
              .maxCoeff();
      if (defect > 1e-10) {
        throw std::invalid_argument(
            "QuadraticLandscape: basis not orthonormal, defect " +
            std::to_string(defect));
      }
      basis_ = std::move(*basis);
    }
  }

  int dimension() const { return spectrum_.dimension(); }
  const Spectrum& spectrum() const { return spectrum_; }
  double peak() const { return peak_; }
  const Eigen::VectorXd& offset() const { return offset_; }
  bool has_basis() const { return basis_.has_value(); }

  // Displacement expressed in the eigenbasis.
  Eigen::VectorXd to_modes(const Eigen::VectorXd& theta) const {
    Eigen::VectorXd d = theta - offset_;
    return basis_ ? (basis_->transpose() * d).eval() : d;
  }

  double value(const Eigen::VectorXd& theta) const {
    if (theta.size() != dimension())
      throw std::invalid_argument("QuadraticLandscape: parameter dimension");
    const Eigen::VectorXd y = to_modes(theta);
    KahanSum s;
    for (int i = 0; i < y.size(); ++i)
      s.add(spectrum_[i] * y[i] * y[i]);
    return peak_ - 0.5 * s.value();
  }

  Eigen::VectorXd gradient(const Eigen::VectorXd& theta) const {
    if (theta.size() != dimension())
      throw std::invalid_argument("QuadraticLandscape: parameter dimension");
    Eigen::VectorXd y = to_modes(theta);
    for (int i = 0; i < y.size(); ++i) y[i] *= -spectrum_[i];
    return basis_ ? ((*basis_) * y).eval() : y;
  }

  Eigen::MatrixXd curvature_matrix() const {
    Eigen::VectorXd lam(dimension());
    for (int i = 0; i < dimension(); ++i) lam[i] = spectrum_[i];
    if (!basis_) return lam.asDiagonal();
    return (*basis_) * lam.asDiagonal() * basis_->transpose();
  }

  Objective objective(double noise_sd = 0.0) const {
    QuadraticLandscape copy = *this;
    return Objective(
        dimension(),
        [copy](const Eigen::VectorXd& theta) { return copy.value(theta); },
        noise_sd);
  }

 private:
  Spectrum spectrum_;
  double peak_;
  Eigen::VectorXd offset_;
  std::optional<Eigen::MatrixXd> basis_;
};

// Two curvature blocks: stiff_count eigenvalues at lambda_hi, the rest at
// lambda_lo.
struct TwoBlockSpec {
  int dimension = 0;
  int stiff_count = 0;
  double lambda_hi = 0.0;
  double lambda_lo = 0.0;
};

inline QuadraticLandscape make_two_block(const TwoBlockSpec& spec) {
  if (spec.dimension <= 0)
    throw std::invalid_argument("make_two_block: dimension must be positive");
  if (spec.stiff_count < 1 || spec.stiff_count > spec.dimension)
    throw std::invalid_argument(
        "make_two_block: stiff_count must lie in [1, dimension]");
  if (!(spec.lambda_hi > spec.lambda_lo) || !(spec.lambda_lo > 0.0))
    throw std::invalid_argument(
        "make_two_block: need lambda_hi > lambda_lo > 0");
  std::vector<double> values(static_cast<size_t>(spec.dimension),
                             spec.lambda_lo);
  std::fill(values.begin(), values.begin() + spec.stiff_count, spec.lambda_hi);
  return QuadraticLandscape(Spectrum(std::move(values)));
}

// Quartic double well on coordinate 0, independent quadratic curvature on
// any remaining coordinates. Minima at +-a, saddle at 0, barrier k a^4 / 4.
class DoubleWellLandscape {
 public:
  DoubleWellLandscape(double quartic_coeff, double half_separation,
                      std::vector<double> extra_curvature = {})
      : quartic_coeff_(quartic_coeff),
        half_separation_(half_separation),
        extra_curvature_(std::move(extra_curvature)) {
    if (!(quartic_coeff_ > 0.0) || !std::isfinite(quartic_coeff_))
      throw std::invalid_argument(
          "DoubleWellLandscape: quartic coefficient must be > 0");
    if (!(half_separation_ > 0.0) || !std::isfinite(half_separation_))
      throw std::invalid_argument(
          "DoubleWellLandscape: half separation must be > 0");
    for (double c : extra_curvature_) {
      if (!std::isfinite(c) || c < 0.0)
        throw std::invalid_argument(
            "DoubleWellLandscape: extra curvature must be finite and >= 0");
    }
  }

  int dimension() const {
    return 1 + static_cast<int>(extra_curvature_.size());
  }
  double quartic_coeff() const { return quartic_coeff_; }
  double half_separation() const { return half_separation_; }
  const std::vector<double>& extra_curvature() const {
    return extra_curvature_;
  }

  double loss(const Eigen::VectorXd& theta) const {
    if (theta.size() != dimension())
      throw std::invalid_argument("DoubleWellLandscape: parameter dimension");
    const double x = theta[0];
    const double q = x * x - half_separation_ * half_separation_;
    KahanSum s;
    s.add(0.25 * quartic_coeff_ * q * q);
    for (size_t i = 0; i < extra_curvature_.size(); ++i) {
      const double y = theta[static_cast<int>(i) + 1];
      s.add(0.5 * extra_curvature_[i] * y * y);
    }
    return s.value();
  }

  double loss_1d(double x) const {
    const double q = x * x - half_separation_ * half_separation_;
    return 0.25 * quartic_coeff_ * q * q;
  }

  // dL/dx on the well coordinate: k x (x^2 - a^2).
  double loss_grad_1d(double x) const {
    return quartic_coeff_ * x *
           (x * x - half_separation_ * half_separation_);
  }

  double reward(const Eigen::VectorXd& theta) const { return -loss(theta); }

  Eigen::VectorXd reward_gradient(const Eigen::VectorXd& theta) const {
    if (theta.size() != dimension())
      throw std::invalid_argument("DoubleWellLandscape: parameter dimension");
    Eigen::VectorXd g(dimension());
    g[0] = -loss_grad_1d(theta[0]);
    for (size_t i = 0; i < extra_curvature_.size(); ++i) {
      const int j = static_cast<int>(i) + 1;
      g[j] = -extra_curvature_[i] * theta[j];
    }
    return g;
  }

  double barrier() const {
    const double a2 = half_separation_ * half_separation_;
    return 0.25 * quartic_coeff_ * a2 * a2;
  }
  // L''(+-a) = 2 k a^2.
  double curvature_at_minimum() const {
    return 2.0 * quartic_coeff_ * half_separation_ * half_separation_;
  }
  // L''(0) = -k a^2.
  double curvature_at_saddle() const {
    return -quartic_coeff_ * half_separation_ * half_separation_;
  }

  // Reward convention (-loss), for ascent-style optimizers.
  Objective objective(double noise_sd = 0.0) const {
    DoubleWellLandscape copy = *this;
    return Objective(
        dimension(),
        [copy](const Eigen::VectorXd& theta) { return copy.reward(theta); },
        noise_sd);
  }

 private:
  double quartic_coeff_;
  double half_separation_;
  std::vector<double> extra_curvature_;
};

inline double evaluate_quadratic(const QuadraticLandscape& landscape,
                                 const Eigen::VectorXd& theta) {
  return landscape.value(theta);
}

// Loss convention; simulations maximizing reward use -loss.
inline double evaluate_double_well(const DoubleWellLandscape& landscape,
                                   const Eigen::VectorXd& theta) {
  return landscape.loss(theta);
}

inline Objective constant_objective(int dimension, double value) {
  return Objective(dimension,
                   [value](const Eigen::VectorXd&) { return value; });
}

inline Objective linear_objective(const Eigen::VectorXd& slope) {
  Eigen::VectorXd v = slope;
  return Objective(static_cast<int>(v.size()),
                   [v](const Eigen::VectorXd& theta) { return v.dot(theta); });
}

}  // namespace varcurv
