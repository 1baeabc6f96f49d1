#pragma once
// Closed-form mode analytics for noisy gradient ascent on a quadratic peak.
//
// With J(theta) = 1 - theta' C theta / 2 and the update
// theta' = (I - alpha C) theta + alpha (sigma / sqrt(N)) eps, each
// eigencoordinate is an independent AR(1) process
//   x_{t+1} = a x_t + b xi,   a = 1 - alpha lambda,   b = alpha sigma/sqrt(N)
// with
//   mean      mu_t = a^t mu_0
//   variance  v_t  = a^{2t} v_0 + b^2 (1 - a^{2t}) / (1 - a^2)
//   v_inf          = alpha sigma^2 / (N lambda (2 - alpha lambda))
// and expected reward E[J_t] = 1 - sum_{lambda>0} lambda (mu_t^2 + v_t) / 2.
// The terminal plateau obeys
//   1 - J_inf = (alpha sigma^2 / 2N) sum_{lambda>0} 1 / (2 - alpha lambda)
//             = (alpha / 4) d_eff(alpha) kappa,   kappa = sigma^2 / N,
//   d_eff(alpha) = 2 sum_{lambda>0} 1 / (2 - alpha lambda).
// Transients decompose as E[J_t] - J_inf = sum_i A_i exp(-gamma_i t) with
//   A_i = -lambda_i (x_{i,0}^2 + v_{i,0} - v_{i,inf}) / 2
//   gamma_i = -2 log |1 - alpha lambda_i|,
// so mixed-sign amplitudes produce a rise-then-decay with an interior peak
// where sum_i gamma_i A_i exp(-gamma_i t) = 0. Flat modes (lambda = 0) feel
// pure noise and random-walk; they carry no reward weight.

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "varcurv/landscape.hpp"
#include "varcurv/stats.hpp"

namespace varcurv {

struct StabilityReport {
  bool stable = true;
  double max_contraction = 0.0;        // max over modes of |1 - alpha lambda|
  std::vector<int> offending_modes;    // indices with |1 - alpha lambda| >= 1
};

class StabilityError : public std::runtime_error {
 public:
  StabilityError(std::string message, StabilityReport report)
      : std::runtime_error(std::move(message)), report(std::move(report)) {}
  StabilityReport report;
};

inline void check_ou_parameters(double step_size, double sigma,
                                int population) {
  if (!(step_size > 0.0) || !std::isfinite(step_size))
    throw std::invalid_argument("ou: step size must be > 0");
  if (!(sigma >= 0.0) || !std::isfinite(sigma))
    throw std::invalid_argument("ou: sigma must be >= 0");
  if (population < 1)
    throw std::invalid_argument("ou: population must be >= 1");
}

// Stability of the deterministic part: |1 - alpha lambda| < 1 on every
// curved mode, i.e. alpha < 2 / lambda_max.
inline StabilityReport check_stability(const Spectrum& spectrum,
                                       double step_size) {
  StabilityReport report;
  for (int i = 0; i < spectrum.dimension(); ++i) {
    if (spectrum[i] <= 0.0) continue;  // flat modes are neutral
    const double a = std::abs(1.0 - step_size * spectrum[i]);
    report.max_contraction = std::max(report.max_contraction, a);
    if (a >= 1.0) {
      report.stable = false;
      report.offending_modes.push_back(i);
    }
  }
  return report;
}

struct ModeAmplitudes {
  std::vector<double> amplitudes;           // A_i, zero on flat modes
  std::vector<double> rates;                // gamma_i, zero on flat modes
  std::vector<double> stationary_variance;  // v_inf, NaN on flat modes
  bool mixed_signs = false;
};

inline ModeAmplitudes amplitudes(const Spectrum& spectrum,
                                 const Eigen::VectorXd& x0, double step_size,
                                 double sigma, int population,
                                 const Eigen::VectorXd* v0 = nullptr) {
  check_ou_parameters(step_size, sigma, population);
  const int d = spectrum.dimension();
  if (x0.size() != d)
    throw std::invalid_argument("amplitudes: x0 dimension mismatch");
  if (v0 != nullptr && v0->size() != d)
    throw std::invalid_argument("amplitudes: v0 dimension mismatch");
  ModeAmplitudes out;
  out.amplitudes.resize(static_cast<size_t>(d));
  out.rates.resize(static_cast<size_t>(d));
  out.stationary_variance.resize(static_cast<size_t>(d));
  bool any_pos = false, any_neg = false;
  for (int i = 0; i < d; ++i) {
    const double lam = spectrum[i];
    const size_t k = static_cast<size_t>(i);
    if (lam <= 0.0) {
      out.amplitudes[k] = 0.0;
      out.rates[k] = 0.0;
      out.stationary_variance[k] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    const double a = 1.0 - step_size * lam;
    const double vinf = step_size * sigma * sigma /
                        (population * lam * (2.0 - step_size * lam));
    const double var0 = v0 ? (*v0)[i] : 0.0;
    out.stationary_variance[k] = vinf;
    out.amplitudes[k] = -0.5 * lam * (x0[i] * x0[i] + var0 - vinf);
    out.rates[k] = -2.0 * std::log(std::abs(a));
    if (out.amplitudes[k] > 0.0) any_pos = true;
    if (out.amplitudes[k] < 0.0) any_neg = true;
  }
  out.mixed_signs = any_pos && any_neg;
  return out;
}

struct OUPrediction {
  std::vector<double> expected_reward;  // E[J_t], length horizon + 1
  double terminal_plateau = 1.0;        // J_inf
  bool stable = true;
  StabilityReport stability;
  ModeAmplitudes modes;
  // Per-mode series, stored only on request: (horizon + 1) x D.
  bool has_mode_series = false;
  Eigen::MatrixXd mode_means;
  Eigen::MatrixXd mode_variances;
};

// 1 - J_inf = (alpha sigma^2 / 2N) sum_{lambda>0} 1 / (2 - alpha lambda),
// compensated so the sum stays exact for very wide spectra.
inline double terminal_plateau(const Spectrum& spectrum, double step_size,
                               double sigma, int population) {
  check_ou_parameters(step_size, sigma, population);
  const StabilityReport report = check_stability(spectrum, step_size);
  if (!report.stable) {
    throw StabilityError(
        "terminal_plateau: unstable step size, max contraction " +
            std::to_string(report.max_contraction),
        report);
  }
  KahanSum s;
  for (int i = 0; i < spectrum.dimension(); ++i) {
    if (spectrum[i] <= 0.0) continue;
    s.add(1.0 / (2.0 - step_size * spectrum[i]));
  }
  const double deficit = 0.5 * step_size * sigma * sigma /
                         static_cast<double>(population) * s.value();
  return 1.0 - deficit;
}

inline OUPrediction ou_trajectory(const Spectrum& spectrum,
                                  const Eigen::VectorXd& x0, double step_size,
                                  double sigma, int population, int horizon,
                                  bool store_modes = false,
                                  const Eigen::VectorXd* v0 = nullptr) {
  check_ou_parameters(step_size, sigma, population);
  if (horizon < 0) throw std::invalid_argument("ou_trajectory: horizon < 0");
  const int d = spectrum.dimension();
  if (x0.size() != d)
    throw std::invalid_argument("ou_trajectory: x0 dimension mismatch");
  if (v0 != nullptr && v0->size() != d)
    throw std::invalid_argument("ou_trajectory: v0 dimension mismatch");

  OUPrediction pred;
  pred.stability = check_stability(spectrum, step_size);
  pred.stable = pred.stability.stable;
  pred.modes = amplitudes(spectrum, x0, step_size, sigma, population, v0);
  if (pred.stable) {
    pred.terminal_plateau =
        terminal_plateau(spectrum, step_size, sigma, population);
  } else {
    pred.terminal_plateau = std::numeric_limits<double>::quiet_NaN();
  }

  const double b2 = step_size * step_size * sigma * sigma /
                    static_cast<double>(population);
  pred.expected_reward.resize(static_cast<size_t>(horizon) + 1);
  if (store_modes) {
    pred.has_mode_series = true;
    pred.mode_means.resize(horizon + 1, d);
    pred.mode_variances.resize(horizon + 1, d);
  }

  // Per-mode closed forms evaluated directly at each t; mu_t and v_t cost
  // O(1) per mode, so the full curve is O(D T).
  for (int t = 0; t <= horizon; ++t) {
    KahanSum deficit;
    for (int i = 0; i < d; ++i) {
      const double lam = spectrum[i];
      const double a = 1.0 - step_size * lam;
      const double a2t = std::pow(a * a, t);
      const double mu = std::pow(a, t) * x0[i];
      const double var0 = v0 ? (*v0)[i] : 0.0;
      double var;
      if (lam <= 0.0) {
        var = var0 + b2 * static_cast<double>(t);  // random walk
      } else {
        const double vinf =
            pred.modes.stationary_variance[static_cast<size_t>(i)];
        var = a2t * var0 + vinf * (1.0 - a2t);
      }
      if (store_modes) {
        pred.mode_means(t, i) = mu;
        pred.mode_variances(t, i) = var;
      }
      if (lam > 0.0) deficit.add(lam * (mu * mu + var));
    }
    pred.expected_reward[static_cast<size_t>(t)] = 1.0 - 0.5 * deficit.value();
  }
  return pred;
}

// Interior peak of the two-mode mixture A_hi e^{-g_hi t} + A_lo e^{-g_lo t}:
// t* = log(g_hi |A_hi| / (g_lo A_lo)) / (g_hi - g_lo), defined when
// A_hi < 0 < A_lo and the log argument exceeds 1.
inline std::optional<double> peak_time_two_mode(double lambda_hi,
                                                double lambda_lo,
                                                double amp_hi, double amp_lo,
                                                double step_size) {
  if (!(lambda_hi > lambda_lo) || !(lambda_lo > 0.0))
    throw std::invalid_argument(
        "peak_time_two_mode: need lambda_hi > lambda_lo > 0");
  if (!(step_size > 0.0) || !(step_size * lambda_hi < 2.0))
    throw std::invalid_argument("peak_time_two_mode: unstable step size");
  if (!(amp_hi < 0.0 && amp_lo > 0.0)) return std::nullopt;
  const double g_hi = -2.0 * std::log(std::abs(1.0 - step_size * lambda_hi));
  const double g_lo = -2.0 * std::log(std::abs(1.0 - step_size * lambda_lo));
  if (!(g_hi > g_lo)) return std::nullopt;
  const double arg = g_hi * std::abs(amp_hi) / (g_lo * amp_lo);
  if (!(arg > 1.0)) return std::nullopt;  // boundary or no interior peak
  return std::log(arg) / (g_hi - g_lo);
}

struct PeakSearch {
  std::optional<double> time;  // earliest interior maximum
  int maxima_count = 0;
};

// General mixture: scans s(t) = sum_i gamma_i A_i e^{-gamma_i t} (the
// negated reward slope) for sign changes from - to + on (0, t_max] and
// bisects each crossing. Default search window is 10 / gamma_min.
inline PeakSearch peak_time_general(const ModeAmplitudes& modes,
                                    double t_max = 0.0) {
  PeakSearch result;
  if (!modes.mixed_signs) return result;
  std::vector<double> g, a;
  double g_min = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < modes.amplitudes.size(); ++i) {
    if (modes.amplitudes[i] == 0.0) continue;
    if (modes.rates[i] <= 0.0) continue;
    g.push_back(modes.rates[i]);
    a.push_back(modes.amplitudes[i]);
    g_min = std::min(g_min, modes.rates[i]);
  }
  if (g.empty()) return result;
  if (t_max <= 0.0) t_max = 10.0 / g_min;

  const auto slope = [&](double t) {
    KahanSum s;
    for (size_t i = 0; i < g.size(); ++i)
      s.add(g[i] * a[i] * std::exp(-g[i] * t));
    return s.value();
  };

  const int grid = 20000;
  double prev_t = t_max / grid * 1e-3;  // just inside (0, t_max]
  double prev_s = slope(prev_t);
  for (int k = 1; k <= grid; ++k) {
    const double t = t_max * static_cast<double>(k) / grid;
    const double s = slope(t);
    if (prev_s < 0.0 && s >= 0.0) {
      double lo = prev_t, hi = t;
      for (int it = 0; it < 100 && hi - lo > 1e-10; ++it) {
        const double mid = 0.5 * (lo + hi);
        (slope(mid) < 0.0 ? lo : hi) = mid;
      }
      const double root = 0.5 * (lo + hi);
      ++result.maxima_count;
      if (!result.time) result.time = root;
    }
    prev_t = t;
    prev_s = s;
  }
  return result;
}

// d_eff(alpha) = 2 sum_{lambda>0} 1 / (2 - alpha lambda); for alpha -> 0
// this counts the curved modes, i.e. rank(C).
inline double effective_dimension(const Spectrum& spectrum, double step_size) {
  if (!(step_size >= 0.0) || !std::isfinite(step_size))
    throw std::invalid_argument("effective_dimension: step size must be >= 0");
  if (spectrum.max_eigenvalue() > 0.0 &&
      step_size >= 2.0 / spectrum.max_eigenvalue())
    throw std::invalid_argument(
        "effective_dimension: step size outside stability range");
  KahanSum s;
  for (int i = 0; i < spectrum.dimension(); ++i) {
    if (spectrum[i] <= 0.0) continue;
    s.add(2.0 / (2.0 - step_size * spectrum[i]));
  }
  return s.value();
}

// (kappa, 1 - J_inf) points for a fixed alpha, sigma across populations.
// Exactly collinear through the origin with slope (alpha / 4) d_eff(alpha).
inline std::vector<std::pair<double, double>> plateau_slope_curve(
    const Spectrum& spectrum, double step_size, double sigma,
    const std::vector<int>& populations) {
  std::vector<std::pair<double, double>> points;
  points.reserve(populations.size());
  for (int n : populations) {
    const double plateau = terminal_plateau(spectrum, step_size, sigma, n);
    points.emplace_back(sigma * sigma / n, 1.0 - plateau);
  }
  return points;
}

}  // namespace varcurv
