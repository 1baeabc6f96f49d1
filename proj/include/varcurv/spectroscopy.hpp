#pragma once
// Local slope spectroscopy: estimate the effective curvature dimension of a
// landscape near an optimum from the noise-level dependence of stationary
// plateaus, without touching the Hessian.
//
// For each population N, probe runs of the noisy-ascent process start at the
// reference point and must both stay local (max_t |theta_t - theta*| within
// a threshold) and settle (the last two reward windows agree). Valid seeds
// average to a plateau estimate J_hat(N). Gaps against the largest-N
// reference, g(N) = J_ref - J_hat(N), are fit affinely against
// kappa = sigma^2 / N over the largest few valid N; the slope S recovers
// d_eff = (4 / alpha) S because 1 - J_inf = (alpha / 4) d_eff kappa.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "varcurv/es.hpp"
#include "varcurv/landscape.hpp"
#include "varcurv/stats.hpp"
#include "varcurv/stochastics.hpp"

namespace varcurv {

// Stationary displacement variance of one mode of curvature lambda under
// the calibrated isotropic noise. Curvature at or below zero has no
// stationary limit; those modes fall back to the unit-curvature scale so
// the locality unit stays finite.
inline double mode_stationary_variance(double curvature, double step_size,
                                       double sigma, int population) {
  const double lam = curvature > 0.0 ? curvature : 1.0;
  return step_size * sigma * sigma /
         (population * lam * std::abs(2.0 - step_size * lam));
}

// Probe dynamics: ascent on `reward` along `gradient` with the calibrated
// isotropic noise. Built from any landscape that exposes its gradient.
// `stationary_variance` reports the mean per-coordinate stationary
// displacement variance of the probe at (alpha, sigma, N); it sets the
// natural unit for the locality gate. Soft modes wander much farther than
// stiff ones, so the unit must come from the probed curvature, not from a
// fixed reference.
struct ProbeSystem {
  int dimension = 0;
  std::function<double(const Eigen::VectorXd&)> reward;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradient;
  std::function<double(double step_size, double sigma, int population)>
      stationary_variance;
};

inline ProbeSystem probe_system(const QuadraticLandscape& landscape) {
  QuadraticLandscape copy = landscape;
  return {copy.dimension(),
          [copy](const Eigen::VectorXd& x) { return copy.value(x); },
          [copy](const Eigen::VectorXd& x) { return copy.gradient(x); },
          [copy](double alpha, double sigma, int population) {
            KahanSum s;
            for (int i = 0; i < copy.dimension(); ++i)
              s.add(mode_stationary_variance(copy.spectrum()[i], alpha,
                                             sigma, population));
            return s.value() / copy.dimension();
          }};
}

inline ProbeSystem probe_system(const DoubleWellLandscape& landscape) {
  DoubleWellLandscape copy = landscape;
  return {copy.dimension(),
          [copy](const Eigen::VectorXd& x) { return copy.reward(x); },
          [copy](const Eigen::VectorXd& x) { return copy.reward_gradient(x); },
          [copy](double alpha, double sigma, int population) {
            // Linearization in one well: the well coordinate contributes
            // at curvature L''(min), the transverse coordinates at theirs.
            KahanSum s;
            s.add(mode_stationary_variance(copy.curvature_at_minimum(), alpha,
                                           sigma, population));
            for (double c : copy.extra_curvature())
              s.add(mode_stationary_variance(c, alpha, sigma, population));
            return s.value() / copy.dimension();
          }};
}

struct SpectroscopyConfig {
  double sigma = 1.0;
  std::vector<double> step_sizes;
  std::vector<int> populations;
  int horizon = 0;
  int tail_window = 0;
  int seeds = 0;
  int min_valid_seeds = 0;
  // < 0 selects the auto rule: 5 sqrt(D v_bar) with v_bar the probe's mean
  // per-coordinate stationary variance at this (alpha, sigma, N). Zero is a
  // legal degenerate gate that fails every seed.
  double locality_threshold = -1.0;
  // < 0 selects the auto rule: twice the within-window standard error of
  // the tail window mean. Zero degenerates the same way.
  double settling_tolerance = -1.0;
  int fit_points = 4;
  double min_fit_r2 = 0.9;
  double min_acceptance_rate = 0.5;

  void validate() const {
    if (!(sigma > 0.0) || !std::isfinite(sigma))
      throw std::invalid_argument("SpectroscopyConfig: sigma must be > 0");
    if (step_sizes.empty())
      throw std::invalid_argument("SpectroscopyConfig: no step sizes");
    for (double a : step_sizes)
      if (!(a > 0.0) || !std::isfinite(a))
        throw std::invalid_argument(
            "SpectroscopyConfig: step sizes must be > 0");
    if (populations.size() < 3)
      throw std::invalid_argument(
          "SpectroscopyConfig: need at least 3 populations");
    for (int n : populations)
      if (n < 1)
        throw std::invalid_argument(
            "SpectroscopyConfig: populations must be >= 1");
    if (tail_window < 1)
      throw std::invalid_argument("SpectroscopyConfig: tail_window must be >= 1");
    if (horizon < 2 * tail_window)
      throw std::invalid_argument(
          "SpectroscopyConfig: horizon must cover two tail windows");
    if (seeds < 1)
      throw std::invalid_argument("SpectroscopyConfig: seeds must be >= 1");
    if (min_valid_seeds < 1 || min_valid_seeds > seeds)
      throw std::invalid_argument(
          "SpectroscopyConfig: min_valid_seeds must lie in [1, seeds]");
    if (fit_points < 3)
      throw std::invalid_argument("SpectroscopyConfig: fit_points must be >= 3");
    if (!std::isfinite(locality_threshold) ||
        !std::isfinite(settling_tolerance))
      throw std::invalid_argument(
          "SpectroscopyConfig: thresholds must be finite");
  }
};

// Standard error of a window mean from within-window data. Rewards along
// one trajectory are autocorrelated, so the iid formula sd/sqrt(w) can be
// an order of magnitude too small; the variance of the mean needs the full
// autocovariance sum. Truncation follows the initial-positive-sequence
// rule: sums of consecutive autocovariance pairs are nonnegative for any
// reversible chain, so summation stops where the empirical pair sum first
// turns negative (noise has taken over). On iid data this reduces to the
// iid formula and on slow transients the long positive tail inflates the
// estimate rather than masking the drift.
inline double window_mean_standard_error(const std::vector<double>& window) {
  const int n = static_cast<int>(window.size());
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  KahanSum total;
  for (double x : window) total.add(x);
  const double mu = total.value() / n;
  const int max_lag = n / 2;
  std::vector<double> gamma(static_cast<size_t>(max_lag) + 1, 0.0);
  for (int k = 0; k <= max_lag; ++k) {
    KahanSum s;
    for (int t = 0; t + k < n; ++t)
      s.add((window[static_cast<size_t>(t)] - mu) *
            (window[static_cast<size_t>(t + k)] - mu));
    gamma[static_cast<size_t>(k)] = s.value() / n;
  }
  double variance_sum = gamma[0];
  for (int m = 0;; ++m) {
    const int k1 = 2 * m + 1;
    const int k2 = 2 * m + 2;
    if (k2 > max_lag) break;
    const double pair = gamma[static_cast<size_t>(k1)] +
                        gamma[static_cast<size_t>(k2)];
    if (pair <= 0.0) break;
    variance_sum += 2.0 * pair;
  }
  if (variance_sum < 0.0) variance_sum = gamma[0];
  return std::sqrt(variance_sum / n);
}

// 5 sigma of the stationary displacement: D v_bar approximates the
// stationary E |theta - theta*|^2, so honest in-well probes pass with wide
// margin while a basin hop (distance of order the well separation, far
// outside the stationary cloud) trips the gate.
inline double locality_threshold_from(int dimension, double mean_variance) {
  return 5.0 *
         std::sqrt(static_cast<double>(dimension) * std::abs(mean_variance));
}

inline double auto_locality_threshold(const ProbeSystem& system,
                                      double step_size, double sigma,
                                      int population) {
  const double v_bar =
      system.stationary_variance
          ? system.stationary_variance(step_size, sigma, population)
          : mode_stationary_variance(1.0, step_size, sigma, population);
  return locality_threshold_from(system.dimension, v_bar);
}

struct SeedDiagnostics {
  int seed = 0;
  double max_distance = 0.0;
  double locality_threshold = 0.0;
  double tail_mean = 0.0;
  double previous_mean = 0.0;
  double tail_gap = 0.0;
  double settling_tolerance = 0.0;
  bool locality_ok = false;
  bool settled = false;
  bool valid = false;
};

struct PlateauEstimate {
  bool valid = false;
  double value = std::numeric_limits<double>::quiet_NaN();
  double standard_error = std::numeric_limits<double>::quiet_NaN();
  int valid_seeds = 0;
  double acceptance_rate = 0.0;
  std::vector<SeedDiagnostics> seeds;
};

// R probe runs of T steps; a seed is valid when it stays within the
// locality threshold for the whole run and its last two reward windows of
// width w agree within the settling tolerance.
inline PlateauEstimate probe_plateau(const ProbeSystem& system,
                                     const Eigen::VectorXd& center,
                                     double step_size, double sigma,
                                     int population,
                                     const SpectroscopyConfig& config,
                                     const StreamKey& key) {
  config.validate();
  if (center.size() != system.dimension)
    throw std::invalid_argument("probe_plateau: center dimension mismatch");

  const double loc_threshold =
      config.locality_threshold >= 0.0
          ? config.locality_threshold
          : auto_locality_threshold(system, step_size, sigma, population);

  ESConfig run_config;
  run_config.step_size = step_size;
  run_config.sigma = sigma;
  run_config.population = population;
  run_config.horizon = config.horizon;

  PlateauEstimate estimate;
  std::vector<double> tail_means;
  for (int r = 0; r < config.seeds; ++r) {
    double max_distance = 0.0;
    const Trajectory traj = run_noisy_ascent(
        system.gradient, system.reward, center, run_config,
        key.child("probe", r), 0,
        [&center, &max_distance](int, const Eigen::VectorXd& theta, double,
                                 double) {
          max_distance = std::max(max_distance, (theta - center).norm());
        });

    const int t_end = config.horizon;
    const int w = config.tail_window;
    std::vector<double> tail(traj.rewards.begin() + (t_end - w + 1),
                             traj.rewards.begin() + (t_end + 1));
    std::vector<double> prev(traj.rewards.begin() + (t_end - 2 * w + 1),
                             traj.rewards.begin() + (t_end - w + 1));
    SeedDiagnostics diag;
    diag.seed = r;
    diag.max_distance = max_distance;
    diag.locality_threshold = loc_threshold;
    diag.tail_mean = mean_of(tail);
    diag.previous_mean = mean_of(prev);
    diag.tail_gap = std::abs(diag.tail_mean - diag.previous_mean);
    diag.settling_tolerance =
        config.settling_tolerance >= 0.0
            ? config.settling_tolerance
            : 2.0 * window_mean_standard_error(tail);
    diag.locality_ok = diag.max_distance <= loc_threshold;
    diag.settled = diag.tail_gap <= diag.settling_tolerance;
    diag.valid = diag.locality_ok && diag.settled;
    if (diag.valid) tail_means.push_back(diag.tail_mean);
    estimate.seeds.push_back(diag);
  }
  estimate.valid_seeds = static_cast<int>(tail_means.size());
  estimate.acceptance_rate =
      static_cast<double>(estimate.valid_seeds) / config.seeds;
  if (estimate.valid_seeds >= config.min_valid_seeds) {
    estimate.valid = true;
    estimate.value = mean_of(tail_means);
    estimate.standard_error = standard_error_of(tail_means);
  }
  return estimate;
}

struct SlopeFit {
  bool ok = false;
  std::string failure_reason;
  bool suspicious_zero_slope = false;
  double slope = std::numeric_limits<double>::quiet_NaN();
  double intercept = std::numeric_limits<double>::quiet_NaN();
  double r_squared = std::numeric_limits<double>::quiet_NaN();
  double effective_dimension = std::numeric_limits<double>::quiet_NaN();
  double reference_plateau = std::numeric_limits<double>::quiet_NaN();
  int reference_population = 0;
  std::vector<int> fit_populations;
  std::vector<std::pair<double, double>> points;  // (kappa, gap)
  std::vector<double> residuals;
};

// Affine fit of reference gaps against kappa over the largest fit_points
// valid populations (reference included; its gap is zero by construction,
// and the intercept absorbs the reference offset, so exact plateaus give
// the slope (alpha / 4) d_eff exactly).
inline SlopeFit fit_slope(const std::vector<std::pair<int, double>>& plateaus,
                          double sigma, double step_size,
                          const SpectroscopyConfig& config) {
  SlopeFit fit;
  std::vector<std::pair<int, double>> sorted = plateaus;
  std::sort(sorted.begin(), sorted.end());
  if (sorted.size() < 3) {
    fit.failure_reason = "need at least 2 valid populations besides the "
                         "reference, got " +
                         std::to_string(sorted.size()) + " total";
    return fit;
  }
  for (size_t i = 1; i < sorted.size(); ++i)
    if (sorted[i].first == sorted[i - 1].first)
      throw std::invalid_argument("fit_slope: duplicate population");

  const auto& [n_ref, j_ref] = sorted.back();
  fit.reference_population = n_ref;
  fit.reference_plateau = j_ref;

  const size_t use = std::min<size_t>(
      static_cast<size_t>(config.fit_points), sorted.size());
  std::vector<double> xs, ys;
  for (size_t i = sorted.size() - use; i < sorted.size(); ++i) {
    const double kappa = sigma * sigma / sorted[i].first;
    const double gap = j_ref - sorted[i].second;
    fit.fit_populations.push_back(sorted[i].first);
    fit.points.emplace_back(kappa, gap);
    xs.push_back(kappa);
    ys.push_back(gap);
  }

  const LinearFit line = fit_line(xs, ys);
  fit.slope = line.slope;
  fit.intercept = line.intercept;
  fit.r_squared = line.r_squared;
  fit.residuals = line.residuals;
  fit.effective_dimension = 4.0 / step_size * fit.slope;
  double max_gap = 0.0;
  for (double y : ys) max_gap = std::max(max_gap, std::abs(y));
  fit.suspicious_zero_slope = max_gap <= 1e-14 * std::max(1.0, std::abs(j_ref));
  fit.ok = true;
  return fit;
}

struct SpectroscopyResult {
  SlopeFit fit;
  std::map<int, PlateauEstimate> plateaus;  // by population
  bool gates_passed = false;
  std::string gate_report;
};

// Full procedure at one step size. The final gate requires fit R^2 at or
// above min_fit_r2 and acceptance at or above min_acceptance_rate on every
// population used in the fit.
inline SpectroscopyResult run_spectroscopy_at(
    const ProbeSystem& system, const Eigen::VectorXd& center, double step_size,
    const SpectroscopyConfig& config, const StreamKey& key) {
  SpectroscopyResult result;
  std::vector<std::pair<int, double>> valid_plateaus;
  for (size_t i = 0; i < config.populations.size(); ++i) {
    const int n = config.populations[i];
    PlateauEstimate est =
        probe_plateau(system, center, step_size, config.sigma, n, config,
                      key.child("population", static_cast<std::uint64_t>(i)));
    if (est.valid) valid_plateaus.emplace_back(n, est.value);
    result.plateaus.emplace(n, std::move(est));
  }
  result.fit = fit_slope(valid_plateaus, config.sigma, step_size, config);
  if (!result.fit.ok) {
    result.gate_report = result.fit.failure_reason;
    return result;
  }
  bool gates = true;
  std::string report;
  if (!(result.fit.r_squared >= config.min_fit_r2)) {
    gates = false;
    report += "fit R^2 " + std::to_string(result.fit.r_squared) +
              " below threshold " + std::to_string(config.min_fit_r2) + "; ";
  }
  for (int n : result.fit.fit_populations) {
    const double rate = result.plateaus.at(n).acceptance_rate;
    if (rate < config.min_acceptance_rate) {
      gates = false;
      report += "acceptance rate " + std::to_string(rate) +
                " at population " + std::to_string(n) + " below threshold; ";
    }
  }
  result.gates_passed = gates;
  result.gate_report = gates ? "ok" : report;
  if (!gates) {
    result.fit.ok = false;
    result.fit.failure_reason = report;
  }
  return result;
}

// One result per step size, keyed by step size.
inline std::map<double, SpectroscopyResult> run_spectroscopy(
    const ProbeSystem& system, const Eigen::VectorXd& center,
    const SpectroscopyConfig& config, const StreamKey& key) {
  config.validate();
  std::map<double, SpectroscopyResult> results;
  for (size_t i = 0; i < config.step_sizes.size(); ++i) {
    results.emplace(config.step_sizes[i],
                    run_spectroscopy_at(system, center, config.step_sizes[i],
                                        config,
                                        key.child("step_size",
                                                  static_cast<std::uint64_t>(i))));
  }
  return results;
}

}  // namespace varcurv
