#pragma once
// Isotropic-Gaussian evolution strategies and its noisy-ascent abstraction.
//
// The estimator is g_hat = (1/(N sigma)) sum_k r_k eps_k with eps_k drawn
// standard normal, an unbiased estimate of the smoothed gradient
// grad J_sigma(theta) = E[J(theta + sigma eps) eps] / sigma. Its sampling
// noise scales like 1/(N sigma^2) times a problem-dependent covariance; the
// single knob kappa = sigma^2 / N controls the idealized noise level.
//
// run_noisy_ascent integrates the abstraction those analytics describe:
// theta' = theta + alpha grad J(theta) + alpha (sigma / sqrt(N)) eps,
// i.e. exact gradient plus isotropic noise of the calibrated scale. On a
// quadratic this is the AR(1) mode process that the closed forms in
// ou.hpp predict; run_es is the literal evaluation-based algorithm, whose
// estimator noise also carries reward-level and curvature terms.

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "varcurv/landscape.hpp"
#include "varcurv/stats.hpp"
#include "varcurv/stochastics.hpp"

namespace varcurv {

struct ESConfig {
  double step_size = 0.0;
  double sigma = 0.0;
  int population = 0;
  int horizon = 0;
  int group_size = 1;
  bool antithetic = false;
  bool baseline_subtract = false;

  double kappa() const { return sigma * sigma / population; }

  void validate() const {
    if (!(step_size > 0.0) || !std::isfinite(step_size))
      throw std::invalid_argument("ESConfig: step_size must be > 0");
    if (!(sigma > 0.0) || !std::isfinite(sigma))
      throw std::invalid_argument("ESConfig: sigma must be > 0");
    if (population < 1)
      throw std::invalid_argument("ESConfig: population must be >= 1");
    if (horizon < 0)
      throw std::invalid_argument("ESConfig: horizon must be >= 0");
    if (group_size < 1)
      throw std::invalid_argument("ESConfig: group_size must be >= 1");
    if (antithetic && population % 2 != 0)
      throw std::invalid_argument(
          "ESConfig: antithetic sampling needs an even population");
  }
};

struct GradientEstimate {
  Eigen::VectorXd gradient;
  std::vector<double> rewards;  // candidate rewards in draw order
};

// One population of perturbations. Candidate k draws from the stream at
// key.child("cand", k), so the estimate is independent of batching order.
inline GradientEstimate es_gradient_estimate(const Objective& objective,
                                             const Eigen::VectorXd& theta,
                                             const ESConfig& config,
                                             const StreamKey& key) {
  config.validate();
  objective.check_dimension(theta);
  const int n = config.population;
  const double sigma = config.sigma;
  const int d = objective.dimension();

  GradientEstimate out;
  out.gradient = Eigen::VectorXd::Zero(d);
  out.rewards.reserve(static_cast<size_t>(n));

  if (config.antithetic) {
    for (int p = 0; p < n / 2; ++p) {
      RandomStream stream = derive_stream(key.child("cand", p));
      const Eigen::VectorXd eps = stream.gaussian_vector(d);
      const double r_plus =
          evaluate_group(objective, theta + sigma * eps, config.group_size,
                         &stream);
      const double r_minus =
          evaluate_group(objective, theta - sigma * eps, config.group_size,
                         &stream);
      out.rewards.push_back(r_plus);
      out.rewards.push_back(r_minus);
      // Pairwise form (r+ - r-) eps cancels any reward constant exactly.
      out.gradient += (r_plus - r_minus) * eps;
    }
  } else {
    std::vector<Eigen::VectorXd> eps(static_cast<size_t>(n));
    for (int k = 0; k < n; ++k) {
      RandomStream stream = derive_stream(key.child("cand", k));
      eps[static_cast<size_t>(k)] = stream.gaussian_vector(d);
      out.rewards.push_back(evaluate_group(
          objective, theta + sigma * eps[static_cast<size_t>(k)],
          config.group_size, &stream));
    }
    double baseline = 0.0;
    if (config.baseline_subtract) baseline = mean_of(out.rewards);
    for (int k = 0; k < n; ++k)
      out.gradient +=
          (out.rewards[static_cast<size_t>(k)] - baseline) *
          eps[static_cast<size_t>(k)];
  }
  out.gradient /= static_cast<double>(n) * sigma;
  return out;
}

struct TrajectoryPoint {
  int iteration = 0;
  Eigen::VectorXd theta;
};

struct Trajectory {
  std::vector<double> rewards;     // length horizon + 1, noiseless values
  std::vector<double> grad_norms;  // aligned with rewards; final entry NaN
  std::vector<TrajectoryPoint> states;  // subsampled parameters
  ESConfig config;
  StreamKey key;
  bool rewards_are_clean = true;
};

using StepObserver = std::function<void(int iteration,
                                        const Eigen::VectorXd& theta,
                                        double reward, double grad_norm)>;

namespace detail {

inline void require_finite(double x, const char* what, int iteration) {
  if (!std::isfinite(x)) {
    throw std::runtime_error(std::string("run aborted: non-finite ") + what +
                             " at iteration " + std::to_string(iteration));
  }
}

inline void require_finite(const Eigen::VectorXd& v, const char* what,
                           int iteration) {
  if (!v.allFinite()) {
    throw std::runtime_error(std::string("run aborted: non-finite ") + what +
                             " at iteration " + std::to_string(iteration));
  }
}

}  // namespace detail

// Literal algorithm: estimate, step, repeat. Iteration t derives its
// candidate streams from key.child("iter", t). Rewards are logged as
// noiseless re-evaluations; state_stride > 0 additionally records
// parameters every that-many iterations (plus the final point).
inline Trajectory run_es(const Objective& objective, Eigen::VectorXd theta,
                         const ESConfig& config, const StreamKey& key,
                         int state_stride = 0,
                         const StepObserver& observer = {}) {
  config.validate();
  objective.check_dimension(theta);
  Trajectory traj;
  traj.config = config;
  traj.key = key;
  traj.rewards.reserve(static_cast<size_t>(config.horizon) + 1);
  traj.grad_norms.reserve(static_cast<size_t>(config.horizon) + 1);

  for (int t = 0; t <= config.horizon; ++t) {
    const double reward = objective.value(theta);
    detail::require_finite(reward, "reward", t);
    double grad_norm = std::numeric_limits<double>::quiet_NaN();
    if (t < config.horizon) {
      GradientEstimate est =
          es_gradient_estimate(objective, theta, config, key.child("iter", t));
      detail::require_finite(est.gradient, "gradient estimate", t);
      grad_norm = est.gradient.norm();
      traj.rewards.push_back(reward);
      traj.grad_norms.push_back(grad_norm);
      if (state_stride > 0 && t % state_stride == 0)
        traj.states.push_back({t, theta});
      if (observer) observer(t, theta, reward, grad_norm);
      theta += config.step_size * est.gradient;
      detail::require_finite(theta, "parameter", t + 1);
    } else {
      traj.rewards.push_back(reward);
      traj.grad_norms.push_back(grad_norm);
      if (state_stride > 0) traj.states.push_back({t, theta});
      if (observer) observer(t, theta, reward, grad_norm);
    }
  }
  return traj;
}

// Noisy-ascent abstraction: exact gradient plus isotropic noise at the
// ES-calibrated scale sigma / sqrt(N) per step. This is the process the
// closed-form mode analytics describe exactly.
inline Trajectory run_noisy_ascent(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& gradient,
    const std::function<double(const Eigen::VectorXd&)>& reward,
    Eigen::VectorXd theta, const ESConfig& config, const StreamKey& key,
    int state_stride = 0, const StepObserver& observer = {}) {
  config.validate();
  const double noise_sd = config.sigma / std::sqrt(config.population);
  const int d = static_cast<int>(theta.size());
  RandomStream stream = derive_stream(key);

  Trajectory traj;
  traj.config = config;
  traj.key = key;
  traj.rewards.reserve(static_cast<size_t>(config.horizon) + 1);
  traj.grad_norms.reserve(static_cast<size_t>(config.horizon) + 1);

  for (int t = 0; t <= config.horizon; ++t) {
    const double r = reward(theta);
    detail::require_finite(r, "reward", t);
    double grad_norm = std::numeric_limits<double>::quiet_NaN();
    if (t < config.horizon) {
      const Eigen::VectorXd g = gradient(theta);
      detail::require_finite(g, "gradient", t);
      grad_norm = g.norm();
      traj.rewards.push_back(r);
      traj.grad_norms.push_back(grad_norm);
      if (state_stride > 0 && t % state_stride == 0)
        traj.states.push_back({t, theta});
      if (observer) observer(t, theta, r, grad_norm);
      theta += config.step_size * g +
               config.step_size * noise_sd * stream.gaussian_vector(d);
      detail::require_finite(theta, "parameter", t + 1);
    } else {
      traj.rewards.push_back(r);
      traj.grad_norms.push_back(grad_norm);
      if (state_stride > 0) traj.states.push_back({t, theta});
      if (observer) observer(t, theta, r, grad_norm);
    }
  }
  return traj;
}

inline Trajectory run_noisy_ascent(const QuadraticLandscape& landscape,
                                   Eigen::VectorXd theta,
                                   const ESConfig& config,
                                   const StreamKey& key, int state_stride = 0,
                                   const StepObserver& observer = {}) {
  return run_noisy_ascent(
      [&landscape](const Eigen::VectorXd& x) { return landscape.gradient(x); },
      [&landscape](const Eigen::VectorXd& x) { return landscape.value(x); },
      std::move(theta), config, key, state_stride, observer);
}

// Monte Carlo estimate of the smoothed reward J_sigma(theta) =
// E[J(theta + sigma eps)]. Returns (mean, standard error).
inline std::pair<double, double> smoothed_reward(const Objective& objective,
                                                 const Eigen::VectorXd& theta,
                                                 double sigma, int samples,
                                                 RandomStream& stream) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma))
    throw std::invalid_argument("smoothed_reward: sigma must be >= 0");
  if (samples < 1)
    throw std::invalid_argument("smoothed_reward: samples must be >= 1");
  objective.check_dimension(theta);
  RunningMoments m;
  for (int s = 0; s < samples; ++s) {
    const Eigen::VectorXd eps = stream.gaussian_vector(objective.dimension());
    m.add(objective.evaluate(theta + sigma * eps, &stream));
  }
  return {m.mean(), m.standard_error()};
}

}  // namespace varcurv
