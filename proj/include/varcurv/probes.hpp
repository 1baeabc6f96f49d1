#pragma once
// Best-of-N accessibility probes: sample M perturbations of a point, then ask
// how the best of a random size-N subset improves on the baseline.
//
// For sorted samples v_(1) <= ... <= v_(M), the max of a uniformly random
// N-subset lands on v_(j) with probability
//   w_j = C(j-1, N-1) / C(M, N),
// computed overflow-free by the descending recurrence
//   w_M = N / M,   w_{j-1} = w_j (j - N) / (j - 1),
// so E[max] = sum_j w_j v_(j) exactly.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "varcurv/landscape.hpp"
#include "varcurv/stats.hpp"
#include "varcurv/stochastics.hpp"

namespace varcurv {

struct PerturbationBatch {
  double baseline = 0.0;        // clean reward at the center point
  double sigma = 0.0;           // perturbation scale
  int requested = 0;            // candidates drawn
  int excluded_nonfinite = 0;   // candidates dropped for non-finite reward
  std::vector<double> rewards;  // finite candidate rewards
  std::vector<double> deltas;   // rewards - baseline, same order
};

// Draws `count` candidates theta + sigma eps_k, eps_k ~ N(0, I). Candidate k
// uses the stream at key.child("cand", k) so the batch is order-independent.
inline PerturbationBatch generate_batch(const Objective& objective,
                                        const Eigen::VectorXd& theta,
                                        double sigma, int count,
                                        const StreamKey& key) {
  objective.check_dimension(theta);
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw std::invalid_argument("generate_batch: sigma must be > 0");
  if (count < 1)
    throw std::invalid_argument("generate_batch: count must be >= 1");

  PerturbationBatch batch;
  batch.sigma = sigma;
  batch.requested = count;
  batch.baseline = objective.value(theta);
  if (!std::isfinite(batch.baseline))
    throw std::runtime_error("generate_batch: baseline reward is non-finite");
  batch.rewards.reserve(static_cast<size_t>(count));
  batch.deltas.reserve(static_cast<size_t>(count));
  for (int k = 0; k < count; ++k) {
    RandomStream stream = derive_stream(key.child("cand", k));
    const Eigen::VectorXd eps = sample_gaussian_vector(stream, theta.size());
    const double reward = objective.evaluate(theta + sigma * eps, &stream);
    if (!std::isfinite(reward)) {
      ++batch.excluded_nonfinite;
      continue;
    }
    batch.rewards.push_back(reward);
    batch.deltas.push_back(reward - batch.baseline);
  }
  if (batch.rewards.empty())
    throw std::runtime_error("generate_batch: every candidate was non-finite");
  return batch;
}

// Exact E[max of a uniform random N-subset] of `values` (with replacement is
// NOT assumed; subsets are without replacement, N <= M).
inline double best_of_n_exact(std::vector<double> values, int subset_size) {
  const int m = static_cast<int>(values.size());
  if (m < 1) throw std::invalid_argument("best_of_n_exact: empty sample");
  if (subset_size < 1 || subset_size > m)
    throw std::invalid_argument("best_of_n_exact: subset size out of range");
  std::sort(values.begin(), values.end());
  double w = static_cast<double>(subset_size) / static_cast<double>(m);
  KahanSum acc;
  for (int j = m; j >= subset_size; --j) {
    acc.add(w * values[static_cast<size_t>(j - 1)]);
    if (j > subset_size)
      w *= static_cast<double>(j - subset_size) / static_cast<double>(j - 1);
  }
  return acc.value();
}

// Exact curve for every N in 1..max_n (weights rebuilt per N; O(M max_n)).
inline std::vector<double> best_of_n_curve(const std::vector<double>& values,
                                           int max_n) {
  const int m = static_cast<int>(values.size());
  if (max_n < 1 || max_n > m)
    throw std::invalid_argument("best_of_n_curve: max_n out of range");
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> curve(static_cast<size_t>(max_n));
  for (int n = 1; n <= max_n; ++n) {
    double w = static_cast<double>(n) / static_cast<double>(m);
    KahanSum acc;
    for (int j = m; j >= n; --j) {
      acc.add(w * sorted[static_cast<size_t>(j - 1)]);
      if (j > n) w *= static_cast<double>(j - n) / static_cast<double>(j - 1);
    }
    curve[static_cast<size_t>(n - 1)] = acc.value();
  }
  return curve;
}

struct MonteCarloBest {
  double mean = 0.0;
  double standard_error = 0.0;
  int subsets = 0;
};

// Monte Carlo check of the exact formula: `subsets` random N-subsets drawn by
// partial Fisher-Yates over a persistent index pool.
inline MonteCarloBest best_of_n_monte_carlo(const std::vector<double>& values,
                                            int subset_size, int subsets,
                                            RandomStream& stream) {
  const int m = static_cast<int>(values.size());
  if (subset_size < 1 || subset_size > m)
    throw std::invalid_argument(
        "best_of_n_monte_carlo: subset size out of range");
  if (subsets < 2)
    throw std::invalid_argument("best_of_n_monte_carlo: need >= 2 subsets");
  std::vector<int> pool(static_cast<size_t>(m));
  std::iota(pool.begin(), pool.end(), 0);
  RunningMoments moments;
  for (int s = 0; s < subsets; ++s) {
    double best = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < subset_size; ++i) {
      const std::uint64_t span = static_cast<std::uint64_t>(m - i);
      const int j = i + static_cast<int>(stream.uniform_below(span));
      std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
      best = std::max(best, values[static_cast<size_t>(pool[i])]);
    }
    moments.add(best);
  }
  MonteCarloBest out;
  out.mean = moments.mean();
  out.standard_error = moments.standard_error();
  out.subsets = subsets;
  return out;
}

// Bootstrap SE of E[best-of-N]: resample the batch with replacement and
// recompute the exact expectation each time.
inline double bootstrap_best_of_n_se(const std::vector<double>& values,
                                     int subset_size, int resamples,
                                     RandomStream& stream) {
  const int m = static_cast<int>(values.size());
  if (subset_size < 1 || subset_size > m)
    throw std::invalid_argument(
        "bootstrap_best_of_n_se: subset size out of range");
  if (resamples < 2)
    throw std::invalid_argument("bootstrap_best_of_n_se: need >= 2 resamples");
  std::vector<double> resample(static_cast<size_t>(m));
  RunningMoments moments;
  for (int b = 0; b < resamples; ++b) {
    for (int i = 0; i < m; ++i) {
      const std::uint64_t pick =
          stream.uniform_below(static_cast<std::uint64_t>(m));
      resample[static_cast<size_t>(i)] = values[static_cast<size_t>(pick)];
    }
    moments.add(best_of_n_exact(resample, subset_size));
  }
  return std::sqrt(moments.variance());
}

struct ImprovementEstimate {
  double probability = 0.0;     // fraction of strictly positive deltas
  double standard_error = 0.0;  // binomial SE
  int sample_size = 0;
};

inline ImprovementEstimate estimate_p_improve(
    const std::vector<double>& deltas) {
  if (deltas.empty())
    throw std::invalid_argument("estimate_p_improve: empty sample");
  const auto positives = static_cast<double>(
      std::count_if(deltas.begin(), deltas.end(),
                    [](double d) { return d > 0.0; }));
  const auto n = static_cast<double>(deltas.size());
  ImprovementEstimate est;
  est.probability = positives / n;
  est.standard_error =
      std::sqrt(est.probability * (1.0 - est.probability) / n);
  est.sample_size = static_cast<int>(deltas.size());
  return est;
}

struct TailStatistics {
  double level = 0.0;
  double delta_quantile = 0.0;       // quantile of reward deltas
  bool normalized = false;           // true when headroom > 0
  double headroom_share = std::numeric_limits<double>::quiet_NaN();
};

// Quantile of the delta sample; when the baseline leaves positive headroom
// (baseline < ceiling) the quantile is also expressed as a share of it.
inline TailStatistics tail_statistics(const PerturbationBatch& batch,
                                      double level, double ceiling = 1.0) {
  TailStatistics out;
  out.level = level;
  out.delta_quantile = quantile_linear(batch.deltas, level);
  const double headroom = ceiling - batch.baseline;
  if (headroom > 0.0) {
    out.normalized = true;
    out.headroom_share = out.delta_quantile / headroom;
  }
  return out;
}

struct BestOfNPoint {
  int population = 0;
  double expected_best_delta = 0.0;
  double bootstrap_se = 0.0;
};

struct BestOfNSummary {
  double baseline = 0.0;
  double headroom = 0.0;            // ceiling - baseline
  bool headroom_valid = false;      // false when baseline >= ceiling
  int sample_size = 0;
  int excluded_nonfinite = 0;
  std::vector<BestOfNPoint> curve;  // at the requested populations
  ImprovementEstimate improvement;
  // Smallest N whose expected best covers 90% of the span from the N=1
  // expectation (the plain mean) to the sample maximum.
  int saturation_population = 0;
  std::vector<TailStatistics> tails;
};

inline BestOfNSummary summarize_best_of_n(
    const PerturbationBatch& batch, const std::vector<int>& populations,
    const std::vector<double>& tail_levels, const StreamKey& key,
    int bootstrap_resamples = 1000, double ceiling = 1.0) {
  if (populations.empty())
    throw std::invalid_argument("summarize_best_of_n: no populations");
  const int m = static_cast<int>(batch.deltas.size());
  BestOfNSummary summary;
  summary.baseline = batch.baseline;
  summary.headroom = ceiling - batch.baseline;
  summary.headroom_valid = summary.headroom > 0.0;
  summary.sample_size = m;
  summary.excluded_nonfinite = batch.excluded_nonfinite;
  summary.improvement = estimate_p_improve(batch.deltas);

  RandomStream boot = derive_stream(key.child("bootstrap", 0));
  for (const int n : populations) {
    if (n < 1 || n > m)
      throw std::invalid_argument(
          "summarize_best_of_n: population exceeds batch size");
    BestOfNPoint point;
    point.population = n;
    point.expected_best_delta = best_of_n_exact(batch.deltas, n);
    point.bootstrap_se = bootstrap_best_of_n_se(batch.deltas, n,
                                                bootstrap_resamples, boot);
    summary.curve.push_back(point);
  }

  const std::vector<double> full_curve = best_of_n_curve(batch.deltas, m);
  const double floor_value = full_curve.front();  // N = 1: the mean
  const double peak_value = full_curve.back();    // N = M: the maximum
  const double target = peak_value - 0.1 * (peak_value - floor_value);
  summary.saturation_population = m;
  for (int n = 1; n <= m; ++n) {
    if (full_curve[static_cast<size_t>(n - 1)] >= target) {
      summary.saturation_population = n;
      break;
    }
  }

  for (const double level : tail_levels)
    summary.tails.push_back(tail_statistics(batch, level, ceiling));
  return summary;
}

}  // namespace varcurv
