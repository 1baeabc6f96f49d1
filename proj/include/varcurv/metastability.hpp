#pragma once
// Metastable hopping of noisy gradient descent in a quartic double well.
//
// The scalar update x' = x - alpha L'(x) + alpha xi with xi ~ N(0, s) is a
// discretized Langevin process at effective temperature
//   epsilon = alpha s / 2          (s = sigma^2 / N per-step noise variance).
// Escape from a well follows Eyring-Kramers:
//   E[K_esc] ~= 2 pi / (alpha sqrt(L''(min) |L''(saddle)|)) exp(dL / epsilon)
// iterations, which for L = k/4 (x^2 - a^2)^2 specializes with
// L''(min) = 2 k a^2, |L''(saddle)| = k a^2 and barrier dL = k a^4 / 4 to
//   E[K_esc] ~= 2 pi / (alpha k a^2 sqrt(2)) exp(dL / epsilon).
// Hops within a horizon T are approximately Poisson:
//   Pr(hop by T) ~= 1 - exp(-T / E[K_esc]),
// with the regime boundary at dL / epsilon ~ log T. Within a well the
// stationary spread is Var(x) ~= epsilon / L''(min).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "varcurv/landscape.hpp"
#include "varcurv/parallel.hpp"
#include "varcurv/stats.hpp"
#include "varcurv/stochastics.hpp"

namespace varcurv {

struct KramersSetup {
  DoubleWellLandscape landscape{1.0, 1.0};
  double step_size = 0.0;
  double noise_variance = 0.0;  // per-step variance s = sigma^2 / N
  int horizon = 0;
  int replicates = 0;
  // Hop detection with hysteresis: a hop fires on first crossing past
  // +-(hysteresis_fraction * a) on the far side, re-armed symmetrically.
  double hysteresis_fraction = 0.5;

  void validate() const {
    if (!(step_size > 0.0) || !std::isfinite(step_size))
      throw std::invalid_argument("KramersSetup: step size must be > 0");
    if (!(noise_variance >= 0.0) || !std::isfinite(noise_variance))
      throw std::invalid_argument("KramersSetup: noise variance must be >= 0");
    if (horizon < 1)
      throw std::invalid_argument("KramersSetup: horizon must be >= 1");
    if (replicates < 1)
      throw std::invalid_argument("KramersSetup: replicates must be >= 1");
    if (!(hysteresis_fraction > 0.0 && hysteresis_fraction < 1.0))
      throw std::invalid_argument(
          "KramersSetup: hysteresis fraction must lie in (0, 1)");
  }

  // Effective temperature alpha s / 2.
  double epsilon() const { return 0.5 * step_size * noise_variance; }

  double barrier_ratio() const {
    const double eps = epsilon();
    if (!(eps > 0.0)) return std::numeric_limits<double>::infinity();
    return landscape.barrier() / eps;
  }
};

struct EscapePrediction {
  double prefactor = 0.0;            // 2 pi / (alpha k a^2 sqrt(2))
  double barrier_ratio = 0.0;        // dL / epsilon
  double expected_iterations = 0.0;  // prefactor * exp(barrier_ratio)
  bool asymptotic_valid = true;      // false when dL / epsilon <= 1
};

inline EscapePrediction kramers_escape_iters(const KramersSetup& setup) {
  setup.validate();
  EscapePrediction pred;
  const double curvature_product =
      std::sqrt(setup.landscape.curvature_at_minimum() *
                std::abs(setup.landscape.curvature_at_saddle()));
  pred.prefactor = 2.0 * M_PI / (setup.step_size * curvature_product);
  pred.barrier_ratio = setup.barrier_ratio();
  pred.expected_iterations = pred.prefactor * std::exp(pred.barrier_ratio);
  pred.asymptotic_valid = pred.barrier_ratio > 1.0;
  return pred;
}

// Pr(hop by T) ~= 1 - exp(-T / E[K_esc]); the linearized form T / E[K_esc]
// applies when T << E[K_esc].
inline double hop_probability(const KramersSetup& setup, double horizon,
                              bool linearized = false) {
  if (!(horizon >= 0.0))
    throw std::invalid_argument("hop_probability: horizon must be >= 0");
  const EscapePrediction pred = kramers_escape_iters(setup);
  const double ratio = horizon / pred.expected_iterations;
  if (linearized) return ratio;
  return 1.0 - std::exp(-ratio);
}

enum class Regime { metastable, hopping, delocalized };

inline const char* regime_name(Regime r) {
  switch (r) {
    case Regime::metastable: return "metastable";
    case Regime::hopping: return "hopping";
    case Regime::delocalized: return "delocalized";
  }
  return "unknown";
}

// Band classification around the threshold dL / epsilon ~ log T. Between 1
// and the lower band edge the predicted hop probability breaks the tie.
inline Regime classify_regime(const KramersSetup& setup, double horizon,
                              double band_lo = 0.5, double band_hi = 2.0) {
  if (!(horizon > 1.0))
    throw std::invalid_argument("classify_regime: horizon must exceed 1");
  if (!(band_lo > 0.0 && band_hi > band_lo))
    throw std::invalid_argument("classify_regime: invalid band");
  const double ratio = setup.barrier_ratio();
  const double log_t = std::log(horizon);
  if (ratio <= 1.0) return Regime::delocalized;
  if (ratio > band_hi * log_t) return Regime::metastable;
  if (ratio >= band_lo * log_t) return Regime::hopping;
  const double p = hop_probability(setup, horizon);
  if (p <= 0.01) return Regime::metastable;
  if (p >= 0.99) return Regime::delocalized;
  return Regime::hopping;
}

struct ReplicateRecord {
  std::optional<int> first_hop;  // iteration of first hop, if any
  int hop_count = 0;
  double final_x = 0.0;
  double tail_mean_x = 0.0;      // mean over the recorded tail window
  double tail_var_x = 0.0;       // variance over the tail window
};

struct DoubleWellRun {
  std::vector<ReplicateRecord> replicates;
  double hop_fraction = 0.0;           // fraction with >= 1 hop in horizon
  double mean_first_passage = 0.0;     // over hopped replicates
  int hopped = 0;
  std::vector<double> final_positions;
  // Sampled trajectories: x every `stride` iterations for a few replicates.
  int trajectory_stride = 0;
  std::vector<std::vector<double>> sample_trajectories;
};

namespace detail {

// Scalar well walk. Starts at -a, drifts along -L', hops tracked with
// hysteresis: from the minus well the detector fires at +fa and re-arms at
// -fa, and symmetrically afterwards.
struct WellWalk {
  const DoubleWellLandscape& landscape;
  double step_size;
  double noise_sd;
  double trip;  // hysteresis_fraction * a

  double x;
  int side;  // -1: minus well, +1: plus well
  int hops = 0;
  std::optional<int> first_hop;

  WellWalk(const DoubleWellLandscape& l, double alpha, double noise_variance,
           double hysteresis_fraction)
      : landscape(l),
        step_size(alpha),
        noise_sd(std::sqrt(noise_variance)),
        trip(hysteresis_fraction * l.half_separation()),
        x(-l.half_separation()),
        side(-1) {}

  void advance(int iteration, RandomStream& stream) {
    x += -step_size * landscape.loss_grad_1d(x) +
         step_size * noise_sd * stream.gaussian();
    if (!std::isfinite(x)) {
      throw std::runtime_error(
          "double well run aborted: non-finite position at iteration " +
          std::to_string(iteration));
    }
    if (side < 0 && x >= trip) {
      side = 1;
      ++hops;
      if (!first_hop) first_hop = iteration;
    } else if (side > 0 && x <= -trip) {
      side = -1;
      ++hops;
    }
  }
};

}  // namespace detail

// Full-horizon replicate runs (hop fractions use the whole horizon). The
// tail window for within-well statistics is the final quarter.
inline DoubleWellRun simulate_double_well(const KramersSetup& setup,
                                          const StreamKey& key,
                                          int trajectory_samples = 0,
                                          int trajectory_stride = 1,
                                          int threads = 1) {
  setup.validate();
  if (trajectory_samples < 0 || trajectory_samples > setup.replicates)
    throw std::invalid_argument(
        "simulate_double_well: trajectory_samples out of range");
  if (trajectory_stride < 1)
    throw std::invalid_argument("simulate_double_well: stride must be >= 1");

  DoubleWellRun run;
  run.replicates.resize(static_cast<size_t>(setup.replicates));
  run.trajectory_stride = trajectory_stride;
  run.sample_trajectories.resize(static_cast<size_t>(trajectory_samples));
  const int tail_start = setup.horizon - setup.horizon / 4;

  parallel_for(
      static_cast<size_t>(setup.replicates), threads,
      [&](std::size_t r) {
        RandomStream stream = derive_stream(key.child("replicate", r));
        detail::WellWalk walk(setup.landscape, setup.step_size,
                              setup.noise_variance,
                              setup.hysteresis_fraction);
        const bool record = r < static_cast<size_t>(trajectory_samples);
        std::vector<double>* trace =
            record ? &run.sample_trajectories[r] : nullptr;
        if (trace) trace->push_back(walk.x);
        RunningMoments tail;
        for (int t = 1; t <= setup.horizon; ++t) {
          walk.advance(t, stream);
          if (trace && t % trajectory_stride == 0) trace->push_back(walk.x);
          if (t >= tail_start) tail.add(walk.x);
        }
        ReplicateRecord& rec = run.replicates[r];
        rec.first_hop = walk.first_hop;
        rec.hop_count = walk.hops;
        rec.final_x = walk.x;
        rec.tail_mean_x = tail.mean();
        rec.tail_var_x = tail.variance();
      });

  KahanSum passage;
  for (const ReplicateRecord& rec : run.replicates) {
    run.final_positions.push_back(rec.final_x);
    if (rec.first_hop) {
      ++run.hopped;
      passage.add(static_cast<double>(*rec.first_hop));
    }
  }
  run.hop_fraction =
      static_cast<double>(run.hopped) / static_cast<double>(setup.replicates);
  run.mean_first_passage =
      run.hopped > 0 ? passage.value() / run.hopped
                     : std::numeric_limits<double>::quiet_NaN();
  return run;
}

struct FirstPassageResult {
  std::vector<int> passage_iterations;  // hopped replicates only
  int censored = 0;                     // replicates that never hopped
  double mean_first_passage = std::numeric_limits<double>::quiet_NaN();
};

// First-passage measurement: each replicate stops at its first hop; the cap
// censors non-hopping replicates.
inline FirstPassageResult measure_first_passage(const KramersSetup& setup,
                                                int cap, const StreamKey& key,
                                                int threads = 1) {
  setup.validate();
  if (cap < 1)
    throw std::invalid_argument("measure_first_passage: cap must be >= 1");
  std::vector<std::optional<int>> results(
      static_cast<size_t>(setup.replicates));
  parallel_for(
      static_cast<size_t>(setup.replicates), threads,
      [&](std::size_t r) {
        RandomStream stream = derive_stream(key.child("fp", r));
        detail::WellWalk walk(setup.landscape, setup.step_size,
                              setup.noise_variance,
                              setup.hysteresis_fraction);
        for (int t = 1; t <= cap; ++t) {
          walk.advance(t, stream);
          if (walk.first_hop) break;
        }
        results[r] = walk.first_hop;
      });
  FirstPassageResult out;
  KahanSum sum;
  for (const auto& fp : results) {
    if (fp) {
      out.passage_iterations.push_back(*fp);
      sum.add(static_cast<double>(*fp));
    } else {
      ++out.censored;
    }
  }
  if (!out.passage_iterations.empty())
    out.mean_first_passage =
        sum.value() / static_cast<double>(out.passage_iterations.size());
  return out;
}

// Var(x) ~= epsilon / L''(min) within a well.
inline double within_well_variance(const KramersSetup& setup) {
  return setup.epsilon() / setup.landscape.curvature_at_minimum();
}

}  // namespace varcurv
