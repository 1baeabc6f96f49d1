#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "support.hpp"
#include "varcurv/landscape.hpp"
#include "varcurv/probes.hpp"

using namespace varcurv;

namespace {

// Exhaustive oracle: mean over all size-n subsets of max(subset).
double best_of_n_enumerated(const std::vector<double>& values, int n) {
  const int m = static_cast<int>(values.size());
  long double total = 0.0L;
  long count = 0;
  for (unsigned mask = 0; mask < (1u << m); ++mask) {
    if (__builtin_popcount(mask) != n) continue;
    double best = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i)
      if (mask & (1u << i))
        best = std::max(best, values[static_cast<size_t>(i)]);
    total += best;
    ++count;
  }
  return static_cast<double>(total / count);
}

}  // namespace

TEST_CASE("pinned best-of-two on three values is 7/30") {
  // Subsets of {0.1, -0.2, 0.3}: maxima 0.1, 0.3, 0.3 -> mean 7/30.
  REQUIRE(best_of_n_exact({0.1, -0.2, 0.3}, 2) ==
          Catch::Approx(7.0 / 30.0).epsilon(1e-14));
}

TEST_CASE("order-statistics formula equals exhaustive enumeration") {
  auto rng = derive_stream(StreamKey(501u).child("enum", 0));
  for (int m : {5, 8, 12}) {
    std::vector<double> values(static_cast<size_t>(m));
    for (auto& v : values) v = rng.gaussian();
    // Include a duplicate to exercise ties.
    values[1] = values[0];
    for (int n = 1; n <= m; ++n) {
      INFO("m = " << m << ", n = " << n);
      REQUIRE(best_of_n_exact(values, n) ==
              Catch::Approx(best_of_n_enumerated(values, n)).margin(1e-12));
    }
  }
}

TEST_CASE("curve endpoints are the mean and the maximum") {
  auto rng = derive_stream(StreamKey(502u).child("ends", 0));
  std::vector<double> values(25);
  for (auto& v : values) v = rng.gaussian();
  const auto curve = best_of_n_curve(values, 25);
  REQUIRE(curve.size() == 25);
  long double mean = 0.0L;
  for (double v : values) mean += v;
  mean /= 25;
  REQUIRE(curve.front() ==
          Catch::Approx(static_cast<double>(mean)).margin(1e-12));
  REQUIRE(curve.back() ==
          Catch::Approx(*std::max_element(values.begin(),
                                          values.end())).margin(1e-14));
  // Expected best of a larger subset can only grow.
  for (size_t i = 1; i < curve.size(); ++i)
    REQUIRE(curve[i] >= curve[i - 1] - 1e-12);
}

TEST_CASE("monte carlo subsets agree with the exact expectation") {
  auto rng = derive_stream(StreamKey(503u).child("mc", 0));
  std::vector<double> values(40);
  for (auto& v : values) v = rng.gaussian();
  auto mc_stream = derive_stream(StreamKey(503u).child("draws", 0));
  for (int n : {1, 5, 13, 40}) {
    const double exact = best_of_n_exact(values, n);
    const auto mc = best_of_n_monte_carlo(values, n, 6000, mc_stream);
    INFO("n = " << n);
    if (n == 40) {
      // Only one subset exists; every draw returns the maximum.
      REQUIRE(mc.mean == Catch::Approx(exact).margin(1e-12));
    } else {
      REQUIRE(std::abs(mc.mean - exact) <= 3.0 * mc.standard_error);
    }
  }
}

TEST_CASE("bootstrap SE tracks the sampling spread of the exact estimate") {
  // Oracle: the spread of best_of_n_exact over fresh samples from the same
  // distribution. The bootstrap from one sample should land in the same
  // decade (factor-two window) for a well-behaved Gaussian batch.
  const int m = 60;
  const int n = 8;
  auto rng = derive_stream(StreamKey(504u).child("boot", 0));
  RunningMoments fresh;
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> sample(m);
    for (auto& v : sample) v = rng.gaussian();
    fresh.add(best_of_n_exact(sample, n));
  }
  const double true_sd = std::sqrt(fresh.variance());

  std::vector<double> one(m);
  for (auto& v : one) v = rng.gaussian();
  auto boot_stream = derive_stream(StreamKey(504u).child("resample", 0));
  const double se = bootstrap_best_of_n_se(one, n, 800, boot_stream);
  REQUIRE(se > 0.4 * true_sd);
  REQUIRE(se < 2.5 * true_sd);
}

TEST_CASE("p_improve is the positive fraction with binomial error") {
  const std::vector<double> deltas = {0.5, -0.1, 0.2, -0.3, 0.0, 0.1};
  const auto est = estimate_p_improve(deltas);
  REQUIRE(est.probability == Catch::Approx(3.0 / 6.0));  // zeros don't count
  REQUIRE(est.standard_error ==
          Catch::Approx(std::sqrt(0.5 * 0.5 / 6.0)).epsilon(1e-12));
  REQUIRE(est.sample_size == 6);
  REQUIRE_THROWS_AS(estimate_p_improve({}), std::invalid_argument);
}

TEST_CASE("tail statistics normalize against remaining headroom") {
  PerturbationBatch batch;
  batch.baseline = 0.6;
  batch.deltas = {-0.2, -0.1, 0.0, 0.1, 0.2};
  const auto t = tail_statistics(batch, 0.5, 1.0);
  REQUIRE(t.delta_quantile == Catch::Approx(0.0).margin(1e-14));
  REQUIRE(t.normalized);
  const auto t9 = tail_statistics(batch, 1.0, 1.0);
  REQUIRE(t9.delta_quantile == Catch::Approx(0.2));
  // Headroom 0.4: a 0.2 gain covers half of it.
  REQUIRE(t9.headroom_share == Catch::Approx(0.5).epsilon(1e-12));

  batch.baseline = 1.2;  // above the ceiling: no meaningful normalization
  const auto bad = tail_statistics(batch, 0.9, 1.0);
  REQUIRE_FALSE(bad.normalized);
  REQUIRE(std::isnan(bad.headroom_share));
}

TEST_CASE("generate_batch excludes non-finite rewards and counts them") {
  // Rewards blow up on one side of the center: those draws are dropped.
  const Objective spiky(
      2,
      [](const Eigen::VectorXd& x) {
        if (x(0) > 0.8) return std::numeric_limits<double>::quiet_NaN();
        return 1.0 - x.squaredNorm();
      },
      0.0);
  Eigen::VectorXd center = Eigen::VectorXd::Zero(2);
  const auto batch =
      generate_batch(spiky, center, 1.0, 300, StreamKey(505u).child("b", 0));
  REQUIRE(batch.requested == 300);
  REQUIRE(batch.excluded_nonfinite > 0);
  REQUIRE(batch.rewards.size() + batch.excluded_nonfinite == 300);
  REQUIRE(batch.baseline == Catch::Approx(1.0));
  REQUIRE(batch.deltas.size() == batch.rewards.size());
  for (size_t i = 0; i < batch.rewards.size(); ++i) {
    REQUIRE(std::isfinite(batch.rewards[i]));
    REQUIRE(batch.deltas[i] ==
            Catch::Approx(batch.rewards[i] - 1.0).margin(1e-14));
  }

  // A non-finite center is an error, not an exclusion.
  const Objective broken(
      1, [](const Eigen::VectorXd&) {
        return std::numeric_limits<double>::infinity();
      });
  Eigen::VectorXd c1(1);
  c1 << 0.0;
  REQUIRE_THROWS(generate_batch(broken, c1, 0.1, 10, StreamKey(506u)));
}

TEST_CASE("batch draws are order independent") {
  QuadraticLandscape land(Spectrum({1.0, 0.3}), 1.0);
  Eigen::VectorXd center(2);
  center << 0.2, -0.4;
  const StreamKey key = StreamKey(507u).child("batch", 0);
  const auto big = generate_batch(land.objective(), center, 0.5, 50, key);
  const auto small = generate_batch(land.objective(), center, 0.5, 20, key);
  // The first 20 candidates are identical: candidate k only depends on key.
  for (size_t i = 0; i < 20; ++i)
    REQUIRE(big.rewards[i] == small.rewards[i]);
}

TEST_CASE("summary assembles curve, saturation, and tails coherently") {
  auto rng = derive_stream(StreamKey(508u).child("sum", 0));
  QuadraticLandscape land(Spectrum({1.0, 0.5, 0.1}), 1.0);
  Eigen::VectorXd center(3);
  center << 0.5, 0.0, -0.5;
  const auto batch = generate_batch(land.objective(), center, 0.3, 120,
                                    StreamKey(508u).child("batch", 0));
  const std::vector<int> pops = {1, 2, 4, 8, 16};
  const auto summary = summarize_best_of_n(batch, pops, {0.5, 0.9},
                                           StreamKey(508u).child("s", 0), 400);
  REQUIRE(summary.sample_size == static_cast<int>(batch.deltas.size()));
  REQUIRE(summary.curve.size() == pops.size());
  for (size_t i = 0; i < pops.size(); ++i) {
    REQUIRE(summary.curve[i].population == pops[i]);
    REQUIRE(summary.curve[i].expected_best_delta ==
            Catch::Approx(best_of_n_exact(batch.deltas, pops[i]))
                .margin(1e-12));
    REQUIRE(summary.curve[i].bootstrap_se > 0.0);
  }
  REQUIRE(summary.improvement.sample_size == summary.sample_size);
  REQUIRE(summary.tails.size() == 2);

  // Saturation: smallest N reaching 90% of the mean-to-max span, checked
  // against a direct scan of the full curve.
  const auto curve = best_of_n_curve(batch.deltas,
                                     static_cast<int>(batch.deltas.size()));
  const double target = curve.back() - 0.1 * (curve.back() - curve.front());
  int expect = static_cast<int>(batch.deltas.size());
  for (int n = 1; n <= static_cast<int>(curve.size()); ++n) {
    if (curve[static_cast<size_t>(n - 1)] >= target) {
      expect = n;
      break;
    }
  }
  REQUIRE(summary.saturation_population == expect);
  REQUIRE(summary.headroom_valid);
  REQUIRE(summary.headroom == Catch::Approx(1.0 - batch.baseline));

  REQUIRE_THROWS(summarize_best_of_n(batch, {1000}, {0.5},
                                     StreamKey(509u), 100));
  REQUIRE_THROWS(summarize_best_of_n(batch, {}, {0.5}, StreamKey(509u), 100));
}
