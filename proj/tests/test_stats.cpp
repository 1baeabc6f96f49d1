#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "support.hpp"
#include "varcurv/stats.hpp"

using namespace varcurv;

namespace {

// Long-double two-pass oracle for mean and sample variance.
std::pair<double, double> two_pass_moments(const std::vector<double>& xs) {
  long double sum = 0.0L;
  for (double x : xs) sum += x;
  const long double mean = sum / xs.size();
  long double ss = 0.0L;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {static_cast<double>(mean),
          static_cast<double>(ss / (xs.size() - 1))};
}

}  // namespace

TEST_CASE("running moments match the two-pass oracle") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> normal(3.0, 2.0);
  std::vector<double> xs(5000);
  RunningMoments m;
  for (auto& x : xs) {
    x = normal(rng);
    m.add(x);
  }
  const auto [mean, var] = two_pass_moments(xs);
  REQUIRE(m.count() == xs.size());
  REQUIRE(m.mean() == Catch::Approx(mean).epsilon(1e-12));
  REQUIRE(m.variance() == Catch::Approx(var).epsilon(1e-10));
  REQUIRE(m.standard_error() ==
          Catch::Approx(std::sqrt(var / xs.size())).epsilon(1e-10));

  REQUIRE(mean_of(xs) == Catch::Approx(mean).epsilon(1e-13));
  REQUIRE(variance_of(xs) == Catch::Approx(var).epsilon(1e-12));
  REQUIRE(standard_error_of(xs) ==
          Catch::Approx(std::sqrt(var / xs.size())).epsilon(1e-12));
}

TEST_CASE("kahan summation survives an adversarial cancellation pattern") {
  // 1 followed by 1e8 copies of 1e-10 sums to 1.01 exactly in exact
  // arithmetic; naive double accumulation loses a large part of the tail.
  KahanSum s;
  s.add(1.0);
  const int n = 100000000;
  for (int i = 0; i < n; ++i) s.add(1e-10);
  REQUIRE(s.value() == Catch::Approx(1.01).epsilon(1e-12));
}

TEST_CASE("fit_line recovers an exact affine relation") {
  std::vector<double> x = {0.5, 1.0, 2.0, 4.0, 8.0};
  std::vector<double> y;
  for (double xi : x) y.push_back(3.25 * xi - 0.75);
  const LinearFit fit = fit_line(x, y);
  REQUIRE(fit.slope == Catch::Approx(3.25).margin(1e-12));
  REQUIRE(fit.intercept == Catch::Approx(-0.75).margin(1e-12));
  REQUIRE(fit.r_squared >= 1.0 - 1e-14);
  for (double r : fit.residuals) REQUIRE(std::abs(r) < 1e-12);
}

TEST_CASE("fit_line matches normal equations on noisy data") {
  std::mt19937_64 rng(29);
  std::normal_distribution<double> normal(0.0, 0.3);
  std::vector<double> x;
  std::vector<double> y;
  for (int i = 0; i < 40; ++i) {
    x.push_back(0.1 * i);
    y.push_back(1.7 * x.back() + 0.4 + normal(rng));
  }
  // Oracle: closed-form OLS from raw sums in long double.
  long double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const long double n = static_cast<long double>(x.size());
  const double slope =
      static_cast<double>((n * sxy - sx * sy) / (n * sxx - sx * sx));
  const double intercept = static_cast<double>((sy - slope * sx) / n);
  const LinearFit fit = fit_line(x, y);
  REQUIRE(fit.slope == Catch::Approx(slope).epsilon(1e-10));
  REQUIRE(fit.intercept == Catch::Approx(intercept).epsilon(1e-10));
  REQUIRE(fit.r_squared > 0.9);
  REQUIRE(fit.r_squared < 1.0);
}

TEST_CASE("fit_line rejects degenerate inputs") {
  REQUIRE_THROWS_AS(fit_line({1.0, 1.0, 1.0}, {1.0, 2.0, 3.0}),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(fit_line({1.0}, {1.0}), std::invalid_argument);
  REQUIRE_THROWS_AS(fit_line({1.0, 2.0}, {1.0}), std::invalid_argument);
}

TEST_CASE("quantile_linear interpolates between closest ranks") {
  std::vector<double> xs;
  for (int i = 1; i <= 100; ++i) xs.push_back(i);
  REQUIRE(quantile_linear(xs, 0.95) == Catch::Approx(95.05).margin(1e-12));
  REQUIRE(quantile_linear(xs, 0.0) == 1.0);
  REQUIRE(quantile_linear(xs, 1.0) == 100.0);
  REQUIRE(quantile_linear(xs, 0.5) == Catch::Approx(50.5).margin(1e-12));

  REQUIRE(quantile_linear({7.0}, 0.3) == 7.0);
  REQUIRE(quantile_linear({1.0, 3.0}, 0.25) == Catch::Approx(1.5));
  REQUIRE_THROWS_AS(quantile_linear({}, 0.5), std::invalid_argument);
  REQUIRE_THROWS_AS(quantile_linear({1.0}, 1.5), std::invalid_argument);
}

TEST_CASE("quantile_linear is invariant to input order") {
  std::vector<double> xs = {9.0, 1.0, 5.0, 3.0, 7.0};
  std::vector<double> sorted = {1.0, 3.0, 5.0, 7.0, 9.0};
  for (double level : {0.1, 0.25, 0.5, 0.9})
    REQUIRE(quantile_linear(xs, level) == quantile_linear(sorted, level));
}
