#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "support.hpp"
#include "varcurv/es.hpp"
#include "varcurv/landscape.hpp"
#include "varcurv/stats.hpp"

using namespace varcurv;

namespace {

ESConfig basic_config() {
  ESConfig c;
  c.step_size = 0.1;
  c.sigma = 0.2;
  c.population = 8;
  c.horizon = 50;
  return c;
}

}  // namespace

TEST_CASE("config validation rejects bad settings") {
  ESConfig c = basic_config();
  c.step_size = 0.0;
  REQUIRE_THROWS_AS(c.validate(), std::invalid_argument);
  c = basic_config();
  c.sigma = -1.0;
  REQUIRE_THROWS_AS(c.validate(), std::invalid_argument);
  c = basic_config();
  c.population = 7;
  c.antithetic = true;
  REQUIRE_THROWS_AS(c.validate(), std::invalid_argument);
  c = basic_config();
  REQUIRE(c.kappa() == Catch::Approx(0.04 / 8));
}

TEST_CASE("trajectory has the documented shape") {
  QuadraticLandscape land(Spectrum({1.0, 0.1}), 1.0);
  Eigen::VectorXd x0(2);
  x0 << 1.0, 0.5;
  ESConfig c = basic_config();
  c.horizon = 20;
  const auto traj = run_es(land.objective(), x0, c, StreamKey(1u), 5);
  REQUIRE(traj.rewards.size() == 21);
  REQUIRE(traj.grad_norms.size() == 21);
  REQUIRE(std::isnan(traj.grad_norms.back()));
  for (size_t t = 0; t + 1 < traj.grad_norms.size(); ++t)
    REQUIRE(std::isfinite(traj.grad_norms[t]));
  // states at 0, 5, 10, 15 plus the final point at 20.
  REQUIRE(traj.states.size() == 5);
  REQUIRE(traj.states.front().iteration == 0);
  REQUIRE(traj.states.back().iteration == 20);
  REQUIRE(traj.rewards_are_clean);
  // Logged reward at recorded states equals the clean objective there.
  for (const auto& p : traj.states)
    REQUIRE(traj.rewards[static_cast<size_t>(p.iteration)] ==
            Catch::Approx(land.value(p.theta)).margin(1e-12));
}

TEST_CASE("antithetic estimator on a quadratic is exactly the paired form") {
  // For quadratic J the even parts cancel: r+ - r- = 2 sigma grad . eps,
  // so the estimate must equal (2/n) sum (grad . eps) eps with the same
  // stream-derived eps. This pins both the estimator and the stream layout.
  QuadraticLandscape land(Spectrum({1.0, 0.4, 0.05}), 1.0);
  Eigen::VectorXd theta(3);
  theta << 0.7, -1.2, 2.0;
  ESConfig c;
  c.step_size = 0.1;
  c.sigma = 0.3;
  c.population = 6;
  c.horizon = 1;
  c.antithetic = true;

  const StreamKey key = StreamKey(77u).child("grad", 0);
  const auto est = es_gradient_estimate(land.objective(), theta, c, key);

  const Eigen::VectorXd grad = land.gradient(theta);
  Eigen::VectorXd expected = Eigen::VectorXd::Zero(3);
  for (int p = 0; p < c.population / 2; ++p) {
    auto stream = derive_stream(key.child("cand", p));
    const Eigen::VectorXd eps = stream.gaussian_vector(3);
    expected += grad.dot(eps) * eps;
  }
  expected *= 2.0 / c.population;
  REQUIRE((est.gradient - expected).norm() < 1e-12);
  REQUIRE(est.rewards.size() == 6);
}

TEST_CASE("vanilla estimator is unbiased; mean baseline shrinks by 1-1/N") {
  // Gaussian smoothing leaves a quadratic's gradient unchanged, so the
  // score-function estimator has mean exactly grad J(theta). Subtracting
  // the in-batch mean couples candidate k to its own reward and shrinks
  // the mean by the factor (1 - 1/N).
  QuadraticLandscape land(Spectrum({1.0, 0.2}), 1.0);
  Eigen::VectorXd theta(2);
  theta << 1.0, -0.5;
  const Eigen::VectorXd grad = land.gradient(theta);
  ESConfig c;
  c.step_size = 0.1;
  c.sigma = 0.4;
  c.population = 16;
  c.horizon = 1;

  const StreamKey key(123u);
  for (bool baseline : {false, true}) {
    c.baseline_subtract = baseline;
    RunningMoments comp0, comp1;
    for (int k = 0; k < 20000; ++k) {
      const auto est = es_gradient_estimate(land.objective(), theta, c,
                                            key.child("rep", k));
      comp0.add(est.gradient(0));
      comp1.add(est.gradient(1));
    }
    const double factor = baseline ? 1.0 - 1.0 / c.population : 1.0;
    REQUIRE(std::abs(comp0.mean() - factor * grad(0)) <
            5.0 * comp0.standard_error());
    REQUIRE(std::abs(comp1.mean() - factor * grad(1)) <
            5.0 * comp1.standard_error());
  }
}

TEST_CASE("baseline subtraction removes reward-offset sensitivity") {
  // Same spectrum, peaks 1 and 1001. With the mean baseline the estimate
  // from identical streams must agree to rounding.
  QuadraticLandscape low(Spectrum({1.0, 0.2}), 1.0);
  QuadraticLandscape high(Spectrum({1.0, 0.2}), 1001.0);
  Eigen::VectorXd theta(2);
  theta << 0.3, 0.9;
  ESConfig c;
  c.step_size = 0.1;
  c.sigma = 0.2;
  c.population = 10;
  c.horizon = 1;
  c.baseline_subtract = true;
  const StreamKey key(5u);
  const auto a = es_gradient_estimate(low.objective(), theta, c, key);
  const auto b = es_gradient_estimate(high.objective(), theta, c, key);
  REQUIRE((a.gradient - b.gradient).norm() < 1e-9);
}

TEST_CASE("run_es improves reward on a stiff quadratic") {
  QuadraticLandscape land(Spectrum({1.0}), 1.0);
  Eigen::VectorXd x0(1);
  x0 << 2.0;
  ESConfig c;
  c.step_size = 0.2;
  c.sigma = 0.1;
  c.population = 8;
  c.horizon = 200;
  c.antithetic = true;
  const auto traj = run_es(land.objective(), x0, c, StreamKey(31u));
  REQUIRE(traj.rewards.front() == Catch::Approx(-1.0));
  // Tail average sits near the peak: deficit O(alpha sigma^2 / 2N) plus
  // estimator-direction noise, far below 0.05 at these settings.
  double tail = 0.0;
  for (int t = 150; t <= 200; ++t) tail += traj.rewards[static_cast<size_t>(t)];
  tail /= 51.0;
  REQUIRE(tail > 0.95);
}

TEST_CASE("noisy ascent replays its documented recursion exactly") {
  QuadraticLandscape land(Spectrum({1.0, 0.05}), 1.0);
  Eigen::VectorXd x0(2);
  x0 << 1.0, -1.0;
  ESConfig c;
  c.step_size = 0.1;
  c.sigma = 0.5;
  c.population = 4;
  c.horizon = 30;
  const StreamKey key = StreamKey(9u).child("na", 2);
  const auto traj = run_noisy_ascent(land, x0, c, key);

  // Oracle: replay theta' = theta + alpha grad + alpha (sigma/sqrt N) xi
  // with the same stream; rewards must match bit-for-bit.
  auto stream = derive_stream(key);
  Eigen::VectorXd theta = x0;
  const double noise_sd = c.sigma / std::sqrt(c.population);
  for (int t = 0; t <= c.horizon; ++t) {
    REQUIRE(traj.rewards[static_cast<size_t>(t)] == land.value(theta));
    if (t < c.horizon)
      theta += c.step_size * land.gradient(theta) +
               c.step_size * noise_sd * stream.gaussian_vector(2);
  }
}

TEST_CASE("evaluate_group averages observation noise") {
  const Objective noisy(
      1, [](const Eigen::VectorXd&) { return 2.0; }, 0.8);
  auto rng = derive_stream(StreamKey(44u).child("grp", 0));
  Eigen::VectorXd x(1);
  x << 0.0;
  RunningMoments m;
  for (int i = 0; i < 8000; ++i) m.add(evaluate_group(noisy, x, 16, &rng));
  REQUIRE(std::abs(m.mean() - 2.0) < 5.0 * m.standard_error());
  // Group averaging divides the variance by 16.
  const double expected_var = 0.8 * 0.8 / 16.0;
  REQUIRE(m.variance() == Catch::Approx(expected_var).epsilon(0.1));
}

TEST_CASE("non-finite rewards abort with a clear error") {
  const Objective bomb(
      1,
      [](const Eigen::VectorXd& x) {
        return x(0) > 0.5 ? std::numeric_limits<double>::quiet_NaN() : 0.0;
      },
      0.0);
  Eigen::VectorXd x0(1);
  x0 << 1.0;  // already past the threshold: reward at t=0 is NaN
  ESConfig c = basic_config();
  REQUIRE_THROWS_WITH(run_es(bomb, x0, c, StreamKey(1u)),
                      Catch::Matchers::ContainsSubstring("non-finite"));
}
