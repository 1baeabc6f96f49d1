#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "support.hpp"
#include "varcurv/landscape.hpp"
#include "varcurv/stochastics.hpp"

using namespace varcurv;

TEST_CASE("spectrum sorts descending and rejects bad values") {
  Spectrum s({0.05, 1.0, 0.5});
  REQUIRE(s.dimension() == 3);
  REQUIRE(s[0] == 1.0);
  REQUIRE(s[1] == 0.5);
  REQUIRE(s[2] == 0.05);
  REQUIRE_THROWS_AS(Spectrum({-1.0}), std::invalid_argument);
  REQUIRE_THROWS_AS(Spectrum({std::nan("")}), std::invalid_argument);
}

TEST_CASE("quadratic value and gradient match hand evaluation") {
  QuadraticLandscape land(Spectrum({2.0, 0.5}), 1.0);
  Eigen::VectorXd x(2);
  x << 1.0, 2.0;
  // 1 - 0.5 (2*1 + 0.5*4) = 1 - 2 = -1
  REQUIRE(land.value(x) == Catch::Approx(-1.0).margin(1e-14));
  const Eigen::VectorXd g = land.gradient(x);
  REQUIRE(g(0) == Catch::Approx(-2.0).margin(1e-14));
  REQUIRE(g(1) == Catch::Approx(-1.0).margin(1e-14));
  REQUIRE(land.value(Eigen::VectorXd::Zero(2)) == 1.0);
}

TEST_CASE("gradient agrees with central finite differences") {
  auto rng = derive_stream(StreamKey(3u).child("fd", 0));
  QuadraticLandscape land(Spectrum({1.0, 0.3, 0.05}), 2.0);
  Eigen::VectorXd x(3);
  for (int i = 0; i < 3; ++i) x(i) = rng.gaussian();
  const Eigen::VectorXd g = land.gradient(x);
  const double h = 1e-6;
  for (int i = 0; i < 3; ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    const double fd = (land.value(xp) - land.value(xm)) / (2.0 * h);
    REQUIRE(g(i) == Catch::Approx(fd).margin(1e-7));
  }
}

TEST_CASE("rotated landscape is the unrotated one in disguise") {
  auto rng = derive_stream(StreamKey(21u).child("rot", 0));
  const int d = 6;
  const Eigen::MatrixXd q = test_support::random_orthogonal(d, rng);
  Spectrum spec({1.0, 0.8, 0.4, 0.2, 0.1, 0.05});
  Eigen::VectorXd offset(d);
  for (int i = 0; i < d; ++i) offset(i) = rng.gaussian();

  QuadraticLandscape plain(spec, 1.0);
  QuadraticLandscape rotated(spec, 1.0, offset, q);

  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd y(d);
    for (int i = 0; i < d; ++i) y(i) = rng.gaussian();
    const Eigen::VectorXd theta = offset + q * y;
    REQUIRE(rotated.value(theta) ==
            Catch::Approx(plain.value(y)).margin(1e-12));
    // Gradients map through the basis: grad_theta = Q grad_y.
    const Eigen::VectorXd gt = rotated.gradient(theta);
    const Eigen::VectorXd gy = plain.gradient(y);
    REQUIRE((gt - q * gy).norm() < 1e-12);
    // Modes recover the eigenbasis displacement.
    REQUIRE((rotated.to_modes(theta) - y).norm() < 1e-12);
  }
}

TEST_CASE("curvature matrix eigenvalues equal the spectrum") {
  auto rng = derive_stream(StreamKey(22u).child("curv", 0));
  const int d = 5;
  const Eigen::MatrixXd q = test_support::random_orthogonal(d, rng);
  Spectrum spec({1.5, 1.0, 0.5, 0.2, 0.1});
  QuadraticLandscape land(spec, 0.0, Eigen::VectorXd::Zero(d), q);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(land.curvature_matrix());
  for (int i = 0; i < d; ++i) {
    // Eigen sorts ascending, the spectrum descending.
    REQUIRE(es.eigenvalues()(i) ==
            Catch::Approx(spec[d - 1 - i]).margin(1e-10));
  }
}

TEST_CASE("two block factory places the right counts") {
  const auto land = make_two_block({128, 16, 1.0, 0.05});
  REQUIRE(land.dimension() == 128);
  const auto& vals = land.spectrum().values();
  int hi = 0;
  int lo = 0;
  for (double v : vals) {
    if (v == 1.0) ++hi;
    if (v == 0.05) ++lo;
  }
  REQUIRE(hi == 16);
  REQUIRE(lo == 112);
  REQUIRE_THROWS_AS(make_two_block({10, 0, 1.0, 0.05}),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(make_two_block({10, 11, 1.0, 0.05}),
                    std::invalid_argument);
}

TEST_CASE("objective evaluates noiselessly and noisily") {
  QuadraticLandscape land(Spectrum({1.0}), 1.0);
  const Objective clean = land.objective();
  Eigen::VectorXd x(1);
  x << 2.0;
  REQUIRE(clean.value(x) == Catch::Approx(-1.0));
  REQUIRE_FALSE(clean.has_noise());

  const Objective noisy = land.objective(0.5);
  REQUIRE(noisy.has_noise());
  auto rng = derive_stream(StreamKey(1u).child("obj", 0));
  RunningMoments m;
  for (int i = 0; i < 20000; ++i) m.add(noisy.evaluate(x, &rng));
  REQUIRE(std::abs(m.mean() + 1.0) < 5.0 * m.standard_error());
  REQUIRE(std::sqrt(m.variance()) == Catch::Approx(0.5).epsilon(0.05));
}

TEST_CASE("double well geometry: minima, saddle, barrier, curvatures") {
  DoubleWellLandscape well(2.0, 1.5);
  REQUIRE(well.dimension() == 1);
  Eigen::VectorXd at_min(1), at_saddle(1);
  at_min << 1.5;
  at_saddle << 0.0;
  REQUIRE(well.loss(at_min) == Catch::Approx(0.0).margin(1e-14));
  // Barrier k a^4 / 4 = 2 * 1.5^4 / 4 = 2.53125.
  REQUIRE(well.loss(at_saddle) == Catch::Approx(2.53125).margin(1e-12));
  REQUIRE(well.barrier() == Catch::Approx(2.53125).margin(1e-12));
  at_min << -1.5;
  REQUIRE(well.loss(at_min) == Catch::Approx(0.0).margin(1e-14));

  // L''(a) = 2 k a^2 = 9, L''(0) = -k a^2 = -4.5.
  REQUIRE(well.curvature_at_minimum() == Catch::Approx(9.0));
  REQUIRE(well.curvature_at_saddle() == Catch::Approx(-4.5));

  // Gradient of the loss vanishes at the three stationary points.
  for (double x : {-1.5, 0.0, 1.5})
    REQUIRE(well.loss_grad_1d(x) == Catch::Approx(0.0).margin(1e-14));

  // Finite-difference check of loss_grad_1d away from stationary points.
  const double h = 1e-6;
  for (double x : {-2.0, -0.7, 0.4, 1.1}) {
    const double fd = (well.loss_1d(x + h) - well.loss_1d(x - h)) / (2 * h);
    REQUIRE(well.loss_grad_1d(x) == Catch::Approx(fd).margin(1e-6));
  }
}

TEST_CASE("double well with extra curvature directions") {
  DoubleWellLandscape well(1.0, 1.0, {0.5, 2.0});
  REQUIRE(well.dimension() == 3);
  Eigen::VectorXd x(3);
  x << 1.0, 2.0, 1.0;
  // 0 + 0.5*0.5*4 + 0.5*2*1 = 2.0
  REQUIRE(well.loss(x) == Catch::Approx(2.0).margin(1e-13));
  const Eigen::VectorXd g = well.reward_gradient(x);
  REQUIRE(g(0) == Catch::Approx(0.0).margin(1e-14));
  REQUIRE(g(1) == Catch::Approx(-1.0).margin(1e-14));
  REQUIRE(g(2) == Catch::Approx(-2.0).margin(1e-14));
  REQUIRE(well.reward(x) == Catch::Approx(-well.loss(x)));
}
