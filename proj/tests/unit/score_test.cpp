// Copyright (c) 2026 flowode contributors
// SPDX-License-Identifier: Apache-2.0

#include "flowode/score.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <numbers>

#include <doctest.h>

#include "flowode/mixture.hpp"
#include "flowode/rng.hpp"

using namespace flowode;

namespace {

// Bisection along a ray until the kernel density lands inside
// (lo_frac*eta, hi_frac*eta).
Eigen::VectorXd find_density_level(const Dataset& data, double t, double eta,
                                   double lo_frac, double hi_frac) {
  const int d = data.d();
  Eigen::VectorXd inner = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd outer = Eigen::VectorXd::Constant(d, 1.0);
  outer *= (data.points().rowwise().norm().maxCoeff() + 60.0 * std::sqrt(t)) /
           outer.norm();
  auto density = [&](const Eigen::VectorXd& q) {
    return eval_exact(data, q, t).p;
  };
  REQUIRE(density(inner) > hi_frac * eta);
  REQUIRE(density(outer) < lo_frac * eta);
  for (int it = 0; it < 200; ++it) {
    Eigen::VectorXd mid = 0.5 * (inner + outer);
    const double p = density(mid);
    if (p > hi_frac * eta)
      inner = mid;
    else if (p < lo_frac * eta)
      outer = mid;
    else
      return mid;
  }
  FAIL("density level not bracketed");
  return inner;
}

Dataset gaussian_data(int n, int d, std::uint64_t seed) {
  return Dataset(
      oracle_sample(GaussianMixture::standard_gaussian(d), 0.0, n, seed));
}

}  // namespace

TEST_CASE("soft threshold boundary values") {
  for (double eta : {1e-3, 0.2, 7.0}) {
    CHECK(soft_threshold(eta, eta) == 1.0);
    CHECK(soft_threshold(eta / 2.0, eta) == 0.0);
    CHECK(soft_threshold(0.75 * eta, eta) == 0.5);
    CHECK(soft_threshold(2.0 * eta, eta) == 1.0);
    CHECK(soft_threshold(0.0, eta) == 0.0);
    // Peak slope 4/eta at the band midpoint.
    CHECK(soft_threshold_deriv(0.75 * eta, eta) ==
          doctest::Approx(4.0 / eta).epsilon(1e-10));
    CHECK(soft_threshold_deriv(0.25 * eta, eta) == 0.0);
    CHECK(soft_threshold_deriv(1.5 * eta, eta) == 0.0);
  }
  CHECK_THROWS_AS(soft_threshold(0.5, 0.0), std::invalid_argument);
}

TEST_CASE("soft threshold derivative matches finite differences") {
  const double eta = 0.37;
  const double h = 1e-4 * eta;
  for (int i = 0; i < 100; ++i) {
    const double x = eta * (0.55 + 0.4 * (i + 0.5) / 100.0);
    const double fd =
        (soft_threshold(x + h, eta) - soft_threshold(x - h, eta)) / (2.0 * h);
    const double cf = soft_threshold_deriv(x, eta);
    CHECK(std::abs(fd - cf) <= 1e-6 * std::max(std::abs(cf), 1e-12 / eta));
  }
  // x = 0.6 eta, spelled out as in the derivative contract.
  const double x = 0.6 * eta;
  const double fd =
      (soft_threshold(x + h, eta) - soft_threshold(x - h, eta)) / (2.0 * h);
  CHECK(soft_threshold_deriv(x, eta) == doctest::Approx(fd).epsilon(1e-6));
}

TEST_CASE("soft threshold is continuous with vanishing edge slopes") {
  const double eta = 1.3;
  for (double frac : {1e-2, 1e-3, 1e-4}) {
    const double h = frac * eta;
    // Value continuity at both branch boundaries.
    CHECK(std::abs(soft_threshold(eta / 2 + h, eta)) <= 2.0 * frac);
    CHECK(std::abs(1.0 - soft_threshold(eta - h, eta)) <= 2.0 * frac);
    // One-sided difference quotients decay toward the edges.
    const double slope_lo = soft_threshold(eta / 2 + h, eta) / h;
    const double slope_hi = (1.0 - soft_threshold(eta - h, eta)) / h;
    CHECK(slope_lo <= 4.0 / eta);
    CHECK(slope_hi <= 4.0 / eta);
    if (frac <= 1e-3) {
      CHECK(slope_lo <= 1e-8 / eta);
      CHECK(slope_hi <= 1e-8 / eta);
    }
  }
  // Monotone over the whole band.
  double prev = 0.0;
  for (int i = 1; i <= 1000; ++i) {
    const double x = eta * (0.5 + 0.5 * i / 1000.0);
    const double v = soft_threshold(x, eta);
    CHECK(v >= prev);
    prev = v;
  }
}

TEST_CASE("threshold eta") {
  CHECK(threshold_eta(1000, 1.0, 1) ==
        doctest::Approx(std::log(1000.0) /
                        (1000.0 * std::sqrt(2.0 * std::numbers::pi)))
            .epsilon(1e-14));
  CHECK_THROWS_AS(threshold_eta(1, 1.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(threshold_eta(100, 0.0, 1), std::invalid_argument);
}

TEST_CASE("score regimes") {
  const Dataset data = gaussian_data(1000, 1, 17);
  const double t = 1.0;

  // Bulk: plug-in estimator, score near zero for a symmetric target.
  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(1);
  const ScoreEval bulk = score_ve(data, x0, t);
  CHECK(bulk.regime == Regime::above);
  CHECK(bulk.psi == 1.0);
  CHECK(std::abs(bulk.s[0]) < 0.1);

  // Plug-in equals the log-density gradient by finite differences.
  const double h = 1e-5;
  Eigen::VectorXd xp(1), xm(1);
  xp << 0.4 + h;
  xm << 0.4 - h;
  Eigen::VectorXd x(1);
  x << 0.4;
  const ScoreEval mid = score_ve(data, x, t);
  const double fd = (std::log(eval_exact(data, xp, t).p) -
                     std::log(eval_exact(data, xm, t).p)) /
                    (2.0 * h);
  CHECK(mid.regime == Regime::above);
  CHECK(mid.s[0] == doctest::Approx(fd).epsilon(1e-6));

  // Far tail: exact zeros, no division by the tiny density.
  Eigen::VectorXd far(1);
  far << 1e4;
  const ScoreEval tail = score_ve(data, far, t);
  CHECK(tail.regime == Regime::below);
  CHECK(tail.s[0] == 0.0);
  CHECK(tail.J(0, 0) == 0.0);

  CHECK_THROWS_AS(score_ve(data, x0, 0.0), std::invalid_argument);
  Eigen::MatrixXd tiny(1, 1);
  tiny << 0.0;
  CHECK_THROWS_AS(score_ve(Dataset(tiny), x0, 1.0), std::invalid_argument);
}

TEST_CASE("closed-form jacobian matches finite differences in all regimes") {
  const Dataset data = gaussian_data(600, 1, 23);
  const double t = 0.8;
  const double eta = threshold_eta(data.n(), t, 1);
  const double h = 1e-5 * std::sqrt(t);

  auto fd_jacobian = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd xp = x, xm = x;
    xp[0] += h;
    xm[0] -= h;
    return (score_ve(data, xp, t).s[0] - score_ve(data, xm, t).s[0]) /
           (2.0 * h);
  };

  Eigen::VectorXd bulk(1);
  bulk << 0.3;
  const ScoreEval above = score_ve(data, bulk, t);
  REQUIRE(above.regime == Regime::above);
  CHECK(above.J(0, 0) ==
        doctest::Approx(fd_jacobian(bulk)).epsilon(1e-4));

  const Eigen::VectorXd band_x =
      find_density_level(data, t, eta, 0.65, 0.85);
  const ScoreEval band = score_ve(data, band_x, t);
  REQUIRE(band.regime == Regime::band);
  CHECK(band.psi > 0.0);
  CHECK(band.psi < 1.0);
  CHECK(band.psi_prime > 0.0);
  CHECK(band.J(0, 0) ==
        doctest::Approx(fd_jacobian(band_x)).epsilon(1e-4));

  Eigen::VectorXd far(1);
  far << 500.0;
  const ScoreEval below = score_ve(data, far, t);
  REQUIRE(below.regime == Regime::below);
  CHECK(below.J(0, 0) == 0.0);
  CHECK(fd_jacobian(far) == 0.0);
}

TEST_CASE("jacobian shift J + I/t stays positive semidefinite") {
  const GaussianMixture m = GaussianMixture::standard_gaussian(2);
  const Dataset data(oracle_sample(m, 0.0, 500, 29));
  Philox rng(57, 0);
  for (int trial = 0; trial < 400; ++trial) {
    const double t = std::exp(-2.0 + 4.0 * rng.next_double());
    Eigen::VectorXd x(2);
    // Wide spread so all three regimes appear.
    x << 12.0 * rng.next_gaussian(), 12.0 * rng.next_gaussian();
    const ScoreEval ev = score_ve(data, x, t);
    CHECK((ev.J - ev.J.transpose()).norm() <= 1e-10 * (1.0 + ev.J.norm()));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
        ev.J + Eigen::MatrixXd::Identity(2, 2) / t);
    CHECK(es.eigenvalues().minCoeff() >= -1e-8);
  }
}

TEST_CASE("variance-preserving wrapper scales by the schedule") {
  const Dataset data = gaussian_data(400, 1, 31);
  const Schedule sched = build_schedule({120, 2.0, 12.0, 0.05});

  Philox rng(91, 0);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 1 + static_cast<int>(rng.next_u64() % 120);
    Eigen::VectorXd x(1);
    x << 2.0 * rng.next_gaussian();
    const double a = sched.cum_alpha[k - 1];
    const ScoreEval vp = score_vp(data, x, k, sched);
    const ScoreEval ve = score_ve(data, x / std::sqrt(a), sched.t_of_k(k));
    CHECK(vp.s[0] == doctest::Approx(ve.s[0] / std::sqrt(a)).epsilon(1e-15));
    CHECK(vp.J(0, 0) == doctest::Approx(ve.J(0, 0) / a).epsilon(1e-15));
    CHECK(vp.regime == ve.regime);
  }

  // cum_alpha = 1: the wrapper reduces to the VE evaluation at (x, tau).
  Schedule unit = sched;
  unit.cum_alpha[0] = 1.0;
  unit.t[0] = 0.05;
  Eigen::VectorXd x(1);
  x << 0.7;
  const ScoreEval vp1 = score_vp(data, x, 1, unit);
  const ScoreEval ve1 = score_ve(data, x, 0.05);
  CHECK(vp1.s[0] == ve1.s[0]);
  CHECK(vp1.J(0, 0) == ve1.J(0, 0));

  // cum_alpha = 0.25 doubles the argument and the score, quadruples J.
  Schedule quarter = sched;
  quarter.cum_alpha[0] = 0.25;
  quarter.t[0] = sched.t_of_k(1);
  const ScoreEval vpq = score_vp(data, x, 1, quarter);
  const ScoreEval veq = score_ve(data, 2.0 * x, quarter.t[0]);
  CHECK(vpq.s[0] == doctest::Approx(2.0 * veq.s[0]).epsilon(1e-15));
  CHECK(vpq.J(0, 0) == doctest::Approx(4.0 * veq.J(0, 0)).epsilon(1e-15));
}

TEST_CASE("batch scores equal single-point scores bitwise") {
  const Dataset data = gaussian_data(300, 2, 37);
  const Schedule sched = build_schedule({60, 2.0, 12.0, 0.02});
  Eigen::MatrixXd xs(25, 2);
  Philox rng(3, 1);
  for (int i = 0; i < 25; ++i) {
    xs(i, 0) = 8.0 * rng.next_gaussian();
    xs(i, 1) = 8.0 * rng.next_gaussian();
  }
  for (int k : {1, 17, 60}) {
    const Eigen::MatrixXd batch = score_vp_batch(data, xs, k, sched);
    for (int i = 0; i < 25; ++i) {
      const Eigen::VectorXd single =
          score_vp(data, xs.row(i).transpose(), k, sched).s;
      CHECK((batch.row(i).transpose().array() == single.array()).all());
    }
  }
}

TEST_CASE("n_override only changes the threshold") {
  const Dataset data = gaussian_data(500, 1, 41);
  Eigen::VectorXd x(1);
  x << 3.4;
  const double t = 0.5;
  ScoreOptions opt;
  // A huge effective n shrinks eta, pushing the point into the plug-in
  // regime; a small one pushes it below threshold.
  opt.n_override = std::int64_t{2};
  const ScoreEval lo = score_ve(data, x, t, opt);
  opt.n_override = std::int64_t{100000000};
  const ScoreEval hi = score_ve(data, x, t, opt);
  CHECK(hi.regime == Regime::above);
  CHECK(lo.regime == Regime::below);
  CHECK(hi.kernel.p == lo.kernel.p);
}
