// Copyright (c) 2026 flowode contributors
// SPDX-License-Identifier: Apache-2.0

#include "flowode/kernel.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <numbers>

#include <doctest.h>

#include "flowode/mixture.hpp"
#include "flowode/rng.hpp"

using namespace flowode;

namespace {

GaussianMixture two_bump_2d() {
  GaussianMixture m;
  m.weights = Eigen::Vector2d(0.6, 0.4);
  m.means = Eigen::MatrixXd(2, 2);
  m.means << -1.0, 0.5, 1.5, -0.5;
  m.variances = Eigen::Vector2d(0.5, 0.8);
  m.sigma_sub = 3.0;
  return m;
}

double peak(int d, double t) {
  return std::pow(2.0 * std::numbers::pi * t, -0.5 * d);
}

}  // namespace

TEST_CASE("gaussian kernel point values") {
  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(1);
  CHECK(gaussian_kernel(x0, 1.0) == doctest::Approx(0.3989423).epsilon(1e-6));

  Eigen::VectorXd x2 = Eigen::VectorXd::Zero(2);
  CHECK(gaussian_kernel(x2, 2.0) == doctest::Approx(0.0795775).epsilon(1e-6));

  Eigen::VectorXd x1 = Eigen::VectorXd::Ones(1);
  CHECK(gaussian_kernel(x1, 1.0) == doctest::Approx(0.2419707).epsilon(1e-6));

  CHECK_THROWS_AS(gaussian_kernel(x1, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(gaussian_kernel(x1, -1.0), std::invalid_argument);
}

TEST_CASE("exact eval on degenerate datasets") {
  // Single point at the query: p is the kernel peak, g and H vanish.
  Eigen::MatrixXd one(1, 2);
  one << 0.3, -0.2;
  const Dataset data(one);
  Eigen::VectorXd x(2);
  x << 0.3, -0.2;
  const KernelEval ev = eval_exact(data, x, 0.7);
  CHECK(ev.p == doctest::Approx(peak(2, 0.7)).epsilon(1e-14));
  CHECK(ev.g.norm() == 0.0);
  CHECK(ev.H.norm() == 0.0);
  CHECK(ev.truncation_error_bound == 0.0);

  // Two symmetric points: the gradient cancels, H keeps the kernel mass.
  Eigen::MatrixXd two(2, 1);
  two << 1.0, -1.0;
  const Dataset sym(two);
  Eigen::VectorXd origin = Eigen::VectorXd::Zero(1);
  const KernelEval es = eval_exact(sym, origin, 1.0);
  CHECK(es.p == doctest::Approx(0.2419707).epsilon(1e-6));
  CHECK(std::abs(es.g[0]) < 1e-18);
  CHECK(es.H(0, 0) == doctest::Approx(0.2419707).epsilon(1e-6));
}

TEST_CASE("gradient and hessian identities by finite differences") {
  const GaussianMixture m = two_bump_2d();
  const Dataset data(oracle_sample(m, 0.0, 400, 99));
  const double t = 0.35;
  const double h = 1e-5 * std::sqrt(t);
  const double hh = 1e-4 * std::sqrt(t);

  Philox rng(123, 0);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd x(2);
    x << 2.5 * rng.next_gaussian(), 2.5 * rng.next_gaussian();
    const KernelEval ev = eval_exact(data, x, t);

    // g = grad p by central differences.
    Eigen::VectorXd g_fd(2);
    for (int j = 0; j < 2; ++j) {
      Eigen::VectorXd xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      g_fd[j] = (eval_exact(data, xp, t).p - eval_exact(data, xm, t).p) /
                (2.0 * h);
    }
    const double gscale = std::max(ev.g.norm(), 1e-12 * peak(2, t));
    CHECK((g_fd - ev.g).norm() <= 1e-6 * gscale);

    // H = hess p + (p/t) I.
    Eigen::MatrixXd hess(2, 2);
    for (int j = 0; j < 2; ++j) {
      Eigen::VectorXd xp = x, xm = x;
      xp[j] += hh;
      xm[j] -= hh;
      hess(j, j) = (eval_exact(data, xp, t).p - 2.0 * ev.p +
                    eval_exact(data, xm, t).p) /
                   (hh * hh);
    }
    Eigen::VectorXd xpp = x, xpm = x, xmp = x, xmm = x;
    xpp[0] += hh;
    xpp[1] += hh;
    xpm[0] += hh;
    xpm[1] -= hh;
    xmp[0] -= hh;
    xmp[1] += hh;
    xmm[0] -= hh;
    xmm[1] -= hh;
    hess(0, 1) = hess(1, 0) =
        (eval_exact(data, xpp, t).p - eval_exact(data, xpm, t).p -
         eval_exact(data, xmp, t).p + eval_exact(data, xmm, t).p) /
        (4.0 * hh * hh);

    const Eigen::MatrixXd h_ref =
        hess + ev.p / t * Eigen::MatrixXd::Identity(2, 2);
    const double hscale = std::max(ev.H.norm(), 1e-12 * peak(2, t) / t);
    CHECK((h_ref - ev.H).norm() <= 1e-4 * hscale);
  }
}

TEST_CASE("kernel eval bounds and structure") {
  const GaussianMixture m = two_bump_2d();
  const Dataset data(oracle_sample(m, 0.0, 300, 5));
  Philox rng(7, 0);
  for (int trial = 0; trial < 1000; ++trial) {
    const double t = std::exp(-2.0 + 4.0 * rng.next_double());
    Eigen::VectorXd x(2);
    x << 4.0 * rng.next_gaussian(), 4.0 * rng.next_gaussian();
    const KernelEval ev = eval_exact(data, x, t);

    CHECK(ev.p <= peak(2, t) * (1.0 + 1e-12));
    CHECK(ev.g.norm() <=
          peak(2, t) / std::sqrt(std::numbers::e * t) * (1.0 + 1e-12));
    CHECK((ev.H - ev.H.transpose()).norm() <= 1e-12 * (1.0 + ev.H.norm()));
    // H is a nonnegative combination of rank-one terms.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(ev.H);
    CHECK(es.eigenvalues().minCoeff() >= -1e-12 * (1.0 + ev.H.norm()));
  }
}

TEST_CASE("density estimator is unbiased against the oracle") {
  const GaussianMixture m = two_bump_2d();
  Eigen::VectorXd x(2);
  x << 0.25, 0.1;
  const double t = 0.4;
  const double truth = oracle_eval(m, x, t).p;

  const int datasets = 200;
  const int n = 300;
  Eigen::VectorXd vals(datasets);
  for (int r = 0; r < datasets; ++r) {
    const Dataset data(oracle_sample(m, 0.0, n, 1000 + r));
    vals[r] = eval_exact(data, x, t).p;
  }
  const double mean = vals.mean();
  const double sd = std::sqrt((vals.array() - mean).square().sum() /
                              (datasets - 1.0));
  const double se = sd / std::sqrt(double(datasets));
  CHECK(std::abs(mean - truth) <= 3.0 * se);
}

TEST_CASE("truncated eval respects its certified bound") {
  const GaussianMixture m = two_bump_2d();
  const Dataset data(oracle_sample(m, 0.0, 500, 21));
  Philox rng(77, 0);
  for (double eps : {1e-4, 1e-8, 1e-12}) {
    for (int trial = 0; trial < 25; ++trial) {
      const double t = std::exp(-3.0 + 5.0 * rng.next_double());
      const GridIndex index = make_grid_index(data, t);
      Eigen::VectorXd x(2);
      x << 6.0 * rng.next_gaussian(), 6.0 * rng.next_gaussian();
      const KernelEval ex = eval_exact(data, x, t);
      const KernelEval tr = eval_truncated(data, index, x, t, eps);
      const double b = tr.truncation_error_bound;
      CHECK(b <= eps);
      CHECK(std::abs(tr.p - ex.p) <= b);
      CHECK((tr.g - ex.g).cwiseAbs().maxCoeff() <= b / std::sqrt(t));
      CHECK((tr.H - ex.H).cwiseAbs().maxCoeff() <= b / t);
    }
  }
}

TEST_CASE("tiny eps reproduces exact bitwise; huge eps may return zero") {
  Eigen::MatrixXd pts(64, 1);
  Philox rng(3, 0);
  for (int i = 0; i < 64; ++i) pts(i, 0) = rng.next_gaussian();
  const Dataset data(pts);
  const double t = 1.0;
  const GridIndex index = make_grid_index(data, t);
  Eigen::VectorXd x(1);
  x << 0.25;

  // Cutoff radius for eps = 1e-16 covers the whole dataset, so the sorted
  // candidate set equals dataset order and the sums match bit for bit.
  const KernelEval ex = eval_exact(data, x, t);
  const KernelEval tr = eval_truncated(data, index, x, t, 1e-16);
  CHECK(tr.p == ex.p);
  CHECK((tr.g.array() == ex.g.array()).all());
  CHECK((tr.H.array() == ex.H.array()).all());

  const double pk = peak(1, t);
  const KernelEval zero = eval_truncated(data, index, x, t, 2.0 * pk);
  CHECK(zero.p == 0.0);
  CHECK(zero.truncation_error_bound <= 2.0 * pk);
  CHECK(std::abs(zero.p - ex.p) <= zero.truncation_error_bound);
}

TEST_CASE("batch equals single evaluation bitwise and is pure") {
  const GaussianMixture m = two_bump_2d();
  const Dataset data(oracle_sample(m, 0.0, 200, 31));
  const double t = 0.25;

  Eigen::MatrixXd xs(40, 2);
  Philox rng(15, 0);
  for (int i = 0; i < 40; ++i) {
    xs(i, 0) = 3.0 * rng.next_gaussian();
    xs(i, 1) = 3.0 * rng.next_gaussian();
  }

  const auto batch = batch_eval(data, xs, t);
  REQUIRE(batch.size() == 40);
  for (int i = 0; i < 40; ++i) {
    const KernelEval single = eval_exact(data, xs.row(i).transpose(), t);
    CHECK(batch[std::size_t(i)].p == single.p);
    CHECK((batch[std::size_t(i)].g.array() == single.g.array()).all());
    CHECK((batch[std::size_t(i)].H.array() == single.H.array()).all());
  }

  // Permuted queries give permuted outputs.
  Eigen::MatrixXd rev = xs.colwise().reverse();
  const auto batch_rev = batch_eval(data, rev, t);
  for (int i = 0; i < 40; ++i)
    CHECK(batch_rev[std::size_t(39 - i)].p == batch[std::size_t(i)].p);
}

TEST_CASE("truncation saves kernel evaluations on clustered data") {
  // Uniform data over [0,10]^2 with a small bandwidth: the cutoff ball
  // covers a few percent of the square.
  const int n = 20000;
  Eigen::MatrixXd pts(n, 2);
  Philox rng(41, 0);
  for (int i = 0; i < n; ++i) {
    pts(i, 0) = 10.0 * rng.next_double();
    pts(i, 1) = 10.0 * rng.next_double();
  }
  const Dataset data(pts);
  const double t = 0.01;
  const GridIndex index = make_grid_index(data, t);

  TruncationStats stats;
  Eigen::VectorXd x(2);
  for (int trial = 0; trial < 50; ++trial) {
    x << 10.0 * rng.next_double(), 10.0 * rng.next_double();
    const KernelEval ex = eval_exact(data, x, t);
    const KernelEval tr = eval_truncated(data, index, x, t, 1e-10, &stats);
    CHECK(std::abs(tr.p - ex.p) <= tr.truncation_error_bound);
  }
  const double exact_evals = 50.0 * n;
  CHECK(double(stats.kernel_evals) * 10.0 <= exact_evals);
}

TEST_CASE("kernel eval argument guards") {
  Eigen::MatrixXd pts(3, 2);
  pts.setZero();
  const Dataset data(pts);
  Eigen::VectorXd bad(3);
  bad.setZero();
  CHECK_THROWS_AS(eval_exact(data, bad, 1.0), std::invalid_argument);
  Eigen::VectorXd ok(2);
  ok.setZero();
  CHECK_THROWS_AS(eval_exact(data, ok, 0.0), std::invalid_argument);
  const GridIndex index = make_grid_index(data, 1.0);
  CHECK_THROWS_AS(eval_truncated(data, index, ok, 1.0, 0.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(Dataset(Eigen::MatrixXd(0, 2)), std::invalid_argument);
}
