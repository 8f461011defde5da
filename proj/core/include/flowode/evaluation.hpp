// Copyright (c) 2026 flowode contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "flowode/dataset.hpp"
#include "flowode/mixture.hpp"
#include "flowode/schedule.hpp"
#include "flowode/score.hpp"

namespace flowode {

/// Per-step estimation errors against the oracle, with Monte-Carlo standard
/// errors so tolerances can be z-scored.
struct KErrorRow {
  int k = 0;
  double eps2_sc = 0;  // mean squared score error at step k
  double se_sc = 0;
  double eps_jcb = 0;  // mean spectral-norm Jacobian error at step k
  double se_jcb = 0;
  std::int64_t mc = 0;
};

struct ScoreErrorReport {
  std::vector<KErrorRow> per_k;
  double eps_sc = 0;   // sqrt((1/K) sum (1-cum_alpha_k) eps2_sc_k)
  double eps_jcb = 0;  // (1/K) sum (1-cum_alpha_k) eps_jcb_k
  int K = 0;

  std::string to_csv() const;  // header k,eps2_sc,se_sc,eps_jcb,se_jcb,mc
};

/// Aggregation used by ScoreErrorReport, exposed for direct testing against
/// hand-computed sequences. Sums range over the rows provided and normalize
/// by K.
double aggregate_eps_sc(const std::vector<KErrorRow>& rows,
                        const Schedule& schedule);
double aggregate_eps_jcb(const std::vector<KErrorRow>& rows,
                         const Schedule& schedule);

/// For each requested step k, draws mc points distributed as the forward
/// chain at step k (sqrt(cum_alpha_k) times the t_k-smoothed target) and
/// measures the estimator against the oracle. Spectral norms come from a
/// symmetric eigensolve.
ScoreErrorReport score_errors(const Dataset& data, const GaussianMixture& m,
                              const Schedule& schedule,
                              const std::vector<int>& ks, std::int64_t mc,
                              std::uint64_t seed,
                              const ScoreOptions& options = {});

/// Fixed-bandwidth variance-exploding score error
/// E|s_hat_t(Z_t) - s_t(Z_t)|^2, the quantity whose decay in n the rate
/// studies track. se_out (optional) receives the Monte-Carlo SE.
double score_error_ve(const Dataset& data, const GaussianMixture& m, double t,
                      std::int64_t mc, std::uint64_t seed,
                      const ScoreOptions& options = {},
                      double* se_out = nullptr);

/// Rectangular histogram grid for d <= 2.
struct Grid {
  int d = 1;
  double lo[2] = {0, 0};
  double hi[2] = {0, 0};
  int bins[2] = {0, 0};

  static Grid make_1d(double lo, double hi, int bins);
  static Grid make_2d(double lo0, double hi0, int bins0, double lo1,
                      double hi1, int bins1);
  /// +/- 6 sqrt(max variance + t) around the component means, 512 bins in
  /// d=1 and 128^2 in d=2.
  static Grid for_mixture(const GaussianMixture& m, double t, int bins = 0);

  std::int64_t cell_count() const;
};

struct TVReport {
  double tv = 0;
  std::string method;
  double coverage_a = 0;
  double coverage_b = 0;
};

/// Total variation over the grid: half the sum of per-cell mass
/// differences. Both coverages must reach the threshold (default 99.9%) or
/// the call throws. Analytic cell masses integrate the density by the
/// midpoint rule on an 8-fold subdivision per axis.
TVReport tv_histogram(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                      const Grid& grid, double coverage_threshold = 0.999);
TVReport tv_histogram(const Eigen::MatrixXd& a, const GaussianMixture& m,
                      double t, const Grid& grid,
                      double coverage_threshold = 0.999);
TVReport tv_analytic(const GaussianMixture& ma, double ta,
                     const GaussianMixture& mb, double tb, const Grid& grid,
                     double coverage_threshold = 0.999);

/// Ordinary least squares of log(y) on log(x). Requires >= 4 strictly
/// positive pairs.
struct RateFit {
  Eigen::VectorXd xs, ys;
  double slope = 0;
  double intercept = 0;
  double r2 = 0;
};

RateFit rate_fit(const Eigen::VectorXd& xs, const Eigen::VectorXd& ys);

/// Minimum eigenvalue of J_k(x) + I/(1-cum_alpha_k) over a sampling set that
/// spans all three estimator regimes (bulk draws, far-tail points, and
/// band points found by bisection).
struct PsdAuditReport {
  double min_eig = 0;
  bool pass = false;  // min_eig >= -1e-8
  std::int64_t points = 0;
  std::int64_t count_above = 0;
  std::int64_t count_band = 0;
  std::int64_t count_below = 0;
};

PsdAuditReport psd_audit(const Dataset& data, const Schedule& schedule,
                         std::int64_t points, std::uint64_t seed,
                         const ScoreOptions& options = {});

/// Initialization bias table: TV between the target and its smoothed
/// version at t = (1-alpha1)/alpha1 + tau, analytic on both sides.
struct BiasRow {
  double tau = 0;
  double t = 0;
  double tv = 0;
};

std::vector<BiasRow> bias_vs_tau(const GaussianMixture& m,
                                 const std::vector<double>& taus,
                                 double alpha1, const Grid& grid);

}  // namespace flowode
