// Copyright (c) 2026 flowode contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>

namespace flowode {

/// Isotropic Gaussian-mixture target with closed-form smoothed densities,
/// scores, Jacobians, and kernel second moments. Serves as the ground truth
/// that estimators and samplers are judged against.
///
/// sigma_sub and beta_nominal are metadata: the nominal subgaussian
/// parameter and the smoothness label used by rate-fit defaults.
struct GaussianMixture {
  Eigen::VectorXd weights;   // nonnegative, sums to 1
  Eigen::MatrixXd means;     // one component mean per row
  Eigen::VectorXd variances; // per-component isotropic variance
  double sigma_sub = 1.0;
  double beta_nominal = 2.0;

  int dim() const { return static_cast<int>(means.cols()); }
  int components() const { return static_cast<int>(means.rows()); }

  /// Throws std::invalid_argument on shape mismatch, negative weights or
  /// variances, or weights not summing to 1 within 1e-12.
  void validate() const;

  /// Closed-form second moment E|X|^2 of the tau-smoothed target.
  double second_moment(double tau = 0) const;

  static GaussianMixture standard_gaussian(int d, double sigma2 = 1.0);

  /// JSON document with keys weights, means, variances, sigma_sub,
  /// beta_nominal. means is an array of d-length arrays.
  static GaussianMixture from_json_text(const std::string& text);
  static GaussianMixture load(const std::string& path);
  std::string to_json_text() const;
  void save(const std::string& path) const;
};

/// Smoothed-target quantities at one point: density p_t, score s_t, score
/// Jacobian J_t, kernel-weighted moment vector g_t = p_t * s_t, and the
/// second-moment matrix H_t = p_t (J_t + I/t + s_t s_t^T). H is computed
/// through an independent per-component closed form, not that rearrangement,
/// so the algebraic relation is testable. H is only defined for t > 0 and is
/// left zero at t = 0.
struct OracleEval {
  double p = 0;
  double logp = 0;
  Eigen::VectorXd s;
  Eigen::VectorXd g;
  Eigen::MatrixXd J;
  Eigen::MatrixXd H;
};

/// Evaluates the mixture smoothed by noise variance t (componentwise
/// variance sigma_i^2 + t). Throws for a degenerate component with
/// sigma_i^2 + t = 0. Log-density uses max-shifted log-sum-exp; the score is
/// a responsibility-weighted combination of component scores.
OracleEval oracle_eval(const GaussianMixture& m, const Eigen::VectorXd& x,
                       double t);

/// count i.i.d. draws of Z_0 + sqrt(t) * W, one per row, keyed by
/// (seed, row) so results are independent of evaluation order.
Eigen::MatrixXd oracle_sample(const GaussianMixture& m, double t,
                              std::int64_t count, std::uint64_t seed);

/// Self-normalized importance-sampling estimate of
/// (1/t) E[Z_0 - x | Z_t = x] with weights phi_t(Z_0 - x).
struct TweedieCheck {
  Eigen::VectorXd estimate;
  Eigen::VectorXd se;  // delta-method standard error per component
  double ess = 0;      // effective sample size of the weights
  bool reliable = false;  // ess >= 10
};

TweedieCheck tweedie_mc_check(const GaussianMixture& m,
                              const Eigen::VectorXd& x, double t,
                              std::int64_t mc, std::uint64_t seed);

}  // namespace flowode
