// Copyright (c) 2026 flowode contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>

#include "flowode/kernel.hpp"
#include "flowode/schedule.hpp"

namespace flowode {

/// Density threshold log(n) / (n * (2*pi*t)^{d/2}) separating reliable from
/// unreliable kernel estimates. Needs n >= 2 so log(n) > 0.
double threshold_eta(std::int64_t n, double t, int d);

/// Smooth bump: 1 for x >= eta, 0 for x <= eta/2, and
/// [1 + exp((1 - 2(2x/eta - 1)) / ((2x/eta - 1)(2 - 2x/eta)))]^{-1} between.
/// Branch boundaries are inclusive exactly as written (>= and <=). The
/// exponent argument is clamped to [-700, 700]; the clamp maps overflow to
/// the correct limit and keeps the function monotone.
double soft_threshold(double x, double eta);

/// d/dx of soft_threshold; zero outside (eta/2, eta). Peaks at 4/eta at
/// x = 3*eta/4.
double soft_threshold_deriv(double x, double eta);

enum class Regime { above, band, below };

struct ScoreEval {
  Eigen::VectorXd s;
  Eigen::MatrixXd J;
  Regime regime = Regime::below;
  double psi = 0;
  double psi_prime = 0;
  KernelEval kernel;
};

struct ScoreOptions {
  KernelOptions kernel;
  /// Testing hook for threshold behavior; production paths use the dataset
  /// size inside eta.
  std::optional<std::int64_t> n_override;
  /// Optional prebuilt index for truncated mode (must match the dataset).
  const GridIndex* index = nullptr;
};

/// Soft-thresholded score estimate and its closed-form Jacobian in
/// variance-exploding space. The below-regime branch returns exact zeros and
/// never divides by the density estimate.
ScoreEval score_ve(const Dataset& data, const Eigen::VectorXd& x, double t,
                   const ScoreOptions& options = {});

/// Variance-preserving wrapper for step k (1-based):
/// s_k(x) = s_ve(x/sqrt(a), t_k)/sqrt(a) and J_k(x) = J_ve(...)/a with
/// a = cum_alpha_k.
ScoreEval score_vp(const Dataset& data, const Eigen::VectorXd& x, int k,
                   const Schedule& schedule, const ScoreOptions& options = {});

/// Score vectors only, one query per row of xs, evaluated independently in
/// parallel. Equivalent to stacking score_vp(...).s row by row.
Eigen::MatrixXd score_vp_batch(const Dataset& data, const Eigen::MatrixXd& xs,
                               int k, const Schedule& schedule,
                               const ScoreOptions& options = {});

}  // namespace flowode
