// Copyright (c) 2026 flowode contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

namespace flowode {

/// Parameters of the recursive noise schedule.
///
/// The cumulative noise sequence starts at 1 - K^{-c0} and contracts by a
/// factor controlled by c1 * log(K) / K per step. "log" is the natural
/// logarithm throughout.
struct ScheduleParams {
  int K = 0;
  double c0 = 2.0;
  double c1 = 12.0;
  double tau = 0.0;

  /// Contraction rate c1 * log(K) / K.
  double rate() const;

  /// Non-fatal issues (e.g. c1 < 5*c0, which the step-size guarantees
  /// assume). Construction proceeds; callers decide whether to surface them.
  std::vector<std::string> warnings() const;
};

/// First cumulative noise value, 1 - K^{-c0}.
double cum_alpha_first(int K, double c0);

/// One step of the cumulative-noise recursion:
/// prev - (c1 log K / K) * prev * (1 - prev).
double cum_alpha_step(double prev, int K, double c1);

/// Built schedule: cum_alpha[k-1] holds the cumulative noise for step k,
/// alpha[k-1] the per-step rate (alpha_1 = cum_alpha_1), and t[k-1] the
/// variance-exploding time (1 - cum_alpha_k) / cum_alpha_k + tau.
/// one_minus_cum_alpha carries the complement through its own recursion
/// (b_1 = K^{-c0}, b_k = b_{k-1} (1 + rate * cum_alpha_{k-1})), which keeps
/// full relative precision where 1 - cum_alpha would cancel.
/// Immutable after construction; safe to share across threads.
struct Schedule {
  Eigen::VectorXd cum_alpha;
  Eigen::VectorXd one_minus_cum_alpha;
  Eigen::VectorXd alpha;
  Eigen::VectorXd t;
  ScheduleParams params;

  int K() const { return static_cast<int>(cum_alpha.size()); }

  /// Time for 1-based step k; throws std::out_of_range otherwise.
  double t_of_k(int k) const;
};

/// Time map for an arbitrary cumulative-noise value.
double t_of_cum_alpha(double cum_alpha, double tau);

/// Builds the schedule. Throws std::invalid_argument when K < 2 or when
/// c1 log K / K >= 1 (the recursion could leave (0,1); we reject rather than
/// clamp). Throws std::runtime_error if any cum_alpha leaves (0,1) or drops
/// below 1e-300.
Schedule build_schedule(const ScheduleParams& params);

/// One inequality family of the step-size guarantees, checked for all k >= 2.
struct ScheduleCheck {
  std::string name;
  bool pass = true;
  int first_fail_k = -1;    // 1-based step of the first violation
  double worst_margin = 0;  // most positive violation amount (<= 0 when pass)
};

struct ValidationReport {
  std::vector<ScheduleCheck> checks;
  std::vector<std::string> warnings;

  bool all_pass() const;
  std::string summary() const;
};

/// Evaluates the four step-size inequalities over the whole schedule:
///   (a) 1 - alpha_k < (1-alpha_k)/(1-cum_alpha_k) <= c1 log K / K
///   (b) 1 < (1-cum_alpha_k)/(1-cum_alpha_{k-1}) <= 1 + c1 log K / K
///   (c) c1 log K / K < (1-alpha_k)/(alpha_k - cum_alpha_k) <= 2 c1 log K / K
///   (d) cum_alpha_K <= K^{-c1/4}
/// Mathematically strict inequalities can saturate to equality in doubles
/// once cum_alpha underflows the working precision, so all comparisons carry
/// a 1e-12 relative roundoff allowance. Report-only; never throws.
ValidationReport validate_schedule(const Schedule& s,
                                   const ScheduleParams& params);

}  // namespace flowode
