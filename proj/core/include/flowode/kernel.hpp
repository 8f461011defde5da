// Copyright (c) 2026 flowode contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "flowode/dataset.hpp"

namespace flowode {

/// Density, gradient, and second-moment kernel statistics at one query
/// point. For the exact path truncation_error_bound is 0; the truncated
/// path certifies |dp| <= bound, |dg_j| <= bound/sqrt(t), |dH_jl| <= bound/t
/// against the exact sums.
struct KernelEval {
  double p = 0;
  Eigen::VectorXd g;
  Eigen::MatrixXd H;
  double t = 0;
  double truncation_error_bound = 0;
};

enum class KernelMode { exact, truncated };

struct KernelOptions {
  KernelMode mode = KernelMode::exact;
  double eps = 1e-10;  // truncated-mode absolute density tolerance
};

struct TruncationStats {
  std::uint64_t kernel_evals = 0;  // kernel terms actually computed
  std::uint64_t queries = 0;
};

/// Isotropic Gaussian density (2*pi*t)^{-d/2} exp(-|x|^2 / (2t)).
/// Values below 1e-300 flush to zero, matching the summation paths.
double gaussian_kernel(const Eigen::VectorXd& x, double t);

/// Uniform-grid spatial index over the dataset. Cells are addressed by
/// floor(x/edge) per axis; a ball query walks the occupied cells and keeps
/// those whose bounding box intersects the ball. Candidates are returned in
/// ascending dataset order, so a radius that covers everything reproduces
/// the exact summation order bit for bit.
class GridIndex {
 public:
  GridIndex(const Dataset& data, double cell_edge);

  std::vector<std::int64_t> query_ball(const Eigen::VectorXd& x,
                                       double r2) const;
  std::int64_t cell_count() const {
    return static_cast<std::int64_t>(cells_.size());
  }
  double cell_edge() const { return edge_; }

 private:
  struct Cell {
    std::int64_t begin, end;  // range into perm_
    Eigen::Index coord_row;   // row into coords_
  };
  double edge_ = 0;
  int d_ = 0;
  std::vector<std::int64_t> perm_;
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> coords_;
  std::vector<Cell> cells_;
};

/// Recommended index for bandwidth t (cell edge sqrt(t)).
GridIndex make_grid_index(const Dataset& data, double t);

/// Dimensionless cutoff u for a normalized tolerance eps_norm =
/// eps * (2*pi*t)^{d/2}; points farther than u*sqrt(t) may be skipped.
double truncation_cutoff_u(double eps_norm);

/// sup over v >= u of max(1, v^2) * exp(-v^2/2): the per-unit-mass envelope
/// of a skipped point's contribution to p (and, after the 1/sqrt(t) and 1/t
/// scalings, to g and H).
double truncation_bound_factor(double u);

/// Exact kernel sums over the full dataset in dataset order with blocked
/// accumulation; bitwise reproducible for a given dataset.
KernelEval eval_exact(const Dataset& data, const Eigen::VectorXd& x, double t);

/// Truncated evaluation through a spatial index. The certified deviation
/// bound is recorded in the result and never exceeds eps.
KernelEval eval_truncated(const Dataset& data, const GridIndex& index,
                          const Eigen::VectorXd& x, double t, double eps,
                          TruncationStats* stats = nullptr);

/// Independent per-row evaluation of all queries (parallel over rows;
/// results equal the single-point calls bitwise).
std::vector<KernelEval> batch_eval(const Dataset& data,
                                   const Eigen::MatrixXd& xs, double t,
                                   const KernelOptions& options = {},
                                   TruncationStats* stats = nullptr);

namespace detail {

/// Shared per-query accumulation core. `subset` restricts the summation to
/// the given ascending dataset rows; empty span with use_all=true sums over
/// the whole dataset. Sums are divided by n (the full dataset size).
struct KernelSums {
  double p = 0;
  Eigen::VectorXd g;
  Eigen::MatrixXd H;
  std::uint64_t evals = 0;
};

KernelSums accumulate(const Dataset& data,
                      const std::vector<std::int64_t>* subset,
                      const Eigen::VectorXd& x, double t, bool with_H);

}  // namespace detail

}  // namespace flowode
