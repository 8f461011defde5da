// Copyright (c) 2026 flowode contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <cstdint>

namespace flowode {

/// Frozen training set: n points in R^d, one per row. All estimators read
/// from it and never mutate it, so sharing across threads is safe.
class Dataset {
 public:
  Dataset() = default;

  /// Takes ownership of the matrix; throws std::invalid_argument on empty
  /// input or non-finite entries.
  explicit Dataset(Eigen::MatrixXd points);

  std::int64_t n() const { return points_.rows(); }
  int d() const { return static_cast<int>(points_.cols()); }
  const Eigen::MatrixXd& points() const { return points_; }

 private:
  Eigen::MatrixXd points_;
};

}  // namespace flowode
