// Copyright (c) 2026 flowode contributors
// SPDX-License-Identifier: Apache-2.0

#include "flowode/dataset.hpp"

#include <stdexcept>

namespace flowode {

Dataset::Dataset(Eigen::MatrixXd points) : points_(std::move(points)) {
  if (points_.rows() < 1 || points_.cols() < 1)
    throw std::invalid_argument("dataset needs n >= 1 and d >= 1");
  if (!points_.allFinite())
    throw std::invalid_argument("dataset contains non-finite entries");
}

}  // namespace flowode
