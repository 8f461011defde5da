// Copyright (c) 2026 flowode contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <string>

namespace flowode {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Point matrices travel as headerless CSV (one row per point, d columns,
/// '.' decimal) or as a raw little-endian binary: 16-byte header
/// ("FLOWODE1", u32 n, u32 d) followed by n*d float64 values, row-major.
Eigen::MatrixXd load_matrix_csv(const std::string& path);
void save_matrix_csv(const Eigen::MatrixXd& m, const std::string& path);

Eigen::MatrixXd load_matrix_binary(const std::string& path);
void save_matrix_binary(const Eigen::MatrixXd& m, const std::string& path);

/// Dispatches on extension: ".bin" / ".f64" binary, anything else CSV.
Eigen::MatrixXd load_matrix_auto(const std::string& path);
void save_matrix_auto(const Eigen::MatrixXd& m, const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace flowode
