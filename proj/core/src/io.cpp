// Copyright (c) 2026 flowode contributors
// SPDX-License-Identifier: Apache-2.0

#include "flowode/io.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "flowode/hash.hpp"

static_assert(std::endian::native == std::endian::little,
              "binary dataset format assumes a little-endian host");

namespace flowode {

namespace {

constexpr char kMagic[8] = {'F', 'L', 'O', 'W', 'O', 'D', 'E', '1'};

bool has_suffix(const std::string& s, const std::string& suf) {
  return s.size() >= suf.size() &&
         s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

}  // namespace

Eigen::MatrixXd load_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw IoError("bad numeric cell '" + cell + "' in " + path);
      }
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw IoError("ragged rows in " + path);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError("empty matrix file " + path);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(rows.front().size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return m;
}

void save_matrix_csv(const Eigen::MatrixXd& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out.precision(17);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << m(i, j);
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path);
}

Eigen::MatrixXd load_matrix_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[8];
  std::uint32_t n = 0, d = 0;
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(&n), 4);
  in.read(reinterpret_cast<char*>(&d), 4);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw IoError("bad header in " + path);
  if (n == 0 || d == 0) throw IoError("degenerate shape in " + path);
  Eigen::MatrixXd m(n, d);
  std::vector<double> buf(static_cast<std::size_t>(n) * d);
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(double)));
  if (!in) throw IoError("truncated payload in " + path);
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t j = 0; j < d; ++j)
      m(i, j) = buf[static_cast<std::size_t>(i) * d + j];
  return m;
}

void save_matrix_binary(const Eigen::MatrixXd& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  const std::uint32_t n = static_cast<std::uint32_t>(m.rows());
  const std::uint32_t d = static_cast<std::uint32_t>(m.cols());
  out.write(kMagic, 8);
  out.write(reinterpret_cast<const char*>(&n), 4);
  out.write(reinterpret_cast<const char*>(&d), 4);
  std::vector<double> buf(static_cast<std::size_t>(n) * d);
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t j = 0; j < d; ++j)
      buf[static_cast<std::size_t>(i) * d + j] = m(i, j);
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(double)));
  if (!out) throw IoError("write failed for " + path);
}

Eigen::MatrixXd load_matrix_auto(const std::string& path) {
  if (has_suffix(path, ".bin") || has_suffix(path, ".f64"))
    return load_matrix_binary(path);
  return load_matrix_csv(path);
}

void save_matrix_auto(const Eigen::MatrixXd& m, const std::string& path) {
  if (has_suffix(path, ".bin") || has_suffix(path, ".f64"))
    save_matrix_binary(m, path);
  else
    save_matrix_csv(m, path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << content;
  if (!out) throw IoError("write failed for " + path);
}

std::uint64_t fnv1a64_file(const std::string& path) {
  const std::string bytes = read_text_file(path);
  return fnv1a64(bytes.data(), bytes.size());
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace flowode
