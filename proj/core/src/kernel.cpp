// Copyright (c) 2026 flowode contributors
// SPDX-License-Identifier: Apache-2.0

#include "flowode/kernel.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "flowode/parallel.hpp"

namespace flowode {

namespace {

constexpr double kTermFloor = 1e-300;
constexpr Eigen::Index kBlock = 1024;

double kernel_norm(int d, double t) {
  return std::pow(2.0 * std::numbers::pi * t, -0.5 * double(d));
}

void require_query(const Dataset& data, const Eigen::VectorXd& x, double t) {
  if (!(t > 0)) throw std::invalid_argument("kernel eval needs t > 0");
  if (x.size() != data.d())
    throw std::invalid_argument("query dimension mismatch");
}

}  // namespace

double gaussian_kernel(const Eigen::VectorXd& x, double t) {
  if (!(t > 0)) throw std::invalid_argument("gaussian_kernel needs t > 0");
  const double v = kernel_norm(static_cast<int>(x.size()), t) *
                   std::exp(-x.squaredNorm() / (2.0 * t));
  return v < kTermFloor ? 0.0 : v;
}

namespace detail {

// One query against one dataset: fixed block size, dataset order, per-block
// Eigen reductions. Both the exact and the truncated paths run through here,
// so equal point sets give bitwise equal results.
KernelSums accumulate(const Dataset& data,
                      const std::vector<std::int64_t>* subset,
                      const Eigen::VectorXd& x, double t, bool with_H) {
  const Eigen::MatrixXd& pts = data.points();
  const int d = data.d();
  const std::int64_t total =
      subset ? static_cast<std::int64_t>(subset->size()) : data.n();
  const double inv2t = 0.5 / t;
  const double norm = kernel_norm(d, t);

  KernelSums out;
  out.g = Eigen::VectorXd::Zero(d);
  out.H = Eigen::MatrixXd::Zero(d, d);

  Eigen::ArrayXd sq(kBlock), w(kBlock), wd(kBlock);
  Eigen::MatrixXd diff(kBlock, d);

  double p_acc = 0;
  Eigen::VectorXd g_acc = Eigen::VectorXd::Zero(d);
  Eigen::MatrixXd h_acc = Eigen::MatrixXd::Zero(d, d);

  for (std::int64_t b = 0; b < total; b += kBlock) {
    const Eigen::Index len =
        static_cast<Eigen::Index>(std::min<std::int64_t>(kBlock, total - b));
    if (subset) {
      for (Eigen::Index m = 0; m < len; ++m)
        diff.row(m) = pts.row(static_cast<Eigen::Index>(
                          (*subset)[static_cast<std::size_t>(b + m)])) -
                      x.transpose();
    } else {
      diff.topRows(len) = pts.middleRows(static_cast<Eigen::Index>(b), len)
                              .rowwise() -
                          x.transpose();
    }
    if (len < kBlock) diff.bottomRows(kBlock - len).setZero();

    sq = diff.rowwise().squaredNorm().array();
    w = (sq * (-inv2t)).exp() * norm;
    if (len < kBlock) w.tail(kBlock - len).setZero();
    w = (w < kTermFloor).select(0.0, w);

    p_acc += w.sum();
    for (int j = 0; j < d; ++j) {
      wd = w * diff.col(j).array();
      g_acc[j] += wd.sum();
      if (with_H) {
        for (int l = 0; l <= j; ++l)
          h_acc(j, l) += (wd * diff.col(l).array()).sum();
      }
    }
    out.evals += static_cast<std::uint64_t>(len);
  }

  const double n = static_cast<double>(data.n());
  out.p = p_acc / n;
  out.g = g_acc / (n * t);
  if (with_H) {
    out.H = h_acc / (n * t * t);
    for (int j = 0; j < d; ++j)
      for (int l = j + 1; l < d; ++l) out.H(j, l) = out.H(l, j);
  }
  return out;
}

}  // namespace detail

GridIndex::GridIndex(const Dataset& data, double cell_edge)
    : edge_(cell_edge), d_(data.d()) {
  if (!(cell_edge > 0))
    throw std::invalid_argument("grid index needs a positive cell edge");
  const Eigen::MatrixXd& pts = data.points();
  const std::int64_t n = data.n();

  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> point_cells(
      n, d_);
  for (std::int64_t i = 0; i < n; ++i)
    for (int j = 0; j < d_; ++j)
      point_cells(i, j) =
          static_cast<std::int64_t>(std::floor(pts(i, j) / edge_));

  perm_.resize(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) perm_[static_cast<std::size_t>(i)] = i;
  std::sort(perm_.begin(), perm_.end(),
            [&](std::int64_t a, std::int64_t b) {
              for (int j = 0; j < d_; ++j) {
                if (point_cells(a, j) != point_cells(b, j))
                  return point_cells(a, j) < point_cells(b, j);
              }
              return a < b;
            });

  std::vector<Eigen::Index> coord_rows;
  std::int64_t begin = 0;
  for (std::int64_t i = 1; i <= n; ++i) {
    const bool boundary =
        (i == n) ||
        [&] {
          for (int j = 0; j < d_; ++j)
            if (point_cells(perm_[std::size_t(i)], j) !=
                point_cells(perm_[std::size_t(begin)], j))
              return true;
          return false;
        }();
    if (boundary) {
      cells_.push_back({begin, i, static_cast<Eigen::Index>(cells_.size())});
      coord_rows.push_back(static_cast<Eigen::Index>(perm_[std::size_t(begin)]));
      begin = i;
    }
  }
  coords_.resize(static_cast<Eigen::Index>(cells_.size()), d_);
  for (std::size_t c = 0; c < cells_.size(); ++c)
    coords_.row(static_cast<Eigen::Index>(c)) =
        point_cells.row(coord_rows[c]);
}

std::vector<std::int64_t> GridIndex::query_ball(const Eigen::VectorXd& x,
                                                double r2) const {
  std::vector<std::int64_t> out;
  for (const Cell& cell : cells_) {
    double m = 0;
    for (int j = 0; j < d_; ++j) {
      const double lo = static_cast<double>(coords_(cell.coord_row, j)) * edge_;
      const double hi = lo + edge_;
      if (x[j] < lo) {
        const double dlt = lo - x[j];
        m += dlt * dlt;
      } else if (x[j] > hi) {
        const double dlt = x[j] - hi;
        m += dlt * dlt;
      }
      if (m > r2) break;
    }
    if (m <= r2)
      out.insert(out.end(), perm_.begin() + cell.begin,
                 perm_.begin() + cell.end);
  }
  std::sort(out.begin(), out.end());
  return out;
}

GridIndex make_grid_index(const Dataset& data, double t) {
  if (!(t > 0)) throw std::invalid_argument("grid index needs t > 0");
  return GridIndex(data, std::sqrt(t));
}

double truncation_cutoff_u(double eps_norm) {
  if (!(eps_norm > 0))
    throw std::invalid_argument("truncation tolerance must be positive");
  if (eps_norm >= 1.0) return 0.0;
  double u2 = 2.0 * std::log(1.0 / eps_norm);
  for (int it = 0; it < 64; ++it) {
    const double next = 2.0 * std::log(std::max(u2, 1.0) / eps_norm);
    if (std::abs(next - u2) < 1e-12 * std::max(1.0, u2)) {
      u2 = next;
      break;
    }
    u2 = next;
  }
  double u = std::sqrt(u2);
  while (truncation_bound_factor(u) > eps_norm) u = std::sqrt(u * u + 0.5);
  return u;
}

double truncation_bound_factor(double u) {
  const double u2 = u * u;
  if (u2 >= 2.0) return u2 * std::exp(-0.5 * u2);
  return std::max(std::exp(-0.5 * u2), 2.0 / std::numbers::e);
}

KernelEval eval_exact(const Dataset& data, const Eigen::VectorXd& x,
                      double t) {
  require_query(data, x, t);
  detail::KernelSums s = detail::accumulate(data, nullptr, x, t, true);
  return KernelEval{s.p, std::move(s.g), std::move(s.H), t, 0.0};
}

KernelEval eval_truncated(const Dataset& data, const GridIndex& index,
                          const Eigen::VectorXd& x, double t, double eps,
                          TruncationStats* stats) {
  require_query(data, x, t);
  if (!(eps > 0)) throw std::invalid_argument("eps must be positive");

  const double norm = kernel_norm(data.d(), t);
  const double u = truncation_cutoff_u(eps / norm);
  const double bound = norm * truncation_bound_factor(u);

  std::vector<std::int64_t> candidates;
  if (u > 0) {
    const double r2 = u * u * t;
    candidates = index.query_ball(x, r2);
  }
  detail::KernelSums s =
      detail::accumulate(data, &candidates, x, t, true);
  if (stats) {
    stats->kernel_evals += s.evals;
    stats->queries += 1;
  }
  return KernelEval{s.p, std::move(s.g), std::move(s.H), t,
                    std::min(bound, eps)};
}

std::vector<KernelEval> batch_eval(const Dataset& data,
                                   const Eigen::MatrixXd& xs, double t,
                                   const KernelOptions& options,
                                   TruncationStats* stats) {
  if (xs.cols() != data.d())
    throw std::invalid_argument("query dimension mismatch");
  const std::int64_t m = xs.rows();
  std::vector<KernelEval> out(static_cast<std::size_t>(m));

  if (options.mode == KernelMode::exact) {
    parallel_for(m, [&](std::int64_t b, std::int64_t e) {
      for (std::int64_t i = b; i < e; ++i)
        out[static_cast<std::size_t>(i)] =
            eval_exact(data, xs.row(i).transpose(), t);
    });
    if (stats) {
      stats->kernel_evals +=
          static_cast<std::uint64_t>(m) * static_cast<std::uint64_t>(data.n());
      stats->queries += static_cast<std::uint64_t>(m);
    }
    return out;
  }

  const GridIndex index = make_grid_index(data, t);
  std::vector<TruncationStats> partial(
      static_cast<std::size_t>(thread_count()) + 1);
  std::atomic<std::size_t> slot{0};
  parallel_for(m, [&](std::int64_t b, std::int64_t e) {
    TruncationStats local;
    for (std::int64_t i = b; i < e; ++i)
      out[static_cast<std::size_t>(i)] = eval_truncated(
          data, index, xs.row(i).transpose(), t, options.eps, &local);
    partial[slot.fetch_add(1)] = local;
  });
  if (stats) {
    for (const auto& p : partial) {
      stats->kernel_evals += p.kernel_evals;
      stats->queries += p.queries;
    }
  }
  return out;
}

}  // namespace flowode
