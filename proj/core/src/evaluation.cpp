// Copyright (c) 2026 flowode contributors
// SPDX-License-Identifier: Apache-2.0

#include "flowode/evaluation.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "flowode/parallel.hpp"
#include "flowode/rng.hpp"

namespace flowode {

namespace {

double spectral_norm_sym(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
      0.5 * (a + a.transpose().eval()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

double min_eig_sym(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
      0.5 * (a + a.transpose().eval()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

struct MeanSe {
  double mean = 0;
  double se = 0;
};

MeanSe mean_se(const Eigen::VectorXd& v) {
  const double n = static_cast<double>(v.size());
  const double mean = v.mean();
  if (v.size() < 2) return {mean, 0.0};
  const double var = (v.array() - mean).square().sum() / (n - 1.0);
  return {mean, std::sqrt(var / n)};
}

}  // namespace

double aggregate_eps_sc(const std::vector<KErrorRow>& rows,
                        const Schedule& schedule) {
  double acc = 0;
  for (const auto& r : rows)
    acc += (1.0 - schedule.cum_alpha[r.k - 1]) * r.eps2_sc;
  return std::sqrt(acc / schedule.K());
}

double aggregate_eps_jcb(const std::vector<KErrorRow>& rows,
                         const Schedule& schedule) {
  double acc = 0;
  for (const auto& r : rows)
    acc += (1.0 - schedule.cum_alpha[r.k - 1]) * r.eps_jcb;
  return acc / schedule.K();
}

std::string ScoreErrorReport::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "k,eps2_sc,se_sc,eps_jcb,se_jcb,mc\n";
  for (const auto& r : per_k)
    os << r.k << ',' << r.eps2_sc << ',' << r.se_sc << ',' << r.eps_jcb << ','
       << r.se_jcb << ',' << r.mc << '\n';
  return os.str();
}

ScoreErrorReport score_errors(const Dataset& data, const GaussianMixture& m,
                              const Schedule& schedule,
                              const std::vector<int>& ks, std::int64_t mc,
                              std::uint64_t seed,
                              const ScoreOptions& options) {
  m.validate();
  if (m.dim() != data.d())
    throw std::invalid_argument("oracle and dataset dimension mismatch");
  if (mc < 100) throw std::invalid_argument("score_errors needs mc >= 100");

  ScoreErrorReport rep;
  rep.K = schedule.K();

  for (std::size_t ki = 0; ki < ks.size(); ++ki) {
    const int k = ks[ki];
    const double tk = schedule.t_of_k(k);
    const double a = schedule.cum_alpha[k - 1];
    const double root_a = std::sqrt(a);

    const Eigen::MatrixXd z = oracle_sample(
        m, tk, mc, seed + 1315423911ull * static_cast<std::uint64_t>(k));
    Eigen::VectorXd sq_err(mc), jcb_err(mc);

    parallel_for(mc, [&](std::int64_t b, std::int64_t e) {
      for (std::int64_t i = b; i < e; ++i) {
        const Eigen::VectorXd zv = z.row(i).transpose();
        const Eigen::VectorXd x = root_a * zv;
        const ScoreEval est = score_vp(data, x, k, schedule, options);
        const OracleEval oracle = oracle_eval(m, zv, tk);
        const Eigen::VectorXd s_true = oracle.s / root_a;
        const Eigen::MatrixXd j_true = oracle.J / a;
        sq_err[i] = (est.s - s_true).squaredNorm();
        jcb_err[i] = spectral_norm_sym(est.J - j_true);
      }
    });

    const MeanSe sc = mean_se(sq_err);
    const MeanSe jc = mean_se(jcb_err);
    rep.per_k.push_back({k, sc.mean, sc.se, jc.mean, jc.se, mc});
  }

  rep.eps_sc = aggregate_eps_sc(rep.per_k, schedule);
  rep.eps_jcb = aggregate_eps_jcb(rep.per_k, schedule);
  return rep;
}

double score_error_ve(const Dataset& data, const GaussianMixture& m, double t,
                      std::int64_t mc, std::uint64_t seed,
                      const ScoreOptions& options, double* se_out) {
  m.validate();
  if (mc < 2) throw std::invalid_argument("score_error_ve needs mc >= 2");
  const Eigen::MatrixXd z = oracle_sample(m, t, mc, seed);
  Eigen::VectorXd sq_err(mc);
  parallel_for(mc, [&](std::int64_t b, std::int64_t e) {
    for (std::int64_t i = b; i < e; ++i) {
      const Eigen::VectorXd zv = z.row(i).transpose();
      const ScoreEval est = score_ve(data, zv, t, options);
      const OracleEval oracle = oracle_eval(m, zv, t);
      sq_err[i] = (est.s - oracle.s).squaredNorm();
    }
  });
  const MeanSe s = mean_se(sq_err);
  if (se_out) *se_out = s.se;
  return s.mean;
}

Grid Grid::make_1d(double lo, double hi, int bins) {
  if (!(hi > lo) || bins < 1) throw std::invalid_argument("bad 1d grid");
  Grid g;
  g.d = 1;
  g.lo[0] = lo;
  g.hi[0] = hi;
  g.bins[0] = bins;
  g.bins[1] = 1;
  return g;
}

Grid Grid::make_2d(double lo0, double hi0, int bins0, double lo1, double hi1,
                   int bins1) {
  if (!(hi0 > lo0) || !(hi1 > lo1) || bins0 < 1 || bins1 < 1)
    throw std::invalid_argument("bad 2d grid");
  Grid g;
  g.d = 2;
  g.lo[0] = lo0;
  g.hi[0] = hi0;
  g.bins[0] = bins0;
  g.lo[1] = lo1;
  g.hi[1] = hi1;
  g.bins[1] = bins1;
  return g;
}

Grid Grid::for_mixture(const GaussianMixture& m, double t, int bins) {
  m.validate();
  const int d = m.dim();
  if (d > 2)
    throw std::invalid_argument("histogram grids support d <= 2 only");
  const double spread = 6.0 * std::sqrt(m.variances.maxCoeff() + t);
  if (bins <= 0) bins = (d == 1) ? 512 : 128;
  Grid g;
  g.d = d;
  for (int j = 0; j < d; ++j) {
    g.lo[j] = m.means.col(j).minCoeff() - spread;
    g.hi[j] = m.means.col(j).maxCoeff() + spread;
    g.bins[j] = bins;
  }
  if (d == 1) g.bins[1] = 1;
  return g;
}

std::int64_t Grid::cell_count() const {
  return static_cast<std::int64_t>(bins[0]) * (d == 2 ? bins[1] : 1);
}

namespace {

constexpr int kMidpointSub = 8;  // per-axis subdivision for analytic masses

// Histogram masses normalized by the total sample count; out-of-grid mass
// reduces coverage.
std::pair<Eigen::VectorXd, double> sample_masses(const Eigen::MatrixXd& s,
                                                 const Grid& grid) {
  if (s.rows() == 0) throw std::invalid_argument("empty sample set");
  if (s.cols() != grid.d)
    throw std::invalid_argument("sample dimension does not match grid");
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(grid.cell_count());
  std::int64_t inside = 0;
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    std::int64_t flat = 0;
    bool ok = true;
    for (int j = 0; j < grid.d; ++j) {
      const double w = (grid.hi[j] - grid.lo[j]) / grid.bins[j];
      const double rel = (s(i, j) - grid.lo[j]) / w;
      if (rel < 0 || s(i, j) > grid.hi[j]) {
        ok = false;
        break;
      }
      std::int64_t b = static_cast<std::int64_t>(rel);
      if (b >= grid.bins[j]) b = grid.bins[j] - 1;  // right edge inclusive
      flat = flat * grid.bins[j] + b;
    }
    if (ok) {
      mass[flat] += 1.0;
      ++inside;
    }
  }
  mass /= static_cast<double>(s.rows());
  return {mass, static_cast<double>(inside) / static_cast<double>(s.rows())};
}

std::pair<Eigen::VectorXd, double> analytic_masses(const GaussianMixture& m,
                                                   double t,
                                                   const Grid& grid) {
  if (m.dim() != grid.d)
    throw std::invalid_argument("mixture dimension does not match grid");
  const std::int64_t cells = grid.cell_count();
  Eigen::VectorXd mass(cells);
  const double w0 = (grid.hi[0] - grid.lo[0]) / grid.bins[0];
  const double w1 = grid.d == 2 ? (grid.hi[1] - grid.lo[1]) / grid.bins[1] : 1;

  parallel_for(cells, [&](std::int64_t b, std::int64_t e) {
    Eigen::VectorXd x(grid.d);
    for (std::int64_t c = b; c < e; ++c) {
      const std::int64_t b0 = grid.d == 2 ? c / grid.bins[1] : c;
      const std::int64_t b1 = grid.d == 2 ? c % grid.bins[1] : 0;
      double acc = 0;
      for (int u = 0; u < kMidpointSub; ++u) {
        x[0] = grid.lo[0] + w0 * (static_cast<double>(b0) +
                                  (u + 0.5) / kMidpointSub);
        if (grid.d == 1) {
          acc += oracle_eval(m, x, t).p;
        } else {
          for (int v = 0; v < kMidpointSub; ++v) {
            x[1] = grid.lo[1] + w1 * (static_cast<double>(b1) +
                                      (v + 0.5) / kMidpointSub);
            acc += oracle_eval(m, x, t).p;
          }
        }
      }
      const double subcells =
          grid.d == 1 ? kMidpointSub : kMidpointSub * kMidpointSub;
      mass[c] = acc / subcells * (grid.d == 1 ? w0 : w0 * w1);
    }
  });
  return {mass, mass.sum()};
}

TVReport tv_from_masses(Eigen::VectorXd ma, double cov_a, Eigen::VectorXd mb,
                        double cov_b, const std::string& method,
                        double threshold) {
  if (cov_a < threshold || cov_b < threshold) {
    std::ostringstream os;
    os << "grid covers only " << std::min(cov_a, cov_b) * 100
       << "% of the mass (need " << threshold * 100 << "%)";
    throw std::invalid_argument(os.str());
  }
  TVReport rep;
  rep.tv = 0.5 * (ma - mb).cwiseAbs().sum();
  rep.tv = std::min(rep.tv, 1.0);
  rep.method = method;
  rep.coverage_a = cov_a;
  rep.coverage_b = cov_b;
  return rep;
}

}  // namespace

TVReport tv_histogram(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                      const Grid& grid, double coverage_threshold) {
  auto [ma, ca] = sample_masses(a, grid);
  auto [mb, cb] = sample_masses(b, grid);
  return tv_from_masses(std::move(ma), ca, std::move(mb), cb, "histogram",
                        coverage_threshold);
}

TVReport tv_histogram(const Eigen::MatrixXd& a, const GaussianMixture& m,
                      double t, const Grid& grid, double coverage_threshold) {
  auto [ma, ca] = sample_masses(a, grid);
  auto [mb, cb] = analytic_masses(m, t, grid);
  return tv_from_masses(std::move(ma), ca, std::move(mb), cb,
                        "analytic-vs-histogram", coverage_threshold);
}

TVReport tv_analytic(const GaussianMixture& ma, double ta,
                     const GaussianMixture& mb, double tb, const Grid& grid,
                     double coverage_threshold) {
  auto [xa, ca] = analytic_masses(ma, ta, grid);
  auto [xb, cb] = analytic_masses(mb, tb, grid);
  return tv_from_masses(std::move(xa), ca, std::move(xb), cb,
                        "analytic-vs-analytic", coverage_threshold);
}

RateFit rate_fit(const Eigen::VectorXd& xs, const Eigen::VectorXd& ys) {
  if (xs.size() != ys.size())
    throw std::invalid_argument("rate_fit needs matching lengths");
  if (xs.size() < 4)
    throw std::invalid_argument("rate_fit needs at least 4 points");
  for (Eigen::Index i = 0; i < xs.size(); ++i)
    if (!(xs[i] > 0) || !(ys[i] > 0))
      throw std::invalid_argument("rate_fit needs strictly positive values");

  const Eigen::ArrayXd lx = xs.array().log();
  const Eigen::ArrayXd ly = ys.array().log();
  const double mx = lx.mean();
  const double my = ly.mean();
  const double sxx = ((lx - mx) * (lx - mx)).sum();
  const double sxy = ((lx - mx) * (ly - my)).sum();

  RateFit fit;
  fit.xs = xs;
  fit.ys = ys;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  const double syy = ((ly - my) * (ly - my)).sum();
  const Eigen::ArrayXd resid = ly - (fit.intercept + fit.slope * lx);
  fit.r2 = syy > 0 ? 1.0 - resid.square().sum() / syy : 1.0;
  return fit;
}

PsdAuditReport psd_audit(const Dataset& data, const Schedule& schedule,
                         std::int64_t points, std::uint64_t seed,
                         const ScoreOptions& options) {
  if (points < 1) throw std::invalid_argument("psd_audit needs points >= 1");
  const int d = data.d();
  const int K = schedule.K();
  const std::int64_t n_eff = options.n_override.value_or(data.n());

  // Radius that safely lands in the zero regime.
  const double data_radius = data.points().rowwise().norm().maxCoeff();

  Eigen::VectorXd min_eigs(points);
  std::vector<int> regimes(static_cast<std::size_t>(points));

  parallel_for(points, [&](std::int64_t b, std::int64_t e) {
    for (std::int64_t i = b; i < e; ++i) {
      Philox rng(seed, static_cast<std::uint64_t>(i));
      const int k = 1 + static_cast<int>(rng.next_u64() %
                                         static_cast<std::uint64_t>(K));
      const double tk = schedule.t_of_k(k);
      const double a = schedule.cum_alpha[k - 1];
      const double root_t = std::sqrt(tk);

      // Bulk draw around a random training point.
      Eigen::VectorXd z(d);
      const Eigen::Index row = static_cast<Eigen::Index>(
          rng.next_u64() % static_cast<std::uint64_t>(data.n()));
      for (int j = 0; j < d; ++j)
        z[j] = data.points()(row, j) + root_t * rng.next_gaussian();

      const int kind = static_cast<int>(i % 3);
      if (kind == 1) {
        // Far tail: guaranteed below the threshold band.
        Eigen::VectorXd dir(d);
        for (int j = 0; j < d; ++j) dir[j] = rng.next_gaussian();
        const double nrm = dir.norm();
        if (nrm > 0) dir /= nrm;
        z = dir * (data_radius + root_t * (50.0 + 10.0 * rng.next_double()));
      } else if (kind == 2) {
        // Band point: bisect the kernel density along the segment from the
        // bulk point to the far tail until it lands inside (eta/2, eta).
        const double eta = threshold_eta(n_eff, tk, d);
        Eigen::VectorXd dir(d);
        for (int j = 0; j < d; ++j) dir[j] = rng.next_gaussian();
        if (dir.norm() == 0) dir.setOnes();
        dir /= dir.norm();
        Eigen::VectorXd lo_pt = z;
        Eigen::VectorXd hi_pt = z + dir * (2.0 * data_radius + root_t * 60.0);
        auto density = [&](const Eigen::VectorXd& q) {
          return score_ve(data, q, tk, options).kernel.p;
        };
        if (density(lo_pt) >= eta && density(hi_pt) <= 0.5 * eta) {
          for (int it = 0; it < 80; ++it) {
            const Eigen::VectorXd mid = 0.5 * (lo_pt + hi_pt);
            const double p = density(mid);
            if (p >= eta) {
              lo_pt = mid;
            } else if (p <= 0.5 * eta) {
              hi_pt = mid;
            } else {
              z = mid;
              break;
            }
          }
        }
      }

      const Eigen::VectorXd x = std::sqrt(a) * z;
      const ScoreEval ev = score_vp(data, x, k, schedule, options);
      const Eigen::MatrixXd shifted =
          ev.J + Eigen::MatrixXd::Identity(d, d) / (1.0 - a);
      min_eigs[i] = min_eig_sym(shifted);
      regimes[static_cast<std::size_t>(i)] = static_cast<int>(ev.regime);
    }
  });

  PsdAuditReport rep;
  rep.points = points;
  rep.min_eig = min_eigs.minCoeff();
  rep.pass = rep.min_eig >= -1e-8;
  for (int r : regimes) {
    if (r == static_cast<int>(Regime::above)) ++rep.count_above;
    if (r == static_cast<int>(Regime::band)) ++rep.count_band;
    if (r == static_cast<int>(Regime::below)) ++rep.count_below;
  }
  return rep;
}

std::vector<BiasRow> bias_vs_tau(const GaussianMixture& m,
                                 const std::vector<double>& taus,
                                 double alpha1, const Grid& grid) {
  m.validate();
  if (!(alpha1 > 0) || alpha1 > 1)
    throw std::invalid_argument("bias_vs_tau needs alpha1 in (0, 1]");
  std::vector<BiasRow> out;
  for (double tau : taus) {
    if (!(1.0 - alpha1 + tau > 0) || !(1.0 - alpha1 + tau < 1))
      throw std::invalid_argument(
          "bias_vs_tau needs 0 < 1 - alpha1 + tau < 1");
    const double t = (1.0 - alpha1) / alpha1 + tau;
    const TVReport tv = tv_analytic(m, 0.0, m, t, grid);
    out.push_back({tau, t, tv.tv});
  }
  return out;
}

}  // namespace flowode
