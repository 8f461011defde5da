// Copyright (c) 2026 flowode contributors
// SPDX-License-Identifier: Apache-2.0

#include "flowode/score.hpp"

#include <cmath>
#include <memory>
#include <numbers>
#include <stdexcept>

#include "flowode/parallel.hpp"

namespace flowode {

namespace {

constexpr double kExpClamp = 700.0;

double clamp_exp_arg(double a) {
  return std::min(kExpClamp, std::max(-kExpClamp, a));
}

KernelEval run_kernel(const Dataset& data, const Eigen::VectorXd& x, double t,
                      const ScoreOptions& opt) {
  if (opt.kernel.mode == KernelMode::exact) return eval_exact(data, x, t);
  if (opt.index != nullptr)
    return eval_truncated(data, *opt.index, x, t, opt.kernel.eps);
  const GridIndex index = make_grid_index(data, t);
  return eval_truncated(data, index, x, t, opt.kernel.eps);
}

// Density and gradient only; skips the second-moment reductions that the
// score vector never uses.
detail::KernelSums run_kernel_pg(const Dataset& data, const Eigen::VectorXd& x,
                                 double t, const ScoreOptions& opt) {
  if (opt.kernel.mode == KernelMode::exact || opt.index == nullptr)
    return detail::accumulate(data, nullptr, x, t, false);
  const double norm =
      std::pow(2.0 * std::numbers::pi * t, -0.5 * double(data.d()));
  const double u = truncation_cutoff_u(opt.kernel.eps / norm);
  std::vector<std::int64_t> subset;
  if (u > 0) subset = opt.index->query_ball(x, u * u * t);
  return detail::accumulate(data, &subset, x, t, false);
}

}  // namespace

double threshold_eta(std::int64_t n, double t, int d) {
  if (n < 2) throw std::invalid_argument("threshold needs n >= 2");
  if (!(t > 0)) throw std::invalid_argument("threshold needs t > 0");
  return std::log(static_cast<double>(n)) /
         (static_cast<double>(n) *
          std::pow(2.0 * std::numbers::pi * t, 0.5 * double(d)));
}

double soft_threshold(double x, double eta) {
  if (!(eta > 0)) throw std::invalid_argument("soft_threshold needs eta > 0");
  if (x >= eta) return 1.0;
  if (x <= 0.5 * eta) return 0.0;
  const double u = 2.0 * x / eta;  // in (1, 2)
  const double a = (3.0 - 2.0 * u) / ((u - 1.0) * (2.0 - u));
  return 1.0 / (1.0 + std::exp(clamp_exp_arg(a)));
}

double soft_threshold_deriv(double x, double eta) {
  if (!(eta > 0)) throw std::invalid_argument("soft_threshold needs eta > 0");
  if (x >= eta || x <= 0.5 * eta) return 0.0;
  const double u = 2.0 * x / eta;
  const double den = (u - 1.0) * (2.0 - u);
  const double a = (3.0 - 2.0 * u) / den;
  // sigma(a) * sigma(-a) = e^a / (1 + e^a)^2 decays fast enough to dominate
  // the rational blow-up at the band edges.
  const double sig = 1.0 / (1.0 + std::exp(clamp_exp_arg(a)));
  const double rational = (2.0 * u * u - 6.0 * u + 5.0) / (den * den);
  return sig * (1.0 - sig) * rational * (2.0 / eta);
}

ScoreEval score_ve(const Dataset& data, const Eigen::VectorXd& x, double t,
                   const ScoreOptions& options) {
  if (data.n() < 2) throw std::invalid_argument("score needs n >= 2");
  const std::int64_t n_eff = options.n_override.value_or(data.n());
  const double eta = threshold_eta(n_eff, t, data.d());

  ScoreEval ev;
  ev.kernel = run_kernel(data, x, t, options);
  const int d = data.d();
  const double p = ev.kernel.p;

  if (p <= 0.5 * eta) {
    ev.regime = Regime::below;
    ev.psi = 0;
    ev.psi_prime = 0;
    ev.s = Eigen::VectorXd::Zero(d);
    ev.J = Eigen::MatrixXd::Zero(d, d);
    return ev;
  }

  const Eigen::VectorXd& g = ev.kernel.g;
  const Eigen::MatrixXd& H = ev.kernel.H;
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);

  if (p >= eta) {
    ev.regime = Regime::above;
    ev.psi = 1;
    ev.psi_prime = 0;
    ev.s = g / p;
    ev.J = -eye / t + H / p - ev.s * ev.s.transpose();
    return ev;
  }

  ev.regime = Regime::band;
  ev.psi = soft_threshold(p, eta);
  ev.psi_prime = soft_threshold_deriv(p, eta);
  const Eigen::VectorXd plug = g / p;  // p > eta/2 > 0 here
  ev.s = plug * ev.psi;
  ev.J = (-eye / t + H / p - plug * plug.transpose()) * ev.psi +
         (g * g.transpose() / p) * ev.psi_prime;
  return ev;
}

ScoreEval score_vp(const Dataset& data, const Eigen::VectorXd& x, int k,
                   const Schedule& schedule, const ScoreOptions& options) {
  const double a = schedule.cum_alpha[k - 1];  // t_of_k validates the range
  const double tk = schedule.t_of_k(k);
  const double root_a = std::sqrt(a);
  ScoreEval ev = score_ve(data, x / root_a, tk, options);
  ev.s /= root_a;
  ev.J /= a;
  return ev;
}

Eigen::MatrixXd score_vp_batch(const Dataset& data, const Eigen::MatrixXd& xs,
                               int k, const Schedule& schedule,
                               const ScoreOptions& options) {
  if (xs.cols() != data.d())
    throw std::invalid_argument("query dimension mismatch");
  const double tk = schedule.t_of_k(k);

  // One index per step is enough; queries share the bandwidth.
  std::unique_ptr<GridIndex> index;
  ScoreOptions opt = options;
  if (opt.kernel.mode == KernelMode::truncated && opt.index == nullptr) {
    index = std::make_unique<GridIndex>(data, std::sqrt(tk));
    opt.index = index.get();
  }

  const double a = schedule.cum_alpha[k - 1];
  const double root_a = std::sqrt(a);
  const std::int64_t n_eff = opt.n_override.value_or(data.n());
  const double eta = threshold_eta(n_eff, tk, data.d());

  Eigen::MatrixXd out(xs.rows(), xs.cols());
  parallel_for(xs.rows(), [&](std::int64_t b, std::int64_t e) {
    for (std::int64_t i = b; i < e; ++i) {
      const Eigen::VectorXd z = xs.row(i).transpose() / root_a;
      const detail::KernelSums ks = run_kernel_pg(data, z, tk, opt);
      if (ks.p <= 0.5 * eta) {
        out.row(i).setZero();
        continue;
      }
      // Same operation order as score_vp so the rows match it bitwise.
      Eigen::VectorXd s = ks.g / ks.p;
      if (ks.p < eta) s *= soft_threshold(ks.p, eta);
      s /= root_a;
      out.row(i) = s.transpose();
    }
  });
  return out;
}

}  // namespace flowode
