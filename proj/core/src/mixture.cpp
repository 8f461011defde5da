// Copyright (c) 2026 flowode contributors
// SPDX-License-Identifier: Apache-2.0

#include "flowode/mixture.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "flowode/io.hpp"
#include "flowode/parallel.hpp"
#include "flowode/rng.hpp"

namespace flowode {

namespace {

using nlohmann::json;

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

}  // namespace

void GaussianMixture::validate() const {
  const int c = components();
  if (c < 1 || dim() < 1)
    throw std::invalid_argument("mixture needs >= 1 component and d >= 1");
  if (weights.size() != c || variances.size() != c)
    throw std::invalid_argument("mixture arrays disagree on component count");
  double sum = 0;
  for (int i = 0; i < c; ++i) {
    if (weights[i] < 0)
      throw std::invalid_argument("mixture weights must be nonnegative");
    if (variances[i] < 0)
      throw std::invalid_argument("mixture variances must be nonnegative");
    sum += weights[i];
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw std::invalid_argument("mixture weights must sum to 1");
  if (!means.allFinite())
    throw std::invalid_argument("mixture means must be finite");
}

double GaussianMixture::second_moment(double tau) const {
  double m2 = 0;
  for (int i = 0; i < components(); ++i)
    m2 += weights[i] *
          (means.row(i).squaredNorm() + dim() * variances[i]);
  return m2 + dim() * tau;
}

GaussianMixture GaussianMixture::standard_gaussian(int d, double sigma2) {
  GaussianMixture m;
  m.weights = Eigen::VectorXd::Ones(1);
  m.means = Eigen::MatrixXd::Zero(1, d);
  m.variances = Eigen::VectorXd::Constant(1, sigma2);
  m.sigma_sub = std::sqrt(8.0 / 3.0 * sigma2);
  m.beta_nominal = 2.0;
  return m;
}

GaussianMixture GaussianMixture::from_json_text(const std::string& text) {
  json j = json::parse(text);
  GaussianMixture m;
  const auto& jw = j.at("weights");
  const auto& jm = j.at("means");
  const auto& jv = j.at("variances");
  const int c = static_cast<int>(jw.size());
  if (c < 1 || jm.size() != static_cast<std::size_t>(c) ||
      jv.size() != static_cast<std::size_t>(c))
    throw std::invalid_argument("mixture spec arrays disagree");
  const int d = static_cast<int>(jm.at(0).size());
  m.weights.resize(c);
  m.variances.resize(c);
  m.means.resize(c, d);
  for (int i = 0; i < c; ++i) {
    m.weights[i] = jw.at(static_cast<std::size_t>(i)).get<double>();
    m.variances[i] = jv.at(static_cast<std::size_t>(i)).get<double>();
    const auto& row = jm.at(static_cast<std::size_t>(i));
    if (row.size() != static_cast<std::size_t>(d))
      throw std::invalid_argument("ragged mixture means");
    for (int k = 0; k < d; ++k)
      m.means(i, k) = row.at(static_cast<std::size_t>(k)).get<double>();
  }
  m.sigma_sub = j.value("sigma_sub", 1.0);
  m.beta_nominal = j.value("beta_nominal", 2.0);
  m.validate();
  return m;
}

GaussianMixture GaussianMixture::load(const std::string& path) {
  return from_json_text(read_text_file(path));
}

std::string GaussianMixture::to_json_text() const {
  json j;
  j["weights"] = std::vector<double>(weights.data(),
                                     weights.data() + weights.size());
  json means_json = json::array();
  for (int i = 0; i < components(); ++i) {
    json row = json::array();
    for (int k = 0; k < dim(); ++k) row.push_back(means(i, k));
    means_json.push_back(row);
  }
  j["means"] = means_json;
  j["variances"] = std::vector<double>(variances.data(),
                                       variances.data() + variances.size());
  j["sigma_sub"] = sigma_sub;
  j["beta_nominal"] = beta_nominal;
  return j.dump(2) + "\n";
}

void GaussianMixture::save(const std::string& path) const {
  write_text_file(path, to_json_text());
}

OracleEval oracle_eval(const GaussianMixture& m, const Eigen::VectorXd& x,
                       double t) {
  m.validate();
  if (x.size() != m.dim())
    throw std::invalid_argument("oracle query dimension mismatch");
  if (t < 0) throw std::invalid_argument("oracle needs t >= 0");
  const int c = m.components();
  const int d = m.dim();

  Eigen::VectorXd logcomp(c);
  for (int i = 0; i < c; ++i) {
    const double v = m.variances[i] + t;
    if (!(v > 0))
      throw std::invalid_argument(
          "degenerate mixture component: variance + t must be positive");
    const double q = (x - m.means.row(i).transpose()).squaredNorm() / v;
    logcomp[i] = std::log(m.weights[i] == 0 ? 1e-300 : m.weights[i]) -
                 0.5 * d * (kLog2Pi + std::log(v)) - 0.5 * q;
  }

  const double shift = logcomp.maxCoeff();
  const Eigen::VectorXd ecomp = (logcomp.array() - shift).exp();
  const double total = ecomp.sum();

  OracleEval out;
  out.logp = shift + std::log(total);
  out.p = std::exp(out.logp);

  const Eigen::VectorXd resp = ecomp / total;
  out.s = Eigen::VectorXd::Zero(d);
  out.g = Eigen::VectorXd::Zero(d);
  out.J = Eigen::MatrixXd::Zero(d, d);
  out.H = Eigen::MatrixXd::Zero(d, d);

  for (int i = 0; i < c; ++i) {
    const double v = m.variances[i] + t;
    const Eigen::VectorXd si = (m.means.row(i).transpose() - x) / v;
    out.s += resp[i] * si;
    // Independent route to g_t: the same component algebra collapsed before
    // normalization, so g/p = s is a checkable identity, not a tautology.
    out.g += m.weights[i] * std::exp(logcomp[i] -
                                     std::log(m.weights[i] == 0
                                                  ? 1e-300
                                                  : m.weights[i])) *
             si;
  }
  for (int i = 0; i < c; ++i) {
    const double v = m.variances[i] + t;
    const Eigen::VectorXd si = (m.means.row(i).transpose() - x) / v;
    out.J += resp[i] * (-Eigen::MatrixXd::Identity(d, d) / v +
                        si * (si - out.s).transpose());
  }
  out.J = 0.5 * (out.J + out.J.transpose().eval());

  if (t > 0) {
    for (int i = 0; i < c; ++i) {
      const double v = m.variances[i] + t;
      const Eigen::VectorXd dmu = m.means.row(i).transpose() - x;
      const double ni = std::exp(logcomp[i] - std::log(m.weights[i] == 0
                                                           ? 1e-300
                                                           : m.weights[i]));
      out.H += m.weights[i] * ni *
               (m.variances[i] / (t * v) * Eigen::MatrixXd::Identity(d, d) +
                dmu * dmu.transpose() / (v * v));
    }
  }
  return out;
}

Eigen::MatrixXd oracle_sample(const GaussianMixture& m, double t,
                              std::int64_t count, std::uint64_t seed) {
  m.validate();
  if (count < 1) throw std::invalid_argument("sample count must be >= 1");
  if (t < 0) throw std::invalid_argument("oracle needs t >= 0");
  const int d = m.dim();
  const int c = m.components();

  Eigen::VectorXd cdf(c);
  double acc = 0;
  for (int i = 0; i < c; ++i) {
    acc += m.weights[i];
    cdf[i] = acc;
  }
  cdf[c - 1] = 1.0;

  const double root_t = std::sqrt(t);
  Eigen::MatrixXd out(count, d);
  parallel_for(count, [&](std::int64_t b, std::int64_t e) {
    for (std::int64_t r = b; r < e; ++r) {
      Philox rng(seed, static_cast<std::uint64_t>(r));
      const double u = rng.next_double();
      int comp = 0;
      while (comp < c - 1 && u >= cdf[comp]) ++comp;
      const double sig = std::sqrt(m.variances[comp]);
      for (int j = 0; j < d; ++j)
        out(r, j) = m.means(comp, j) + sig * rng.next_gaussian();
      if (t > 0)
        for (int j = 0; j < d; ++j) out(r, j) += root_t * rng.next_gaussian();
    }
  });
  return out;
}

TweedieCheck tweedie_mc_check(const GaussianMixture& m,
                              const Eigen::VectorXd& x, double t,
                              std::int64_t mc, std::uint64_t seed) {
  m.validate();
  if (!(t > 0)) throw std::invalid_argument("tweedie check needs t > 0");
  if (mc < 2) throw std::invalid_argument("tweedie check needs mc >= 2");
  const int d = m.dim();

  const Eigen::MatrixXd z0 = oracle_sample(m, 0.0, mc, seed);
  Eigen::VectorXd w(mc);
  Eigen::MatrixXd vals(mc, d);  // per-draw (Z_0 - x)/t
  for (std::int64_t i = 0; i < mc; ++i) {
    const Eigen::VectorXd diff = z0.row(i).transpose() - x;
    w[i] = std::exp(-diff.squaredNorm() / (2.0 * t));
    vals.row(i) = diff.transpose() / t;
  }

  TweedieCheck out;
  const double wsum = w.sum();
  out.ess = wsum * wsum / std::max(w.squaredNorm(), 1e-300);
  out.reliable = out.ess >= 10.0;
  out.estimate = Eigen::VectorXd::Zero(d);
  out.se = Eigen::VectorXd::Zero(d);
  if (wsum <= 0) {
    out.reliable = false;
    return out;
  }
  out.estimate = (vals.transpose() * w) / wsum;
  // Delta-method SE of the self-normalized ratio estimator.
  for (int j = 0; j < d; ++j) {
    double acc = 0;
    for (std::int64_t i = 0; i < mc; ++i) {
      const double r = w[i] * (vals(i, j) - out.estimate[j]);
      acc += r * r;
    }
    out.se[j] = std::sqrt(acc) / wsum;
  }
  return out;
}

}  // namespace flowode
