// Copyright (c) 2026 flowode contributors
// SPDX-License-Identifier: Apache-2.0

#include "flowode/schedule.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace flowode {

namespace {

constexpr double kUnderflowFloor = 1e-300;
constexpr double kRelTol = 1e-12;

// a < b up to roundoff (strict inequalities saturate when both sides agree
// to machine precision).
bool leq_tol(double a, double b) {
  const double scale = std::max({1.0, std::abs(a), std::abs(b)});
  return a <= b + kRelTol * scale;
}

}  // namespace

double ScheduleParams::rate() const { return c1 * std::log(double(K)) / K; }

std::vector<std::string> ScheduleParams::warnings() const {
  std::vector<std::string> w;
  if (c1 < 5.0 * c0) {
    std::ostringstream os;
    os << "c1 = " << c1 << " < 5*c0 = " << 5.0 * c0
       << "; the step-size guarantees assume c1 >= 5*c0";
    w.push_back(os.str());
  }
  return w;
}

double cum_alpha_first(int K, double c0) {
  return 1.0 - std::pow(double(K), -c0);
}

double cum_alpha_step(double prev, int K, double c1) {
  const double q = c1 * std::log(double(K)) / K;
  return prev - q * prev * (1.0 - prev);
}

double t_of_cum_alpha(double cum_alpha, double tau) {
  return (1.0 - cum_alpha) / cum_alpha + tau;
}

double Schedule::t_of_k(int k) const {
  if (k < 1 || k > K()) throw std::out_of_range("schedule step out of range");
  return t[k - 1];
}

Schedule build_schedule(const ScheduleParams& params) {
  if (params.K < 2) throw std::invalid_argument("schedule needs K >= 2");
  if (params.c0 <= 0 || params.c1 <= 0)
    throw std::invalid_argument("schedule needs c0 > 0 and c1 > 0");
  if (params.tau < 0) throw std::invalid_argument("schedule needs tau >= 0");
  if (params.rate() >= 1.0) {
    std::ostringstream os;
    os << "c1*log(K)/K = " << params.rate()
       << " >= 1; the recursion can leave (0,1), rejecting";
    throw std::invalid_argument(os.str());
  }

  const int K = params.K;
  const double q = params.rate();
  Schedule s;
  s.params = params;
  s.cum_alpha.resize(K);
  s.one_minus_cum_alpha.resize(K);
  s.alpha.resize(K);
  s.t.resize(K);

  s.cum_alpha[0] = cum_alpha_first(K, params.c0);
  s.one_minus_cum_alpha[0] = std::pow(double(K), -params.c0);
  for (int k = 2; k <= K; ++k) {
    const double step =
        q * s.cum_alpha[k - 2] * s.one_minus_cum_alpha[k - 2];
    s.cum_alpha[k - 1] = s.cum_alpha[k - 2] - step;
    s.one_minus_cum_alpha[k - 1] = s.one_minus_cum_alpha[k - 2] + step;
  }

  for (int k = 1; k <= K; ++k) {
    const double a = s.cum_alpha[k - 1];
    if (!(a > 0.0) || !(a < 1.0) || a < kUnderflowFloor) {
      std::ostringstream os;
      os << "cum_alpha_" << k << " = " << a << " left (1e-300, 1)";
      throw std::runtime_error(os.str());
    }
    s.alpha[k - 1] = (k == 1) ? a : a / s.cum_alpha[k - 2];
    s.t[k - 1] = t_of_cum_alpha(a, params.tau);
  }
  return s;
}

bool ValidationReport::all_pass() const {
  for (const auto& c : checks)
    if (!c.pass) return false;
  return true;
}

std::string ValidationReport::summary() const {
  std::ostringstream os;
  for (const auto& c : checks) {
    os << (c.pass ? "PASS " : "FAIL ") << c.name;
    if (!c.pass)
      os << " (first violation at k=" << c.first_fail_k
         << ", margin=" << c.worst_margin << ")";
    os << "\n";
  }
  for (const auto& w : warnings) os << "WARN " << w << "\n";
  return os.str();
}

ValidationReport validate_schedule(const Schedule& s,
                                   const ScheduleParams& params) {
  const int K = s.K();
  const double q = params.rate();

  ValidationReport rep;
  rep.warnings = params.warnings();
  rep.checks = {
      {"(a) 1-alpha_k < (1-alpha_k)/(1-cum_alpha_k) <= c1*logK/K", true, -1,
       0},
      {"(b) 1 < (1-cum_alpha_k)/(1-cum_alpha_{k-1}) <= 1 + c1*logK/K", true,
       -1, 0},
      {"(c) c1*logK/K < (1-alpha_k)/(alpha_k-cum_alpha_k) <= 2*c1*logK/K",
       true, -1, 0},
      {"(d) cum_alpha_K <= K^{-c1/4}", true, -1, 0},
  };

  auto fail = [&](int idx, int k, double margin) {
    auto& c = rep.checks[static_cast<std::size_t>(idx)];
    if (c.pass) {
      c.pass = false;
      c.first_fail_k = k;
    }
    c.worst_margin = std::max(c.worst_margin, margin);
  };

  for (int k = 2; k <= K; ++k) {
    const double b = s.one_minus_cum_alpha[k - 1];
    const double b_prev = s.one_minus_cum_alpha[k - 2];
    const double a = s.alpha[k - 1];
    // 1 - alpha_k = rate * (1 - cum_alpha_{k-1}) is an identity of the
    // recursion; evaluating it this way avoids the cancellation in 1 - a.
    const double one_minus_a = q * b_prev;

    const double ra = one_minus_a / b;
    if (!leq_tol(one_minus_a, ra) || !leq_tol(ra, q))
      fail(0, k, std::max(one_minus_a - ra, ra - q));

    const double rb = b / b_prev;
    if (!leq_tol(1.0, rb) || !leq_tol(rb, 1.0 + q))
      fail(1, k, std::max(1.0 - rb, rb - (1.0 + q)));

    // alpha_k - cum_alpha_k = alpha_k * (1 - cum_alpha_{k-1}), again as a
    // product instead of a near-1 subtraction.
    const double rc = one_minus_a / (a * b_prev);
    if (!leq_tol(q, rc) || !leq_tol(rc, 2.0 * q))
      fail(2, k, std::max(q - rc, rc - 2.0 * q));
  }

  const double cap = std::pow(double(K), -params.c1 / 4.0);
  if (!leq_tol(s.cum_alpha[K - 1], cap))
    fail(3, K, s.cum_alpha[K - 1] - cap);

  return rep;
}

}  // namespace flowode
