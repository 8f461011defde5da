// Copyright (c) 2026 flowode contributors
// SPDX-License-Identifier: Apache-2.0

#include "flowode/schedule.hpp"

#include <cmath>
#include <stdexcept>

#include <doctest.h>

using namespace flowode;

TEST_CASE("recursion values") {
  CHECK(cum_alpha_first(10, 2.0) == doctest::Approx(0.99).epsilon(1e-14));
  // Hand recursion: 0.99 - (12 ln10 / 10) * 0.99 * 0.01.
  CHECK(cum_alpha_step(0.99, 10, 12.0) ==
        doctest::Approx(0.9626452890952307).epsilon(1e-12));
}

TEST_CASE("construction guards") {
  CHECK_THROWS_AS(build_schedule({1, 2.0, 12.0, 0.0}), std::invalid_argument);
  // c1 log K / K = 2.76 >= 1: rejected rather than clamped.
  CHECK_THROWS_AS(build_schedule({10, 2.0, 12.0, 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(build_schedule({100, -1.0, 12.0, 0.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(build_schedule({100, 2.0, 12.0, -0.5}),
                  std::invalid_argument);
}

TEST_CASE("built schedule shape and monotonicity") {
  const Schedule s = build_schedule({500, 2.0, 12.0, 0.01});
  REQUIRE(s.K() == 500);
  for (int k = 2; k <= s.K(); ++k) {
    CHECK(s.cum_alpha[k - 1] < s.cum_alpha[k - 2]);
    CHECK(s.t[k - 1] > s.t[k - 2]);  // t_of_k increasing in k
  }
  for (int k = 1; k <= s.K(); ++k) {
    CHECK(s.alpha[k - 1] > 0.0);
    CHECK(s.alpha[k - 1] <= 1.0);
    CHECK(s.cum_alpha[k - 1] > 0.0);
    CHECK(s.cum_alpha[k - 1] < 1.0);
  }

  // Reconstruction: prod alpha_i = cum_alpha_k within 1e-12 relative.
  double prod = 1.0;
  for (int k = 1; k <= s.K(); ++k) {
    prod *= s.alpha[k - 1];
    CHECK(std::abs(prod - s.cum_alpha[k - 1]) <=
          1e-12 * std::abs(s.cum_alpha[k - 1]));
  }

  // Stored t matches the formula on stored cum_alpha exactly.
  for (int k = 1; k <= s.K(); ++k)
    CHECK(s.t[k - 1] ==
          (1.0 - s.cum_alpha[k - 1]) / s.cum_alpha[k - 1] + 0.01);
}

TEST_CASE("t_of_k") {
  Schedule s;
  s.cum_alpha.resize(2);
  s.alpha.resize(2);
  s.t.resize(2);
  s.one_minus_cum_alpha.resize(2);
  s.cum_alpha << 0.5, 0.99;  // synthetic values, only t_of_k is exercised
  s.params.tau = 0.0;

  CHECK(t_of_cum_alpha(0.5, 0.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(t_of_cum_alpha(0.99, 0.01) ==
        doctest::Approx(0.0201010101).epsilon(1e-6));
  CHECK(t_of_cum_alpha(1.0, 0.25) == doctest::Approx(0.25).epsilon(1e-15));

  s.t << 1.0, 2.0;
  CHECK(s.t_of_k(1) == 1.0);
  CHECK_THROWS_AS(s.t_of_k(0), std::out_of_range);
  CHECK_THROWS_AS(s.t_of_k(3), std::out_of_range);
}

TEST_CASE("step-size checks over the acceptance parameter sets") {
  // (1000, 2, 12) and (1000, 3, 15) satisfy all four inequality families.
  for (auto [K, c0, c1] : {std::tuple{1000, 2.0, 12.0},
                           std::tuple{1000, 3.0, 15.0}}) {
    const ScheduleParams p{K, c0, c1, 0.0};
    const ValidationReport rep = validate_schedule(build_schedule(p), p);
    CAPTURE(K);
    CAPTURE(c1);
    CHECK(rep.all_pass());
  }

  // (100, 2, 12) has c1 log K / K = 0.5526 > 1/2, so alpha_k drops below
  // 1/2 once cum_alpha is small and the upper bound of family (c) is
  // genuinely violated; (a), (b), (d) still hold.
  const ScheduleParams p100{100, 2.0, 12.0, 0.0};
  const ValidationReport rep = validate_schedule(build_schedule(p100), p100);
  CHECK(rep.checks[0].pass);
  CHECK(rep.checks[1].pass);
  CHECK_FALSE(rep.checks[2].pass);
  CHECK(rep.checks[2].worst_margin > 0.1);
  CHECK(rep.checks[3].pass);
}

TEST_CASE("cum_alpha_K cap") {
  const Schedule s = build_schedule({1000, 2.0, 12.0, 0.0});
  CHECK(s.cum_alpha[999] <= 1e-9);  // K^{-c1/4} = 1000^{-3}
}

TEST_CASE("hand-built increasing cum_alpha fails check (b)") {
  Schedule s = build_schedule({100, 2.0, 12.0, 0.0});
  s.cum_alpha[1] = std::min(1.0 - 1e-12, s.cum_alpha[0] * 1.00001);
  s.one_minus_cum_alpha[1] = 1.0 - s.cum_alpha[1];
  const ValidationReport rep = validate_schedule(s, s.params);
  CHECK_FALSE(rep.checks[1].pass);
  CHECK(rep.checks[1].first_fail_k == 2);
}

TEST_CASE("c1 below 5*c0 warns but builds") {
  const ScheduleParams p{200, 3.0, 12.0, 0.0};
  CHECK(p.warnings().size() == 1);
  const Schedule s = build_schedule(p);
  CHECK(s.K() == 200);
  const ValidationReport rep = validate_schedule(s, p);
  CHECK(rep.warnings.size() == 1);
}
