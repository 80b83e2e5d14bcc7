#include <stdexcept>
#include <vector>

#include "cfglab/schedule.hpp"
#include "doctest.h"

using cfglab::NoiseSchedule;

TEST_CASE("cosine schedule satisfies endpoint and monotonicity invariants") {
  for (int T : {20, 200, 1000}) {
    CAPTURE(T);
    const auto sched = NoiseSchedule::cosine(T);
    CHECK(sched.steps() == T);
    CHECK(sched.alpha_bar(0) == 1.0);
    CHECK(sched.alpha_bar(T) < 1e-3);
    CHECK(sched.alpha_bar(T) > 0.0);
    for (int t = 1; t <= T; ++t) {
      CHECK(sched.alpha_bar(t) < sched.alpha_bar(t - 1));
      // per-step retention is capped below by the usual beta ceiling
      CHECK(sched.step_alpha(t) >= 1e-3);
      CHECK(sched.step_alpha(t) < 1.0);
    }
  }
}

TEST_CASE("linear schedule satisfies the same invariants") {
  for (int T : {50, 200, 1000}) {
    CAPTURE(T);
    const auto sched = NoiseSchedule::linear(T);
    CHECK(sched.alpha_bar(0) == 1.0);
    CHECK(sched.alpha_bar(T) < 1e-3);
    CHECK(sched.alpha_bar(T) > 0.0);
    for (int t = 1; t <= T; ++t) {
      CHECK(sched.alpha_bar(t) < sched.alpha_bar(t - 1));
    }
  }
}

TEST_CASE("step_alpha reproduces the cumulative product") {
  const auto sched = NoiseSchedule::cosine(200);
  double acc = 1.0;
  for (int t = 1; t <= 200; ++t) {
    acc *= sched.step_alpha(t);
    CHECK(sched.alpha_bar(t) == doctest::Approx(acc).epsilon(1e-12));
  }
}

TEST_CASE("posterior variance is zero at the final step and below beta elsewhere") {
  const auto sched = NoiseSchedule::cosine(200);
  CHECK(sched.posterior_variance(1) == 0.0);
  for (int t = 2; t <= 200; ++t) {
    const double beta = 1.0 - sched.step_alpha(t);
    CHECK(sched.posterior_variance(t) > 0.0);
    CHECK(sched.posterior_variance(t) < beta);
  }
}

TEST_CASE("construction rejects malformed sequences") {
  CHECK_THROWS_AS(NoiseSchedule::from_alpha_bar({1.0}), std::invalid_argument);
  // first entry must be exactly one
  CHECK_THROWS_AS(NoiseSchedule::from_alpha_bar({0.999, 0.5, 1e-4}), std::invalid_argument);
  // non-monotone
  CHECK_THROWS_AS(NoiseSchedule::from_alpha_bar({1.0, 0.5, 0.6, 1e-4}), std::invalid_argument);
  // terminal value too large
  CHECK_THROWS_AS(NoiseSchedule::from_alpha_bar({1.0, 0.5, 0.01}), std::invalid_argument);
  // zero or negative retention
  CHECK_THROWS_AS(NoiseSchedule::from_alpha_bar({1.0, 0.5, 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(NoiseSchedule::from_alpha_bar({1.0, 0.5, -0.1}), std::invalid_argument);
  // a valid hand-rolled sequence is accepted
  CHECK_NOTHROW(NoiseSchedule::from_alpha_bar({1.0, 0.5, 1e-4}));
}

TEST_CASE("family lookup dispatches and rejects unknown names") {
  CHECK(NoiseSchedule::from_family("cosine", 100).steps() == 100);
  CHECK(NoiseSchedule::from_family("linear", 100).steps() == 100);
  CHECK_THROWS_AS(NoiseSchedule::from_family("quadratic", 100), std::invalid_argument);
}

TEST_CASE("timestep range checks") {
  const auto sched = NoiseSchedule::cosine(10);
  CHECK_THROWS_AS(sched.alpha_bar(-1), std::out_of_range);
  CHECK_THROWS_AS(sched.alpha_bar(11), std::out_of_range);
  CHECK_THROWS_AS(sched.step_alpha(0), std::out_of_range);
  CHECK_THROWS_AS(sched.posterior_variance(0), std::out_of_range);
}
