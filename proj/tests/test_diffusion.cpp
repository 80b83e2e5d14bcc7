#include <cmath>
#include <stdexcept>
#include <vector>

#include "cfglab/diffusion.hpp"
#include "cfglab/rng.hpp"
#include "cfglab/schedule.hpp"
#include "doctest.h"

using namespace cfglab;

TEST_CASE("forward_noise endpoint and interior arithmetic") {
  const std::vector<double> x0{2.0};
  const std::vector<double> eps{1.0};
  CHECK(forward_noise(x0, 1.0, eps)[0] == 2.0);
  CHECK(forward_noise(x0, 0.0, eps)[0] == 1.0);
  CHECK(forward_noise(x0, 0.25, eps)[0] ==
        doctest::Approx(0.5 * 2.0 + std::sqrt(0.75)).epsilon(1e-12));
  CHECK_THROWS_AS(forward_noise(x0, 0.25, {1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("predict_x0 inverts forward_noise") {
  CHECK(predict_x0({0.5 * 2.0 + std::sqrt(0.75)}, {1.0}, 0.25)[0] ==
        doctest::Approx(2.0).epsilon(1e-12));
  CHECK(predict_x0({1.0}, {0.0}, 0.25)[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK_THROWS_AS(predict_x0({1.0}, {0.0}, 0.0), std::invalid_argument);
}

TEST_CASE("round trip holds to 1e-12 relative error down to tiny retention") {
  Rng rng(7);
  for (double ab : {1.0, 0.9, 0.5, 1e-2, 1e-4, 1e-6}) {
    CAPTURE(ab);
    for (int rep = 0; rep < 20; ++rep) {
      const std::vector<double> x0 = rng.normal_vec(3);
      const std::vector<double> eps = rng.normal_vec(3);
      const auto xt = forward_noise(x0, ab, eps);
      const auto back = predict_x0(xt, eps, ab);
      for (std::size_t i = 0; i < x0.size(); ++i) {
        CHECK(back[i] == doctest::Approx(x0[i]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("schedule-indexed overloads agree with coefficient forms") {
  const auto sched = NoiseSchedule::cosine(50);
  const std::vector<double> x0{1.0, -2.0};
  const std::vector<double> eps{0.3, 0.7};
  const auto a = forward_noise(x0, 17, eps, sched);
  const auto b = forward_noise(x0, sched.alpha_bar(17), eps);
  CHECK(a == b);
  CHECK(predict_x0(a, eps, 17, sched) == predict_x0(a, eps, sched.alpha_bar(17)));
}

TEST_CASE("cfg_combine endpoints and direct arithmetic") {
  const std::vector<double> eps_u{1.0, 0.0};
  const std::vector<double> eps_c{3.0, 2.0};
  CHECK(cfg_combine(eps_u, eps_c, 1.0) == eps_c);
  CHECK(cfg_combine(eps_u, eps_c, 0.0) == eps_u);
  const auto v = cfg_combine(eps_u, eps_c, 7.5);
  CHECK(v[0] == 16.0);
  CHECK(v[1] == 15.0);
}

TEST_CASE("cfg_combine is affine in the scale") {
  const std::vector<double> eps_u{0.25, -1.5, 3.0};
  const std::vector<double> eps_c{-2.0, 0.5, 0.125};
  const double a = 2.0, b = 13.0;
  const auto va = cfg_combine(eps_u, eps_c, a);
  const auto vb = cfg_combine(eps_u, eps_c, b);
  const auto vm = cfg_combine(eps_u, eps_c, (a + b) / 2.0);
  for (std::size_t i = 0; i < vm.size(); ++i) {
    CHECK(vm[i] == (va[i] + vb[i]) / 2.0);
  }
}

TEST_CASE("ddpm_step final step collapses to predict_x0 and refuses t=0") {
  const auto sched = NoiseSchedule::cosine(20);
  Rng rng(3);
  LatentState state{rng.normal_vec(2), 1};
  const auto eps_hat = rng.normal_vec(2);
  const auto noise = rng.normal_vec(2);
  const auto next = ddpm_step(state, eps_hat, sched, noise);
  CHECK(next.t == 0);
  CHECK(next.x == predict_x0(state.x, eps_hat, sched.alpha_bar(1)));

  state.t = 0;
  CHECK_THROWS_AS(ddpm_step(state, eps_hat, sched, noise), std::invalid_argument);
}

TEST_CASE("ddpm_step is deterministic given identical inputs") {
  const auto sched = NoiseSchedule::cosine(20);
  Rng rng(11);
  const LatentState state{rng.normal_vec(4), 13};
  const auto eps_hat = rng.normal_vec(4);
  const auto noise = rng.normal_vec(4);
  const auto a = ddpm_step(state, eps_hat, sched, noise);
  const auto b = ddpm_step(state, eps_hat, sched, noise);
  CHECK(a.x == b.x);
  CHECK(a.t == 12);
}

TEST_CASE("ddim_step with zero prediction is a pure rescaling") {
  const auto sched = NoiseSchedule::cosine(20);
  const LatentState state{{2.0, -4.0}, 15};
  const std::vector<double> zero{0.0, 0.0};
  const auto next = ddim_step(state, zero, sched);
  const double ratio = std::sqrt(sched.alpha_bar(14) / sched.alpha_bar(15));
  CHECK(next.x[0] == doctest::Approx(2.0 * ratio).epsilon(1e-14));
  CHECK(next.x[1] == doctest::Approx(-4.0 * ratio).epsilon(1e-14));

  LatentState bad{{1.0, 1.0}, 0};
  CHECK_THROWS_AS(ddim_step(bad, zero, sched), std::invalid_argument);
}

TEST_CASE("normal draws have the right first two moments") {
  Rng rng(99);
  const int n = 200000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sumsq += z * z;
  }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  CHECK(std::abs(mean) < 4.0 / std::sqrt(static_cast<double>(n)));
  CHECK(var == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("mix_seed decorrelates adjacent streams") {
  const auto a = mix_seed(42, 0);
  const auto b = mix_seed(42, 1);
  const auto c = mix_seed(43, 0);
  CHECK(a != b);
  CHECK(a != c);
  // identical inputs give identical streams
  Rng r1(mix_seed(42, 5));
  Rng r2(mix_seed(42, 5));
  for (int i = 0; i < 16; ++i) CHECK(r1.next_u64() == r2.next_u64());
}

TEST_CASE("condition tags") {
  const auto none = Condition::none();
  const auto c1 = Condition::label(1);
  CHECK_FALSE(none.is_conditional());
  CHECK(c1.is_conditional());
  CHECK(c1.class_label() == 1);
  CHECK_THROWS_AS(none.class_label(), std::logic_error);
  CHECK(c1 == Condition::label(1));
  CHECK_FALSE(c1 == none);
}
