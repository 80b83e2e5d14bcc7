#include <cmath>
#include <stdexcept>
#include <vector>

#include "cfglab/training.hpp"
#include "doctest.h"

using namespace cfglab;

namespace {

// four corners, unit-weight split between two classes; tight covariance makes
// a +1 offset well separated for the discriminator example
MixtureWorld corner_world(double a, double shift, double var) {
  auto comp = [&](double x, double y) {
    GaussianComponent g;
    g.weight = 0.5;
    g.mean = {x + shift, y + shift};
    g.cov = {{var, 0.0}, {0.0, var}};
    return g;
  };
  return MixtureWorld::from_components(
      {{comp(-a, -a), comp(-a, a)}, {comp(a, -a), comp(a, a)}}, {0.5, 0.5});
}

std::vector<std::vector<double>> draws(const MixtureWorld& world, int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<double>> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(world.sample_data(Condition::none(), rng));
  return out;
}

}  // namespace

TEST_CASE("capability oracle and dataset builders") {
  const auto world = MixtureWorld::preset("default");

  // class 0 components sit at (-2,-2) and (-2,2); nearest wins
  CHECK(capability_oracle(world, {-2.0, -0.5}, 0) == -2.25);
  CHECK(capability_oracle(world, {-2.0, -2.0}, 0) == 0.0);
  CHECK(capability_oracle(world, {2.0, 2.0}, 1) == 0.0);

  const auto data = make_capability_dataset(world, 300, 9);
  REQUIRE(data.size() == 300);
  for (const auto& ex : data) {
    CHECK(ex.cls >= 0);
    CHECK(ex.cls < 2);
    CHECK(ex.score == capability_oracle(world, ex.x0, ex.cls));
    CHECK(ex.score <= 0.0);
  }

  // preference pairs: same-class draws, labels follow the posterior margin
  const auto pairs = make_preference_pairs(world, 200, 11, 0.5);
  REQUIRE(pairs.size() == 200);
  for (const auto& p : pairs) {
    const int c = p.cond.class_label();
    const double mi = std::log(world.posterior_class_prob(p.x_i, c));
    const double mj = std::log(world.posterior_class_prob(p.x_j, c));
    CHECK(std::abs(mi - mj) > 0.5);
    CHECK(p.i_preferred == (mi > mj));
  }
}

TEST_CASE("class draws follow the priors") {
  const auto world = MixtureWorld::from_components(
      {{GaussianComponent{1.0, {0.0}, {{1.0}}}}, {GaussianComponent{1.0, {3.0}, {{1.0}}}}},
      {0.3, 0.7});
  Rng rng(15);
  int ones = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) ones += draw_class(world, rng);
  CHECK(static_cast<double>(ones) / n == doctest::Approx(0.7).epsilon(0.03));
}

TEST_CASE("training is reproducible and seed-sensitive") {
  const auto world = MixtureWorld::preset("default");
  const auto sched = NoiseSchedule::cosine(200);
  TrainHyper h;
  h.steps = 40;
  h.seed = 5;

  const auto a = train_alignment(world, sched, h);
  const auto b = train_alignment(world, sched, h);
  CHECK(a->net().pack() == b->net().pack());

  h.seed = 6;
  const auto c = train_alignment(world, sched, h);
  CHECK(a->net().pack() != c->net().pack());
  CHECK(a->kind() == "alignment-learned");
}

TEST_CASE("training rejects bad timestep ranges and reports divergence") {
  const auto world = MixtureWorld::preset("default");
  const auto sched = NoiseSchedule::cosine(200);

  TrainHyper bad;
  bad.t_min = -1;
  CHECK_THROWS_AS(train_alignment(world, sched, bad), std::invalid_argument);
  bad.t_min = 150;
  bad.t_max = 100;
  CHECK_THROWS_AS(train_alignment(world, sched, bad), std::invalid_argument);

  // an absurd learning rate blows the parameters up within a few steps
  TrainHyper hot;
  hot.steps = 50;
  hot.lr = 1e9;
  const auto data = make_capability_dataset(world, 200, 3);
  CHECK_THROWS_WITH_AS(train_capability(data, sched, hot),
                       doctest::Contains("diverged at step"), std::runtime_error);

  CHECK_THROWS_AS(train_reward({}, sched, TrainHyper{}), std::invalid_argument);
  CHECK_THROWS_AS(train_capability({}, sched, TrainHyper{}), std::invalid_argument);
  CHECK_THROWS_AS(train_discriminator({}, draws(world, 3, 1), sched, TrainHyper{}),
                  std::invalid_argument);
}

TEST_CASE("alignment scorer separates classes at low noise only") {
  const auto world = MixtureWorld::preset("default");
  const auto sched = NoiseSchedule::cosine(200);

  TrainHyper untrained;
  untrained.steps = 0;
  const auto raw = train_alignment(world, sched, untrained);
  const double auc0 = matched_mismatch_auc(*raw, world, sched, 20, 2000, 71);
  CHECK(auc0 > 0.45);
  CHECK(auc0 < 0.55);

  TrainHyper h;
  h.steps = 2000;
  const auto ev = train_alignment(world, sched, h);
  CHECK(ev->needs_condition());

  // t = T/10: near-perfect matched-pair classification on this world
  CHECK(alignment_accuracy(*ev, world, sched, 20, 2000, 72) >= 0.9);
  // full noise carries no class information
  const double acc_noise = alignment_accuracy(*ev, world, sched, 200, 2000, 73);
  CHECK(acc_noise > 0.45);
  CHECK(acc_noise < 0.55);
  // matched scores dominate mismatched ones below T/4
  CHECK(matched_mismatch_auc(*ev, world, sched, 50, 2000, 74) > 0.9);
}

TEST_CASE("discriminator separates a shifted mixture at low noise") {
  const auto sched = NoiseSchedule::cosine(200);
  const auto real_world = corner_world(2.0, 0.0, 0.1);
  const auto fake_world = corner_world(2.0, 1.0, 0.1);

  const auto real_set = draws(real_world, 4000, 41);
  const auto fake_set = draws(fake_world, 4000, 42);
  const auto held_real = draws(real_world, 1500, 43);
  const auto held_fake = draws(fake_world, 1500, 44);

  TrainHyper h;
  h.steps = 1500;
  h.lr = 0.03;
  const auto ev = train_discriminator(real_set, fake_set, sched, h);
  CHECK(ev->kind() == "discriminator-learned");
  CHECK_FALSE(ev->needs_condition());

  CHECK(two_set_auc(*ev, held_real, held_fake, sched, 0, 91) >= 0.95);
  CHECK(two_set_auc(*ev, held_real, held_fake, sched, 20, 92) >= 0.95);
  // at full noise both sets look the same
  CHECK(two_set_auc(*ev, held_real, held_fake, sched, 200, 93) <= 0.55);

  // real-vs-itself: nothing to learn, held-out AUC stays at chance
  const auto same = train_discriminator(real_set, real_set, sched, h);
  const double auc_same = two_set_auc(*same, held_real, draws(real_world, 1500, 45), sched, 0, 94);
  CHECK(auc_same > 0.45);
  CHECK(auc_same < 0.55);
}

TEST_CASE("reward scorer ranks oracle-labeled preferences") {
  // overlapping classes give informative same-class margins
  const auto world = MixtureWorld::preset("hard");
  const auto sched = NoiseSchedule::cosine(200);

  const auto train_pairs = make_preference_pairs(world, 5000, 21);
  const auto held_pairs = make_preference_pairs(world, 1000, 22);

  // a single random init can correlate with the margin by luck, so the
  // untrained baseline is averaged over inits
  double acc0 = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    TrainHyper untrained;
    untrained.steps = 0;
    untrained.seed = seed;
    const auto raw = train_reward(train_pairs, sched, untrained);
    acc0 += reward_pair_accuracy(*raw, held_pairs, sched, 0, 81);
  }
  acc0 /= 5.0;
  CHECK(acc0 > 0.45);
  CHECK(acc0 < 0.55);

  TrainHyper h;
  const auto ev = train_reward(train_pairs, sched, h);
  CHECK(ev->kind() == "reward-learned");
  CHECK(reward_pair_accuracy(*ev, held_pairs, sched, 0, 82) >= 0.85);

  // swapping every preference inverts the learned ranking
  auto flipped = train_pairs;
  for (auto& p : flipped) p.i_preferred = !p.i_preferred;
  const auto inv = train_reward(flipped, sched, h);
  CHECK(reward_pair_accuracy(*inv, held_pairs, sched, 0, 82) <= 0.15);
}

TEST_CASE("capability regressor recovers the oracle at low noise") {
  const auto world = MixtureWorld::preset("default");
  const auto sched = NoiseSchedule::cosine(200);

  const auto data = make_capability_dataset(world, 4000, 31);
  const auto held = make_capability_dataset(world, 1000, 32);

  TrainHyper h;
  h.steps = 2000;
  h.lr = 0.1;
  h.batch = 256;
  const auto ev = train_capability(data, sched, h);
  CHECK(ev->kind() == "capability-learned");

  const auto low = capability_probe(*ev, held, sched, 20, 55);
  CHECK(low.mse / low.target_variance <= 0.25);
  // full noise: the best prediction is the mean, so the ratio approaches 1
  const auto high = capability_probe(*ev, held, sched, 200, 56);
  CHECK(high.mse / high.target_variance >= 0.75);

  // constant oracle: the de-standardized output pins to the constant
  auto flat_data = data;
  for (auto& ex : flat_data) ex.score = 0.7;
  TrainHyper hc;
  hc.steps = 500;
  const auto flat_ev = train_capability(flat_data, sched, hc);
  CHECK(flat_ev->out_shift() == doctest::Approx(0.7).epsilon(1e-12));
  Rng rng(58);
  for (int i = 0; i < 50; ++i) {
    const int c = draw_class(world, rng);
    const auto x0 = world.sample_data(Condition::label(c), rng);
    const auto xt = forward_noise(x0, 10, rng.normal_vec(2), sched);
    CHECK(flat_ev->score(xt, 10, Condition::label(c)) == doctest::Approx(0.7).epsilon(0.072));
  }
}
