#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "cfglab/diffusion.hpp"
#include "cfglab/metrics.hpp"
#include "cfglab/rng.hpp"
#include "cfglab/schedule.hpp"
#include "cfglab/world.hpp"
#include "doctest.h"

using namespace cfglab;

namespace {

std::vector<std::vector<double>> gaussian_cloud(Rng& rng, int n, const std::vector<double>& mean,
                                                const std::vector<std::vector<double>>& chol) {
  std::vector<std::vector<double>> out;
  const std::size_t d = mean.size();
  for (int i = 0; i < n; ++i) {
    const auto z = rng.normal_vec(d);
    std::vector<double> x(d, 0.0);
    for (std::size_t r = 0; r < d; ++r) {
      x[r] = mean[r];
      for (std::size_t c = 0; c <= r; ++c) x[r] += chol[r][c] * z[c];
    }
    out.push_back(std::move(x));
  }
  return out;
}

// independent route: tr((Sa^{1/2} Sb Sa^{1/2})^{1/2}) = sum of sqrt eigenvalues of Sa*Sb
double frechet_eig_oracle(const std::vector<std::vector<double>>& a,
                          const std::vector<std::vector<double>>& b) {
  auto moments = [](const std::vector<std::vector<double>>& s, Eigen::VectorXd& mu,
                    Eigen::MatrixXd& cov) {
    const auto n = static_cast<Eigen::Index>(s.size());
    const auto d = static_cast<Eigen::Index>(s[0].size());
    Eigen::MatrixXd m(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < d; ++j) m(i, j) = s[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    mu = m.colwise().mean();
    const Eigen::MatrixXd c = m.rowwise() - mu.transpose();
    cov = c.transpose() * c / static_cast<double>(n - 1);
  };
  Eigen::VectorXd mu_a, mu_b;
  Eigen::MatrixXd cov_a, cov_b;
  moments(a, mu_a, cov_a);
  moments(b, mu_b, cov_b);

  const Eigen::MatrixXd prod = cov_a * cov_b;  // nonsymmetric, same nonzero spectrum
  Eigen::EigenSolver<Eigen::MatrixXd> es(prod);
  double tr_cross = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    tr_cross += std::sqrt(std::max(0.0, es.eigenvalues()[i].real()));
  }
  return (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * tr_cross;
}

}  // namespace

TEST_CASE("identical sample sets have zero distance") {
  Rng rng(7);
  const auto a = gaussian_cloud(rng, 200, {1.0, -1.0}, {{1.0, 0.0}, {0.3, 0.8}});
  CHECK(frechet_gaussian(a, a) < 1e-10);
}

TEST_CASE("one-dimensional closed form") {
  // two-point sets realize exact moments: mean 0 variance 1 vs mean 1 variance 1
  const double r = std::sqrt(0.5);
  const std::vector<std::vector<double>> a{{-r}, {r}};
  const std::vector<std::vector<double>> b{{1.0 - r}, {1.0 + r}};
  CHECK(std::abs(frechet_gaussian(a, b) - 1.0) < 1e-10);

  // (mu_a - mu_b)^2 + (sigma_a - sigma_b)^2 with distinct spreads
  const std::vector<std::vector<double>> c{{-2.0 * r}, {2.0 * r}};  // variance 4
  const double want = 1.0 + (2.0 - 1.0) * (2.0 - 1.0);
  CHECK(std::abs(frechet_gaussian(b, c) - want) < 1e-10);
}

TEST_CASE("matches the eigendecomposition oracle on random 2-D clouds") {
  Rng rng(1234);
  for (int rep = 0; rep < 10; ++rep) {
    const std::vector<double> mean_a{rng.normal(), rng.normal()};
    const std::vector<double> mean_b{rng.normal(), rng.normal()};
    const double la = 0.5 + rng.uniform(), lb = 0.5 + rng.uniform();
    const double oa = 0.4 * rng.uniform(), ob = 0.4 * rng.uniform();
    const auto a = gaussian_cloud(rng, 400, mean_a, {{la, 0.0}, {oa, 0.7 * la}});
    const auto b = gaussian_cloud(rng, 400, mean_b, {{lb, 0.0}, {ob, 1.2 * lb}});
    const double got = frechet_gaussian(a, b);
    const double oracle = frechet_eig_oracle(a, b);
    CHECK(std::abs(got - oracle) < 1e-8);
  }
}

TEST_CASE("symmetry and rotation invariance") {
  Rng rng(88);
  const auto a = gaussian_cloud(rng, 300, {0.5, 0.0}, {{1.0, 0.0}, {0.2, 0.6}});
  const auto b = gaussian_cloud(rng, 300, {-0.5, 1.0}, {{0.7, 0.0}, {-0.1, 1.1}});
  const double d_ab = frechet_gaussian(a, b);
  const double d_ba = frechet_gaussian(b, a);
  CHECK(std::abs(d_ab - d_ba) < 1e-9);

  const double th = 0.83;
  auto rotate = [&](const std::vector<std::vector<double>>& s) {
    std::vector<std::vector<double>> out;
    for (const auto& x : s) {
      out.push_back({std::cos(th) * x[0] - std::sin(th) * x[1],
                     std::sin(th) * x[0] + std::cos(th) * x[1]});
    }
    return out;
  };
  CHECK(std::abs(frechet_gaussian(rotate(a), rotate(b)) - d_ab) < 1e-8);
}

TEST_CASE("degenerate covariance is regularized and flagged") {
  // all mass on a line: second coordinate constant
  std::vector<std::vector<double>> a, b;
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    a.push_back({rng.normal(), 0.0});
    b.push_back({rng.normal(), 0.0});
  }
  const auto res = frechet_gaussian_checked(a, b);
  CHECK(res.regularized);
  CHECK(std::isfinite(res.distance));

  const auto full = gaussian_cloud(rng, 50, {0.0, 0.0}, {{1.0, 0.0}, {0.0, 1.0}});
  CHECK_FALSE(frechet_gaussian_checked(full, full).regularized);
}

TEST_CASE("sample-count and shape preconditions") {
  const std::vector<std::vector<double>> two{{0.0, 0.0}, {1.0, 1.0}};
  const std::vector<std::vector<double>> three{{0.0, 0.0}, {1.0, 1.0}, {2.0, 0.0}};
  CHECK_THROWS_AS(frechet_gaussian(two, three), std::invalid_argument);  // needs d+1 = 3
  CHECK_NOTHROW(frechet_gaussian(three, three));
  const std::vector<std::vector<double>> onedim{{0.0}, {1.0}, {2.0}};
  CHECK_THROWS_AS(frechet_gaussian(three, onedim), std::invalid_argument);
}

TEST_CASE("alignment metric on exact conditional draws") {
  const auto world = MixtureWorld::preset("hard");
  Rng rng(42);
  std::vector<std::vector<double>> samples;
  for (int i = 0; i < 100000; ++i) samples.push_back(world.sample_data(Condition::label(0), rng));
  const double m = alignment_metric(samples, Condition::label(0), world);
  CHECK(m > 0.5);
  CHECK(m < 1.0);
  // Monte Carlo reference for the hard world, pinned from a 10^7-draw run
  CHECK(m == doctest::Approx(0.8505).epsilon(0.005));

  // wrong-class samples on a well-separated world score almost zero
  const auto far = MixtureWorld::preset("default");
  std::vector<std::vector<double>> wrong;
  for (int i = 0; i < 2000; ++i) wrong.push_back(far.sample_data(Condition::label(1), rng));
  CHECK(alignment_metric(wrong, Condition::label(0), far) < 0.05);

  // single-class world: posterior is identically one
  const auto mono = MixtureWorld::standard_normal(2);
  std::vector<std::vector<double>> any{{0.3, 0.1}, {2.0, -1.0}, {0.0, 0.0}};
  CHECK(alignment_metric(any, Condition::label(0), mono) == doctest::Approx(1.0));
}

TEST_CASE("bootstrap interval brackets the true mean") {
  Rng rng(11);
  std::vector<double> values;
  for (int i = 0; i < 400; ++i) values.push_back(1.5 + rng.normal());
  const auto ci = bootstrap_mean_ci(values, 2000, 99);
  CHECK(ci.lo < ci.mean);
  CHECK(ci.mean < ci.hi);
  CHECK(ci.lo < 1.65);
  CHECK(ci.hi > 1.35);
  // deterministic in the seed
  const auto again = bootstrap_mean_ci(values, 2000, 99);
  CHECK(again.lo == ci.lo);
  CHECK(again.hi == ci.hi);
  CHECK_THROWS_AS(bootstrap_mean_ci({}, 100, 1), std::invalid_argument);
}

TEST_CASE("win rate identities") {
  const auto world = MixtureWorld::preset("default");
  const JudgeFn judge = [&](const std::vector<double>& x, const Condition& cond) {
    return world.posterior_class_prob(x, cond.class_label());
  };

  Rng rng(31);
  std::vector<std::vector<double>> a, b;
  std::vector<Condition> conds;
  for (int i = 0; i < 200; ++i) {
    const auto cond = Condition::label(static_cast<int>(rng.uniform_index(2)));
    a.push_back(world.sample_data(cond, rng));
    b.push_back(world.sample_data(cond, rng));
    conds.push_back(cond);
  }

  SUBCASE("all ties score one half") {
    CHECK(win_rate(a, a, judge, conds).rate == 0.5);
  }
  SUBCASE("antisymmetry") {
    const double ab = win_rate(a, b, judge, conds).rate;
    const double ba = win_rate(b, a, judge, conds).rate;
    CHECK(ab + ba == 1.0);
  }
  SUBCASE("right class beats wrong class") {
    std::vector<std::vector<double>> right, wrong;
    std::vector<Condition> cs;
    for (int i = 0; i < 200; ++i) {
      right.push_back(world.sample_data(Condition::label(0), rng));
      wrong.push_back(world.sample_data(Condition::label(1), rng));
      cs.push_back(Condition::label(0));
    }
    CHECK(win_rate(right, wrong, judge, cs).rate > 0.95);
  }
  SUBCASE("unpaired inputs are rejected") {
    auto short_b = b;
    short_b.pop_back();
    CHECK_THROWS_AS(win_rate(a, short_b, judge, conds), std::invalid_argument);
  }
}

TEST_CASE("exact-model reverse chain reproduces the data law") {
  const auto world = MixtureWorld::preset("default");
  const auto sched = NoiseSchedule::cosine(200);
  const int n = 5000;

  for (int c = 0; c < 2; ++c) {
    CAPTURE(c);
    const auto cond = Condition::label(c);

    std::vector<std::vector<double>> truth, generated;
    Rng truth_rng(mix_seed(900, static_cast<std::uint64_t>(c)));
    for (int i = 0; i < n; ++i) truth.push_back(world.sample_data(cond, truth_rng));

    for (int i = 0; i < n; ++i) {
      Rng rng(mix_seed(901, static_cast<std::uint64_t>(c * n + i)));
      LatentState state{rng.normal_vec(2), sched.steps()};
      while (state.t > 0) {
        const auto eps = world.exact_eps(state.x, state.t, cond, sched);
        const auto noise = rng.normal_vec(2);
        state = ddpm_step(state, eps, sched, noise);
      }
      generated.push_back(state.x);
    }
    CHECK(frechet_gaussian(truth, generated) < 0.05);
  }
}

TEST_CASE("deterministic sampler preserves the class-conditional mean") {
  const auto world = MixtureWorld::preset("default");
  const auto sched = NoiseSchedule::cosine(200);
  const int n = 5000;
  const auto cond = Condition::label(1);
  const auto true_mean = world.class_mean(1);

  double sum0 = 0.0, sum1 = 0.0, sq0 = 0.0, sq1 = 0.0;
  for (int i = 0; i < n; ++i) {
    Rng rng(mix_seed(902, static_cast<std::uint64_t>(i)));
    LatentState state{rng.normal_vec(2), sched.steps()};
    while (state.t > 0) {
      const auto eps = world.exact_eps(state.x, state.t, cond, sched);
      state = ddim_step(state, eps, sched);
    }
    sum0 += state.x[0];
    sum1 += state.x[1];
    sq0 += state.x[0] * state.x[0];
    sq1 += state.x[1] * state.x[1];
  }
  const double m0 = sum0 / n, m1 = sum1 / n;
  const double se0 = std::sqrt((sq0 / n - m0 * m0) / n);
  const double se1 = std::sqrt((sq1 / n - m1 * m1) / n);
  CHECK(std::abs(m0 - true_mean[0]) < 3.0 * se0);
  CHECK(std::abs(m1 - true_mean[1]) < 3.0 * se1);
}
